"""Backend selection for the slot loop.

The compiled extension is used when it imports; setting the environment
variable ``HEAVYTRAFFIC_PURE=1`` forces the pure-Python loop.
"""

import os

from . import _kernel_py

BACKEND = "python"
run_chunk = _kernel_py.run_chunk

if os.environ.get("HEAVYTRAFFIC_PURE", "") not in ("1", "true", "yes"):
    try:
        from ._kernel import run_chunk  # noqa: F811
    except ImportError:
        pass
    else:
        BACKEND = "cython"

N_FIXED = _kernel_py.N_FIXED
FIXED, JSQ, RANDOM, MAXWEIGHT = _kernel_py.FIXED, _kernel_py.JSQ, _kernel_py.RANDOM, _kernel_py.MAXWEIGHT
DONE, HIST_FULL, DIVERGED = _kernel_py.DONE, _kernel_py.HIST_FULL, _kernel_py.DIVERGED
STAT, U, U2, CROSS, SERV, SAT, STAT2 = range(7)
