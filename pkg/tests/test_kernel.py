"""The compiled and pure-Python slot loops must agree bit for bit."""

import os
import subprocess
import sys
import tempfile

import numpy as np
import pytest

from heavytraffic import _kernel_py, estimation, kernel
from heavytraffic.control import CapacityFace, ServiceSet
from heavytraffic.distributions import DistFamily, bernoulli, binomial
from heavytraffic.estimation import EstimatorConfig
from heavytraffic.system import SystemTemplate

compiled = pytest.importorskip("heavytraffic._kernel")

TEMPLATES = {
    "single": SystemTemplate("single_server", 1, "single", DistFamily("bernoulli"), service=(bernoulli(0.5),)),
    "jsq": SystemTemplate("load_balance", 3, "jsq", DistFamily("binomial", 3), service=(bernoulli(0.5),) * 3),
    "random": SystemTemplate("load_balance", 2, "random", DistFamily("binomial", 2), service=(binomial(2, 0.25),) * 2),
    "maxweight": SystemTemplate("schedule", 2, "maxweight", DistFamily("bernoulli"),
                                service_set=ServiceSet(((1, 0), (0, 1), (0, 0))),
                                face=CapacityFace((1, 1), 1, (0.5, 0.5))),
    "maxweight_weighted": SystemTemplate("schedule", 2, "maxweight", DistFamily("binomial", 2),
                                         service_set=ServiceSet(((2, 0), (0, 1), (1, 0))),
                                         face=CapacityFace((0.5, 1), 1, (1.2, 0.4))),
}


def _run(monkeypatch, fn, spec, cfg):
    monkeypatch.setattr(kernel, "run_chunk", fn)
    return estimation.simulate(spec, cfg)


@pytest.mark.parametrize("name", sorted(TEMPLATES))
def test_backends_agree(monkeypatch, name):
    spec = TEMPLATES[name].at(0.1)
    cfg = EstimatorConfig(horizon=150_000, burn_in=20_000, seed=5, batch_count=10,
                          perp_orders=(0.5, 1.0, 2.0), max_samples=5000)
    fast = _run(monkeypatch, compiled.run_chunk, spec, cfg)
    slow = _run(monkeypatch, _kernel_py.run_chunk, spec, cfg)
    assert np.allclose(fast.sums, slow.sums, rtol=1e-12, atol=0)
    assert np.array_equal(fast.sched_counts, slow.sched_counts)
    assert np.array_equal(fast.final_q, slow.final_q)
    assert fast.violations == slow.violations == 0
    if fast.hist is not None:
        assert np.array_equal(fast.hist, slow.hist)
    else:
        assert np.array_equal(fast.buf, slow.buf)


def test_histogram_growth_resumes(monkeypatch):
    """A small starting histogram forces HIST_FULL restarts mid-chunk."""
    monkeypatch.setattr(estimation, "HIST_START", 2)
    spec = TEMPLATES["single"].at(0.02)
    cfg = EstimatorConfig(horizon=200_000, burn_in=1000, seed=1)
    grown = estimation.simulate(spec, cfg)
    monkeypatch.setattr(estimation, "HIST_START", 1 << 16)
    big = estimation.simulate(spec, cfg)
    assert np.array_equal(grown.hist, big.hist)
    assert np.array_equal(grown.sums, big.sums)


def test_backend_flag():
    assert kernel.BACKEND in ("cython", "python")


def test_pure_fallback_selected_by_env():
    code = ("from heavytraffic import kernel; from heavytraffic.cli import main; "
            "print(kernel.BACKEND); raise SystemExit(main(['stein', '--sigma2', '1', '--theta', '1', "
            "'--points', '8', '--out', %r]))")
    env = dict(os.environ, HEAVYTRAFFIC_PURE="1")
    with tempfile.TemporaryDirectory() as tmp:
        out = subprocess.run([sys.executable, "-c", code % tmp], env=env, capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.splitlines()[0] == "python"
