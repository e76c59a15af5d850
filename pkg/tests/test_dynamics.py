import numpy as np
import pytest
from hypothesis import given, strategies as st

from heavytraffic.dynamics import QueueState, step_queue, step_system
from heavytraffic.errors import ValidationError


@pytest.mark.parametrize("q,a,s,expected", [
    (0, 0, 5, (0, 5)), (3, 2, 1, (4, 0)), (1, 1, 3, (0, 1)),
])
def test_step_queue_examples(q, a, s, expected):
    assert step_queue(q, a, s) == expected


def test_step_system_examples():
    st0, rec = step_system(QueueState((0, 0)), (0, 0), (1, 1))
    assert st0.q == (0, 0) and rec.u == (1, 1) and st0.t == 1
    st1, rec = step_system(QueueState((3, 1)), (2, 1), (1, 3))
    assert st1.q == (4, 0) and rec.u == (0, 1)
    st2, rec = step_system(QueueState((5, 2, 0), t=9), (0, 0, 0), (0, 0, 0))
    assert st2.q == (5, 2, 0) and rec.u == (0, 0, 0) and st2.t == 10


def test_validation():
    with pytest.raises(ValidationError):
        step_system(QueueState((0, 0)), (1,), (1, 1))
    with pytest.raises(ValidationError):
        QueueState((-1,))


def test_invariants_many_steps():
    """Non-negativity, conservation, u <= s and u * q' = 0 over 10^5 random steps."""
    rng = np.random.default_rng(2024)
    steps, n = 100_000, 3
    A = rng.integers(0, 4, (steps, n)).tolist()
    S = rng.integers(0, 4, (steps, n)).tolist()
    state = QueueState.empty(n)
    for a, s in zip(A, S):
        new, rec = step_system(state, a, s)
        assert sum(new.q) == sum(state.q) + sum(a) - sum(s) + sum(rec.u)
        for qn, un, sn in zip(new.q, rec.u, s):
            assert qn >= 0 and 0 <= un <= sn and un * qn == 0
        state = new
    assert state.t == steps


@given(st.integers(0, 10**12), st.integers(0, 10**6), st.integers(0, 10**6))
def test_step_queue_property(q, a, s):
    q2, u = step_queue(q, a, s)
    assert q2 >= 0 and 0 <= u <= s and u * q2 == 0
    assert q2 == q + a - s + u
