import math

import numpy as np
import pytest

from descentlab import problems as P
from descentlab import schedules as S
from descentlab.errors import InvalidArgument, Unsupported


def test_diminishing_example():
    assert S.Diminishing(1.0, 1.0, 0.5).next_step(3) == 0.5


def test_staircase_convention():
    pol = S.Staircase(1.0, beta=1.0, nu=1.0, s=3)
    assert [pol.next_step(t) for t in range(7)] == [1.0, 0.5, 0.5, 0.5, 1 / 3, 1 / 3, 1 / 3]


def test_adaptive_example_and_monotone():
    pol = S.AdaptiveAccumulator(1.0, eps=0.0)
    e = np.array([1.0, 0.0])
    steps = [pol.next_step(t, g=e) for t in range(3)]
    assert steps[2] == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert steps == sorted(steps, reverse=True)
    rng = np.random.default_rng(0)
    acc, last = [], math.inf
    pol = S.AdaptiveAccumulator(2.0)
    for t in range(50):
        eta = pol.next_step(t, g=rng.standard_normal(3))
        assert eta <= last
        last = eta
        acc.append(pol.accumulated)
    assert acc == sorted(acc)


def test_diminishing_sums():
    T = 10_000
    eta = np.array([S.Diminishing(1.0, 1.0, 0.5).next_step(t) for t in range(T + 1)])
    assert eta.sum() >= 2 * (math.sqrt(T + 2) - 1) - 1e-9
    assert (eta ** 2).sum() <= 1 + math.log(T + 1)


def test_bb_quadratic_2I():
    pb = P.Quadratic(2.0 * np.eye(3))
    pol = S.BarzilaiBorwein(0.1)
    w0 = np.array([1.0, -2.0, 0.5])
    assert pol.next_step(0, w0, pb.grad(w0)) == 0.1
    w1 = np.array([0.3, 0.7, -1.1])
    assert pol.next_step(1, w1, pb.grad(w1)) == 0.5


def test_bb_rayleigh_range():
    rng = np.random.default_rng(3)
    for k in range(100):
        pb = P.random_quadratic(5, cond=rng.uniform(1, 100), L=rng.uniform(0.5, 5), seed=k)
        lam = np.linalg.eigvalsh(pb.Q)
        pol = S.BarzilaiBorwein(1.0)
        a, b = rng.standard_normal(5), rng.standard_normal(5)
        pol.next_step(0, a, pb.grad(a))
        eta = pol.next_step(1, b, pb.grad(b))
        assert 1 / lam[-1] - 1e-12 <= eta <= 1 / lam[0] + 1e-12


def test_bb_degenerate():
    pol = S.BarzilaiBorwein(0.3)
    w = np.ones(2)
    pol.next_step(0, w, np.ones(2))
    assert pol.next_step(1, 2 * w, np.ones(2)) == 0.3
    assert pol.degenerate


def test_exact_line_search_is_optimal():
    pb = P.random_quadratic(4, cond=50, seed=2)
    w = np.array([1.0, -1.0, 2.0, 0.5])
    g = pb.grad(w)
    eta = S.ExactQuadratic().next_step(0, w, g, pb)
    best = pb.value(w - eta * g)
    for probe in np.random.default_rng(0).uniform(1e-3, 5 * eta, 50):
        assert best <= pb.value(w - probe * g) + 1e-12


def test_exact_line_search_errors():
    pb = P.Quadratic(np.diag([1.0, -1.0]))
    with pytest.raises(Unsupported):
        S.ExactQuadratic().next_step(0, [0.0, 1.0], [0.0, 1.0], pb)
    with pytest.raises(InvalidArgument):
        S.ExactQuadratic().next_step(0, [0.0, 1.0], [0.0, 1.0])


def test_policy_from_dict():
    pb = P.Quadratic(np.diag([1.0, 4.0]))
    pol = S.policy_from_dict({"kind": "constant", "step_over_L": 1.0}, pb)
    assert pol.next_step(0) == pytest.approx(0.25, rel=1e-9)
    pol = S.policy_from_dict({"kind": "diminishing", "C": 1.0, "beta": 1.0, "nu": 0.5})
    assert pol.next_step(3) == 0.5
    with pytest.raises(InvalidArgument):
        S.policy_from_dict({"kind": "constant", "eta": -1})
    with pytest.raises(InvalidArgument):
        S.policy_from_dict({"kind": "cosine"})


def test_positive_steps():
    for pol in (S.Constant(0.1), S.Diminishing(2.0), S.Staircase(1.0, s=4)):
        assert all(pol.next_step(t) > 0 for t in range(100))
