import numpy as np
import pytest

from descentlab import methods as M
from descentlab import problems as P
from descentlab import schedules as S
from descentlab.errors import Diverged, InvalidArgument


def test_gd_lands_on_minimizer():
    pb = P.Quadratic(np.eye(2))
    run = M.run_deterministic(pb, M.GD(), S.Constant(1.0), [2.0, -2.0], 1)
    np.testing.assert_array_equal(run.iterates[1], [0.0, 0.0])
    assert run.T == 1 and len(run.F) == 2 and len(run.eta) == 1


def test_heavy_ball_zero_momentum_is_gd():
    pb = P.random_quadratic(6, seed=1)
    w0 = np.ones(6)
    gd = M.run_deterministic(pb, M.GD(), S.Constant(0.5), w0, 50)
    hb = M.run_deterministic(pb, M.HeavyBall(0.0), S.Constant(0.5), w0, 50)
    np.testing.assert_array_equal(gd.iterates, hb.iterates)


def test_heavy_ball_step():
    pb = P.Quadratic(np.eye(1))
    run = M.run_deterministic(pb, M.HeavyBall(0.5), S.Constant(0.5), [4.0], 2)
    # w1 = 4 - 2 = 2 (w_{-1} = w0); w2 = 2 - 1 + 0.5 (2 - 4) = 0
    np.testing.assert_array_equal(run.iterates[:, 0], [4.0, 2.0, 0.0])


def test_subgradient_step():
    run = M.run_deterministic(P.l1_norm(1), M.Subgradient(), S.Diminishing(1.0, 1.0, 0.5), [2.0], 1)
    assert run.iterates[1, 0] == 1.0


def test_prox_grad_needs_composite():
    with pytest.raises(InvalidArgument):
        M.run_deterministic(P.Quadratic(np.eye(2)), M.ProxGrad(), S.Constant(1.0), [1.0, 1.0], 3)


def test_prox_grad_converges_and_counts():
    pb = P.CompositeL1(P.Quadratic(np.eye(2), [-3.0, 0.5]), lam=1.0)
    run = M.run_deterministic(pb, M.ProxGrad(), S.Constant(1.0), [0.0, 0.0], 5)
    np.testing.assert_allclose(run.iterates[-1], [2.0, 0.0], atol=1e-12)
    assert run.oracle_grads[-1] == 5 and run.oracle_prox[-1] == 5


def test_gd_descent_and_distance():
    pb = P.random_quadratic(10, cond=100, seed=7)
    L = pb.constants.L
    for eta in (0.5 / L, 1.0 / L, 1.9 / L):
        run = M.run_deterministic(pb, M.GD(), S.Constant(eta), np.ones(10), 200)
        drop = run.F[:-1] - eta * (1 - L * eta / 2) * run.grad_norm_sq[:-1]
        assert np.all(run.F[1:] <= drop + 1e-9)
    run = M.run_deterministic(pb, M.GD(), S.Constant(1.0 / L), np.ones(10), 200)
    assert np.all(np.sqrt(run.dist_sq) <= np.sqrt(run.dist_sq[0]) + 1e-9)


def test_theta_half_shift_examples():
    th = M.ThetaSequence("half_shift")
    assert th.theta == 1.0 and th.theta_prev == 0.5
    th.advance()
    assert th.theta == 1.5 and th.momentum() == 0.0
    assert th.slack() == 0.25
    th.advance()
    assert th.momentum() == 0.25


@pytest.mark.parametrize("rule", ["half_shift", "recurrence"])
def test_theta_feasibility(rule):
    th = M.ThetaSequence(rule)
    for _ in range(5000):
        assert th.slack() >= -1e-12 * max(1.0, th.theta ** 2)
        th.advance()


def test_nesterov_records_and_restart():
    pb = P.random_quadratic(8, cond=1e3, seed=2)
    run = M.run_nesterov(pb, "half_shift", np.ones(8), 300)
    assert run.extras["u"].shape == (301, 8)
    assert not run.extras["restarted"].any()
    rr = M.run_nesterov(pb, M.ThetaSequence("recurrence"), np.ones(8), 300, restart="function_value")
    assert rr.extras["restarted"].any()
    assert rr.F_gap[-1] <= run.F_gap[-1]
    with pytest.raises(InvalidArgument):
        M.run_nesterov(pb, "half_shift", np.ones(8), 10, restart="gradient")


def test_dual_averaging_example():
    # grad at 0 is (1, 0); grad at w1 = (-0.1, 0) is (0, 1)
    pb = P.Quadratic([[10.0, -10.0], [-10.0, 20.0]], [1.0, 0.0])
    run = M.run_dual_averaging(pb, 1.0, 0.1, [0.0, 0.0], 2)
    np.testing.assert_allclose(run.directions, [[1.0, 0.0], [0.0, 1.0]], atol=1e-15)
    np.testing.assert_allclose(run.iterates[2], [-0.1, -0.1], atol=1e-15)


def test_dual_averaging_single_step_is_gd():
    pb = P.random_quadratic(3, seed=9)
    da = M.run_dual_averaging(pb, 2.0, 0.1, np.ones(3), 1)
    gd = M.run_deterministic(pb, M.GD(), S.Constant(0.2), np.ones(3), 1)
    np.testing.assert_array_equal(da.iterates, gd.iterates)


def test_dual_averaging_equals_gd():
    for k in range(5):
        pb = P.random_quadratic(6, cond=50, seed=k)
        rng = np.random.default_rng(k)
        gam = rng.uniform(0.5, 1.5, 500)
        eta = 0.5 / pb.constants.L
        da = M.run_dual_averaging(pb, tuple(gam), eta, np.ones(6), 500)
        gd = M.run_deterministic(pb, M.GD(), S.Explicit(eta * gam), np.ones(6), 500)
        assert np.max(np.abs(da.iterates - gd.iterates)) <= 1e-12


def test_noisy_gd_is_seeded():
    pb = P.random_quadratic(4, seed=0)
    a = M.run_deterministic(pb, M.NoisyGD(0.1, seed=3), S.Constant(0.1), np.ones(4), 20)
    b = M.run_deterministic(pb, M.NoisyGD(0.1, seed=3), S.Constant(0.1), np.ones(4), 20)
    c = M.run_deterministic(pb, M.NoisyGD(0.1, seed=4), S.Constant(0.1), np.ones(4), 20)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    assert not np.array_equal(a.iterates, c.iterates)


def test_divergence_reports_t():
    pb = P.Quadratic(np.eye(1))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(Diverged) as exc:
            M.run_deterministic(pb, M.GD(), S.Constant(1e10), [1.0], 100)
    assert exc.value.t > 0 and "diverged" in str(exc.value)


def test_rows_and_counters():
    pb = P.Quadratic(np.eye(2))
    run = M.run_deterministic(pb, M.GD(), S.Constant(0.5), [1.0, 1.0], 4)
    rows = list(run.rows())
    assert len(rows) == 5 and len(rows[0]) == len(M.CSV_COLUMNS)
    assert rows[-1][5] is None
    assert [r[6] for r in rows] == [0, 1, 2, 3, 4]


def test_bad_horizon_and_method():
    pb = P.Quadratic(np.eye(1))
    with pytest.raises(InvalidArgument):
        M.run_deterministic(pb, M.GD(), S.Constant(1.0), [1.0], 0)
    with pytest.raises(InvalidArgument):
        M.method_from_dict({"kind": "newton"})
    with pytest.raises(InvalidArgument):
        M.run_deterministic(pb, M.HeavyBall(1.0), S.Constant(0.1), [1.0], 2)
