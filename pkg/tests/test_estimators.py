import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from descentlab import estimators as E
from descentlab import problems as P
from descentlab import schedules as S
from descentlab.errors import Diverged, InvalidArgument, InvalidState, Unsupported


def abc():
    return P.scalar_finite_sum([0.0, 2.0, 4.0])


def test_svrg_at_snapshot_returns_snapshot_grad():
    pb = P.random_finite_sum_quadratic(5, 3, seed=0)
    est = E.SVRG(2)
    w = np.array([0.5, -1.0, 2.0])
    v_hat = est.snapshot(pb, w)
    np.testing.assert_array_equal(v_hat, pb.grad(w))
    for batch in E.all_batches(5, 2):
        np.testing.assert_array_equal(est.peek(pb, w, batch), v_hat)


def test_sarah_hand_example():
    pb = abc()
    est = E.SARAH(1)
    assert est.start(pb, [0.0])[0] == -2.0
    v1 = est.estimate(pb, [0.5], batch=(2,))
    assert v1[0] == -1.5 == pb.grad([0.5])[0]


def test_hybrid_endpoints():
    pb = P.random_finite_sum_quadratic(6, 3, seed=1)
    rng = np.random.default_rng(0)
    w0, w1 = rng.standard_normal(3), rng.standard_normal(3)
    sarah, h0, h1 = E.SARAH(2), E.Hybrid(2, beta=0.0), E.Hybrid(2, beta=1.0)
    for est in (sarah, h0, h1):
        est.start(pb, w0)
    for batch in E.all_batches(6, 2):
        np.testing.assert_array_equal(h0.peek(pb, w1, batch), sarah.peek(pb, w1, batch))
        np.testing.assert_array_equal(h1.peek(pb, w1, batch), E.MiniBatch(2).peek(pb, w1, batch))


def test_uninitialised_state():
    pb = abc()
    with pytest.raises(InvalidState):
        E.SVRG(1).estimate(pb, [0.0])
    with pytest.raises(InvalidState):
        E.SARAH(1).estimate(pb, [0.0])
    with pytest.raises(InvalidArgument):
        E.MiniBatch(4).estimate(pb, [0.0])


def test_enumerated_mean_examples():
    two = P.scalar_finite_sum([1.0, 3.0])
    np.testing.assert_array_equal(E.enumerate_conditional_mean(E.MiniBatch(1), two, [0.0]), two.grad([0.0]))
    pb = abc()
    rng = np.random.default_rng(2)
    for _ in range(10):
        w, w_hat = rng.uniform(-5, 5, 2)
        est = E.SVRG(1)
        est.snapshot(pb, [w_hat])
        assert abs(E.enumerate_conditional_mean(est, pb, [w])[0] - pb.grad([w])[0]) <= 1e-12
    est = E.SVRG(1)
    est.snapshot(pb, [2.0])
    assert E.enumerate_conditional_mean(est, pb, [0.5])[0] == pb.grad([0.5])[0]


def test_sarah_offset_example():
    pb = abc()
    est = E.SARAH(1)
    est.start(pb, [0.0])
    est.prev_v = pb.grad([0.0]) + 0.25
    mean = E.enumerate_conditional_mean(est, pb, [1.0])
    assert abs(mean[0] - (pb.grad([1.0])[0] + 0.25)) <= 1e-12


def _state(kind, pb, rng, b):
    est = E.make_estimator(kind, b=b, beta=0.4)
    if kind == "svrg":
        est.snapshot(pb, rng.standard_normal(pb.dim))
    if kind in ("sarah", "hybrid"):
        est.start(pb, rng.standard_normal(pb.dim))
        est.estimate(pb, rng.standard_normal(pb.dim))
    return est


@pytest.mark.parametrize("kind", ["minibatch", "svrg"])
def test_unbiased_random_states(kind):
    rng = np.random.default_rng(4)
    for k in range(20):
        n = int(rng.integers(2, 9))
        pb = P.random_finite_sum_quadratic(n, 3, seed=k)
        est = _state(kind, pb, rng, int(rng.integers(1, n + 1)))
        w = rng.standard_normal(3)
        assert np.max(np.abs(E.enumerate_conditional_mean(est, pb, w) - pb.grad(w))) <= 1e-12


def test_sarah_bias_law():
    rng = np.random.default_rng(5)
    for k in range(20):
        pb = P.random_finite_sum_quadratic(6, 3, seed=k)
        est = _state("sarah", pb, rng, 2)
        w = rng.standard_normal(3)
        carried = est.prev_v - pb.grad(est.prev_w)
        bias = E.enumerate_conditional_mean(est, pb, w) - pb.grad(w)
        assert np.max(np.abs(bias - carried)) <= 1e-12


def test_svrg_variance_bound_average_smoothness():
    rng = np.random.default_rng(6)
    for k in range(20):
        pb = P.random_finite_sum_quadratic(6, 3, seed=k)
        La = pb.constants.L_avg
        for b in (1, 2, 3):
            est = _state("svrg", pb, rng, b)
            w = rng.standard_normal(3)
            var = E.enumerate_conditional_variance(est, pb, w)
            d = w - est.snapshot_w
            assert var <= La ** 2 * float(d @ d) / b + 1e-9


def test_svrg_variance_not_bounded_by_distance_to_optimum():
    # at w = w* the distance bound is zero but the variance is not
    pb = P.random_finite_sum_quadratic(5, 3, seed=0)
    est = E.SVRG(1)
    est.snapshot(pb, pb.constants.w_star + 3.0)
    assert E.enumerate_conditional_variance(est, pb, pb.constants.w_star) > 1e-3


def test_hybrid_variance_recursion():
    rng = np.random.default_rng(7)
    for k in range(20):
        pb = P.random_finite_sum_quadratic(6, 3, seed=k, indefinite=True)
        La = pb.constants.L_avg
        for b in (1, 2):
            beta = float(rng.uniform(0, 1))
            est = E.Hybrid(b, beta=beta)
            est.start(pb, rng.standard_normal(3))
            est.estimate(pb, rng.standard_normal(3))
            w = est.prev_w + 0.3 * rng.standard_normal(3)
            e = est.prev_v - pb.grad(est.prev_w)
            d = w - est.prev_w
            rhs = ((1 - beta) ** 2 * float(e @ e) + 2 * (1 - beta) ** 2 * La ** 2 * float(d @ d) / b
                   + 2 * beta ** 2 * E.minibatch_variance(pb, w, b))
            assert E.enumerate_conditional_variance(est, pb, w) <= rhs + 1e-9


@pytest.mark.parametrize("b", [1, 2, 3, 5])
def test_sampling_variance_closed_form(b):
    pb = P.random_finite_sum_quadratic(5, 2, seed=3)
    w = np.array([0.3, -0.2])
    assert E.sampling_variance(pb, w, b) == pytest.approx(E.minibatch_variance(pb, w, b), rel=1e-12, abs=1e-14)


def test_enumeration_guard():
    pb = P.random_finite_sum_quadratic(40, 2, seed=0)
    with pytest.raises(Unsupported):
        E.enumerate_conditional_mean(E.MiniBatch(20), pb, np.zeros(2))


def test_sgd_reduces_to_plain_sgd():
    pb = P.random_finite_sum_quadratic(6, 3, seed=2)
    spec = E.SgdDriverSpec(policy=S.Diminishing(0.2), estimator="minibatch", b=2, inner=40)
    run = E.run_unified_sgd(pb, spec, np.ones(3), seed=0)
    assert run.T == 40
    for k in range(run.T):
        np.testing.assert_array_equal(run.iterates[k + 1], run.iterates[k] - run.eta[k] * run.directions[k])
        batch = run.extras["batches"][k]
        np.testing.assert_array_equal(run.directions[k], pb.batch_grad(batch, run.iterates[k]))


def test_svrg_stage_cost():
    pb = P.random_finite_sum_quadratic(10, 3, seed=0)
    spec = E.SgdDriverSpec(policy=S.Constant(0.01), estimator="svrg", b=2, stages=3, inner=5)
    run = E.run_unified_sgd(pb, spec, np.ones(3), seed=0)
    counts = run.oracle_component_grads
    assert counts[5] == 30 and counts[10] == 60 and counts[15] == 90


def test_sarah_stage_cost_and_restart():
    pb = P.random_finite_sum_quadratic(10, 3, seed=0)
    spec = E.SgdDriverSpec(policy=S.Constant(0.01), estimator="sarah", b=2, stages=2, inner=[4, 6])
    run = E.run_unified_sgd(pb, spec, np.ones(3), seed=0)
    assert run.oracle_component_grads[4] == 10 + 2 * 2 * 3
    assert run.oracle_component_grads[10] == run.oracle_component_grads[4] + 10 + 2 * 2 * 5
    np.testing.assert_array_equal(run.directions[4], pb.grad(run.iterates[4]))


def test_uniform_snapshot_and_seed_determinism():
    pb = P.random_finite_sum_quadratic(6, 3, seed=2)
    spec = E.SgdDriverSpec(policy=S.Constant(0.05), estimator="svrg", b=1, stages=4, inner=5, snapshot="uniform")
    a = E.run_unified_sgd(pb, spec, np.ones(3), seed=11)
    b = E.run_unified_sgd(pb, spec, np.ones(3), seed=11)
    c = E.run_unified_sgd(pb, spec, np.ones(3), seed=12)
    assert a.extras["batches"] == b.extras["batches"]
    np.testing.assert_array_equal(a.iterates, b.iterates)
    assert a.extras["batches"] != c.extras["batches"]
    assert len(a.extras["snapshots"]) == 4


@pytest.mark.parametrize("kind", ["svrg", "sarah", "hybrid"])
def test_loopless(kind):
    pb = P.random_finite_sum_quadratic(6, 3, seed=2)
    spec = E.SgdDriverSpec(policy=S.Constant(0.05), estimator=kind, b=1, beta=0.5, inner=200, loopless=0.1)
    run = E.run_unified_sgd(pb, spec, np.ones(3), seed=0)
    assert run.T == 200
    assert 5 <= len(run.extras["refreshes"]) <= 40
    full = E.SgdDriverSpec(policy=S.Constant(0.05), estimator=kind, b=1, inner=10, loopless=1.0)
    assert len(E.run_unified_sgd(pb, full, np.ones(3), seed=0).extras["refreshes"]) == 9


def test_driver_validation_and_divergence():
    with pytest.raises(InvalidArgument):
        E.SgdDriverSpec(policy=S.Constant(0.1), loopless=0.0)
    with pytest.raises(InvalidArgument):
        E.SgdDriverSpec(policy=S.Constant(0.1), stages=-1)
    with pytest.raises(InvalidArgument):
        E.SgdDriverSpec(policy=S.Constant(0.1), stages=2, inner=[1]).inner_lengths()
    pb = abc()
    with pytest.raises(InvalidArgument):
        E.run_unified_sgd(pb, E.SgdDriverSpec(policy=S.Constant(0.1), estimator="svrg"), [0.0])
    spec = E.SgdDriverSpec(policy=S.Constant(1e6), estimator="minibatch", inner=500)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(Diverged) as exc:
            E.run_unified_sgd(pb, spec, [1.0], seed=0)
    assert 0 < exc.value.t <= 500


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), b=st.integers(1, 4))
def test_batches_without_replacement(seed, b):
    pb = P.random_finite_sum_quadratic(5, 2, seed=1)
    spec = E.SgdDriverSpec(policy=S.Constant(0.01), estimator="minibatch", b=b, inner=15)
    run = E.run_unified_sgd(pb, spec, np.zeros(2), seed=seed)
    for batch in run.extras["batches"]:
        assert len(set(batch)) == b and all(0 <= i < 5 for i in batch)
