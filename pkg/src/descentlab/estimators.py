"""Stochastic gradient estimators and the unified two-loop SGD driver.

Estimators work on finite sums ``F = (1/n) sum_i F_i``.  A batch is drawn
uniformly without replacement; ``peek`` evaluates the estimator on a given
batch without touching state, which is what the exact enumeration routines
use.  ``estimate`` samples, evaluates and commits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from . import prox as proxlib
from .errors import InvalidArgument, InvalidState, Unsupported
from .methods import _Tracer
from .problems import as_weights
from .schedules import StepPolicy

ENUMERATION_GUARD = 10 ** 6


class Estimator:
    kind = "estimator"
    needs_snapshot = False
    recursive = False

    def __init__(self, b=1, rng=None):
        if int(b) != b or b < 1:
            raise InvalidArgument("batch size must be an integer >= 1")
        self.b = int(b)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.calls = 0  # component-gradient evaluations
        self.last_v = None

    def _check_batch(self, problem):
        if self.b > problem.n_components:
            raise InvalidArgument(f"batch size {self.b} exceeds n = {problem.n_components}")

    def sample(self, problem):
        self._check_batch(problem)
        return tuple(int(i) for i in self.rng.choice(problem.n_components, size=self.b, replace=False))

    def peek(self, problem, w, batch):
        raise NotImplementedError

    def commit(self, w, v):
        self.last_v = v

    def cost(self):
        return 2 * self.b

    def estimate(self, problem, w, batch=None):
        w = as_weights(w, problem.dim)
        if batch is None:
            batch = self.sample(problem)
        v = self.peek(problem, w, batch)
        self.calls += self.cost()
        self.commit(w, v)
        return v

    def full_gradient(self, problem, w):
        self.calls += problem.n_components
        return problem.grad(w)


class MiniBatch(Estimator):
    """``v = (1/b) sum_{i in S} grad F_i(w)``."""

    kind = "minibatch"

    def cost(self):
        return self.b

    def peek(self, problem, w, batch):
        return problem.batch_grad(batch, w)


class SVRG(Estimator):
    """``v = v_hat + g_S(w) - g_S(w_hat)`` around a snapshot ``w_hat``."""

    kind = "svrg"
    needs_snapshot = True

    def __init__(self, b=1, rng=None):
        super().__init__(b, rng)
        self.snapshot_w = None
        self.snapshot_grad = None

    def snapshot(self, problem, w):
        self.snapshot_w = as_weights(w, problem.dim).copy()
        self.snapshot_grad = self.full_gradient(problem, self.snapshot_w)
        return self.snapshot_grad

    def peek(self, problem, w, batch):
        if self.snapshot_w is None:
            raise InvalidState("SVRG estimator used before a snapshot was taken")
        return self.snapshot_grad + (problem.batch_grad(batch, w) - problem.batch_grad(batch, self.snapshot_w))


class SARAH(Estimator):
    """Recursive estimator ``v_t = v_{t-1} + g_S(w_t) - g_S(w_{t-1})``."""

    kind = "sarah"
    recursive = True

    def __init__(self, b=1, rng=None):
        super().__init__(b, rng)
        self.prev_w = None
        self.prev_v = None
        self.t = 0

    def start(self, problem, w):
        """Set ``v_0`` to the exact full gradient at ``w``."""
        self.prev_w = as_weights(w, problem.dim).copy()
        self.prev_v = self.full_gradient(problem, self.prev_w)
        self.last_v = self.prev_v
        self.t = 0
        return self.prev_v

    def _require(self):
        if self.prev_w is None:
            raise InvalidState(f"{self.kind} estimator used before start()")

    def peek(self, problem, w, batch):
        self._require()
        return self.prev_v + problem.batch_grad(batch, w) - problem.batch_grad(batch, self.prev_w)

    def commit(self, w, v):
        self.prev_w, self.prev_v, self.last_v = w.copy(), v, v
        self.t += 1


class Hybrid(SARAH):
    """``v_t = (1 - beta_t)[v_{t-1} + g_S(w_t) - g_S(w_{t-1})] + beta_t g_S(w_t)``.

    The unbiased part ``u_t`` is the mini-batch gradient on the same batch.
    ``beta`` is a constant in ``[0, 1]`` or a callable of the inner counter.
    """

    kind = "hybrid"

    def __init__(self, b=1, beta=0.0, rng=None):
        super().__init__(b, rng)
        self.beta = beta

    def beta_at(self, t):
        beta = self.beta(t) if callable(self.beta) else float(self.beta)
        if not 0.0 <= beta <= 1.0:
            raise InvalidArgument(f"hybrid weight beta must lie in [0, 1], got {beta}")
        return beta

    def peek(self, problem, w, batch):
        self._require()
        beta = self.beta_at(self.t + 1)
        g_now = problem.batch_grad(batch, w)
        sarah = self.prev_v + g_now - problem.batch_grad(batch, self.prev_w)
        return (1.0 - beta) * sarah + beta * g_now


ESTIMATORS = {"minibatch": MiniBatch, "svrg": SVRG, "sarah": SARAH, "hybrid": Hybrid}


def make_estimator(kind, b=1, beta=0.0, rng=None):
    if kind not in ESTIMATORS:
        raise InvalidArgument(f"unknown estimator kind {kind!r}")
    if kind == "hybrid":
        return Hybrid(b=b, beta=beta, rng=rng)
    return ESTIMATORS[kind](b=b, rng=rng)


def estimate(state, problem, w):
    return state.estimate(problem, w)


def all_batches(n, b):
    if math.comb(n, b) > ENUMERATION_GUARD:
        raise Unsupported(f"C({n}, {b}) batches exceed the enumeration guard {ENUMERATION_GUARD}")
    return list(combinations(range(n), b))


def enumerate_estimates(state, problem, w):
    """Estimator values over every batch of size ``b`` (state is not modified)."""
    w = as_weights(w, problem.dim)
    return [state.peek(problem, w, batch) for batch in all_batches(problem.n_components, state.b)]


def enumerate_conditional_mean(state, problem, w):
    """Exact ``E[v | past]`` by averaging over all ``C(n, b)`` batches."""
    vals = enumerate_estimates(state, problem, w)
    return sum(vals[1:], vals[0].copy()) / len(vals)


def enumerate_conditional_variance(state, problem, w):
    """Exact ``E[||v - grad F(w)||^2 | past]``."""
    g = problem.grad(w)
    vals = enumerate_estimates(state, problem, w)
    return sum(float((v - g) @ (v - g)) for v in vals) / len(vals)


def minibatch_variance(problem, w, b=1):
    """Exact variance of the size-``b`` mini-batch gradient at ``w``."""
    return enumerate_conditional_variance(MiniBatch(b), problem, w)


@dataclass
class SgdDriverSpec:
    """Configuration of the unified SGD method.

    ``stages = 0`` runs a single loop of ``inner`` iterations.  With
    ``loopless = rho`` the run is a single loop of ``sum(inner)`` iterations in
    which the snapshot (SVRG) or full-gradient restart (SARAH/hybrid) fires
    independently with probability ``rho``.
    """

    policy: StepPolicy
    estimator: str = "minibatch"
    b: int = 1
    beta: float | Callable = 0.0
    stages: int = 0
    inner: int | list = 10
    snapshot: str = "last"
    loopless: float | None = None
    projection: object = None

    def __post_init__(self):
        if self.stages < 0:
            raise InvalidArgument("number of stages must be >= 0")
        if self.snapshot not in ("last", "uniform"):
            raise InvalidArgument(f"unknown snapshot rule {self.snapshot!r}")
        if self.loopless is not None and not 0.0 < self.loopless <= 1.0:
            raise InvalidArgument("loopless probability must lie in (0, 1]")
        if self.estimator not in ESTIMATORS:
            raise InvalidArgument(f"unknown estimator kind {self.estimator!r}")

    def inner_lengths(self):
        if isinstance(self.inner, (list, tuple)):
            lengths = [int(x) for x in self.inner]
            if self.stages and len(lengths) != self.stages:
                raise InvalidArgument("need one inner length per stage")
        else:
            lengths = [int(self.inner)] * max(self.stages, 1)
        if any(x < 1 for x in lengths):
            raise InvalidArgument("inner lengths must be >= 1")
        return lengths


def run_unified_sgd(problem, spec, w0, seed=0):
    """Run the unified stochastic gradient template and record every iterate.

    Component-gradient evaluations (snapshot full gradients count ``n``) are
    tallied in ``oracle_component_grads``.
    """
    if problem.n_components < 1:
        raise InvalidArgument("stochastic driver needs a finite-sum problem")
    rng = np.random.default_rng(seed)
    est = make_estimator(spec.estimator, b=spec.b, beta=spec.beta, rng=rng)
    est._check_batch(problem)
    tr = _Tracer(problem, f"sgd_{spec.estimator}", seed=seed)
    batches, snapshots, refreshes = [], [], []
    policy = spec.policy
    w = as_weights(w0, problem.dim).copy()
    k = 0

    def step(w, v):
        nonlocal k
        eta = policy.next_step(k, w, v, problem)
        w_new = w - eta * v
        if spec.projection is not None:
            w_new = proxlib.prox(spec.projection, w_new, gamma=eta)
        tr.step(eta, v)
        tr.comp = est.calls
        tr.observe(w_new)
        k += 1
        return w_new

    def draw(w):
        batch = est.sample(problem)
        batches.append(batch)
        return est.estimate(problem, w, batch)

    tr.observe(w)
    lengths = spec.inner_lengths()
    if spec.stages == 0 or spec.loopless is not None:
        total = sum(lengths) if spec.loopless is not None else lengths[0]
        if est.needs_snapshot:
            if spec.loopless is None:
                raise InvalidArgument("SVRG without stages needs a loopless probability")
            est.snapshot(problem, w)
            snapshots.append(w.copy())
        for t in range(total):
            refresh = t > 0 and spec.loopless is not None and est.kind != "minibatch" and rng.random() < spec.loopless
            if refresh:
                refreshes.append(t)
            if est.recursive and (t == 0 or refresh):
                v = est.start(problem, w)
                batches.append(None)
            else:
                if refresh:
                    est.snapshot(problem, w)
                    snapshots.append(w.copy())
                v = draw(w)
            w = step(w, v)
    else:
        w_hat = w.copy()
        for s, T_s in enumerate(lengths):
            if est.needs_snapshot:
                est.snapshot(problem, w_hat)
            snapshots.append(w_hat.copy())
            w = w_hat.copy()
            stage = [w.copy()]
            for t in range(T_s):
                if est.recursive and t == 0:
                    v = est.start(problem, w)
                    batches.append(None)
                else:
                    v = draw(w)
                w = step(w, v)
                stage.append(w.copy())
            if spec.snapshot == "last":
                w_hat = stage[-1]
            else:
                w_hat = stage[int(rng.integers(len(stage)))]
    tr.extras.update(batches=batches, snapshots=snapshots, refreshes=refreshes,
                     estimator=spec.estimator, b=spec.b)
    return tr.finish()


def sampling_variance(problem, w, b=1):
    """Closed-form variance of the size-``b`` without-replacement mini-batch gradient.

    Equals :func:`minibatch_variance` without enumerating batches:
    ``(n - b) / (b (n - 1))`` times the per-component spread.
    """
    G = problem.component_grads(w)
    n = G.shape[0]
    if not 1 <= b <= n:
        raise InvalidArgument(f"batch size {b} outside [1, {n}]")
    if n == 1:
        return 0.0
    dev = G - G.mean(axis=0)
    spread = float(np.einsum("ij,ij->", dev, dev)) / n
    return spread * (n - b) / (b * (n - 1))
