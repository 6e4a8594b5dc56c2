"""Deterministic iteration engines built on ``w_{t+1} = P(w_t + eta_t d_t)``.

Engines: gradient descent, subgradient, proximal gradient, heavy ball,
noisy gradient (:func:`run_deterministic`), Nesterov acceleration in its
three-sequence form with optional function-value restart
(:func:`run_nesterov`) and Euclidean dual averaging
(:func:`run_dual_averaging`).  Every engine returns a :class:`RunRecord`
holding the full iterate history plus the instrumentation the certificate
engine needs.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import prox as proxlib
from .errors import Diverged, InvalidArgument
from .problems import CompositeL1, as_weights

CSV_COLUMNS = ("t", "F", "F_gap", "grad_norm_sq", "dist_sq", "eta", "oracle_grads", "oracle_prox")


@dataclass(frozen=True)
class GD:
    pass


@dataclass(frozen=True)
class Subgradient:
    pass


@dataclass(frozen=True)
class ProxGrad:
    spec: object = None  # defaults to the problem's own regulariser


@dataclass(frozen=True)
class HeavyBall:
    beta: float | Callable = 0.5


@dataclass(frozen=True)
class Nesterov:
    rule: str = "half_shift"
    restart: str | None = None


@dataclass(frozen=True)
class DualAveraging:
    gamma: float | Callable | tuple = 1.0
    eta: float = 0.1


@dataclass(frozen=True)
class NoisyGD:
    sigma: float = 0.1
    seed: int = 0


METHOD_KINDS = {
    "gd": GD,
    "subgradient": Subgradient,
    "prox_grad": ProxGrad,
    "heavy_ball": HeavyBall,
    "nesterov": Nesterov,
    "dual_averaging": DualAveraging,
    "noisy_gd": NoisyGD,
}


def method_name(method):
    for name, cls in METHOD_KINDS.items():
        if type(method) is cls:
            return name
    return type(method).__name__.lower()


@dataclass(eq=False)
class RunRecord:
    """Full history of one run.

    Per-iterate arrays have ``T + 1`` rows (``t = 0..T``); per-step arrays
    (``eta``, ``directions``) have ``T`` rows, entry ``t`` being the step
    taken from ``w_t`` to ``w_{t+1}``.  Oracle counters are cumulative: entry
    ``t`` counts the calls spent to produce ``w_0..w_t``.
    """

    method: str
    iterates: np.ndarray
    F: np.ndarray
    grad_norm_sq: np.ndarray
    dist_sq: np.ndarray
    eta: np.ndarray
    directions: np.ndarray
    oracle_grads: np.ndarray
    oracle_component_grads: np.ndarray
    oracle_prox: np.ndarray
    oracle_values: np.ndarray
    F_star: float | None = None
    seed: int | None = None
    config_hash: str | None = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def T(self):
        return len(self.iterates) - 1

    @property
    def F_gap(self):
        if self.F_star is None:
            return np.full_like(self.F, np.nan)
        return self.F - self.F_star

    def rows(self):
        """CSV rows in :data:`CSV_COLUMNS` order; undefined cells are ``None``."""
        gap = self.F_gap
        for t in range(self.T + 1):
            yield (
                t,
                float(self.F[t]),
                None if self.F_star is None else float(gap[t]),
                float(self.grad_norm_sq[t]),
                None if math.isnan(self.dist_sq[t]) else float(self.dist_sq[t]),
                float(self.eta[t]) if t < self.T else None,
                int(self.oracle_grads[t] + self.oracle_component_grads[t]),
                int(self.oracle_prox[t]),
            )


class _Tracer:
    """Accumulates iterates and counters while an engine runs."""

    def __init__(self, problem, method, seed=None):
        self.problem = problem
        self.method = method
        self.seed = seed
        c = problem.constants
        self.F_star = c.F_star
        self.w_star = c.w_star
        self.iterates, self.F, self.gns, self.dist = [], [], [], []
        self.eta, self.dirs = [], []
        self.grads = self.comp = self.proxes = self.values = 0
        self.cum = {"grads": [], "comp": [], "prox": [], "values": []}
        self.extras = {}
        self.start = time.perf_counter()

    def observe(self, w):
        w = np.array(w, dtype=float)
        if not np.all(np.isfinite(w)):
            raise Diverged(len(self.iterates), self.finish())
        self.iterates.append(w)
        self.F.append(self.problem.value(w))
        self.gns.append(self.problem.stationarity(w))
        if self.w_star is not None:
            d = w - self.w_star
            self.dist.append(float(d @ d))
        else:
            self.dist.append(math.nan)
        self.cum["grads"].append(self.grads)
        self.cum["comp"].append(self.comp)
        self.cum["prox"].append(self.proxes)
        self.cum["values"].append(self.values)

    def step(self, eta, direction):
        self.eta.append(float(eta))
        self.dirs.append(np.array(direction, dtype=float))

    def finish(self):
        p = self.problem.dim
        return RunRecord(
            method=self.method,
            iterates=np.array(self.iterates).reshape(-1, p),
            F=np.array(self.F, dtype=float),
            grad_norm_sq=np.array(self.gns, dtype=float),
            dist_sq=np.array(self.dist, dtype=float),
            eta=np.array(self.eta[: max(len(self.iterates) - 1, 0)], dtype=float),
            directions=np.array(self.dirs[: max(len(self.iterates) - 1, 0)]).reshape(-1, p),
            oracle_grads=np.array(self.cum["grads"], dtype=np.int64),
            oracle_component_grads=np.array(self.cum["comp"], dtype=np.int64),
            oracle_prox=np.array(self.cum["prox"], dtype=np.int64),
            oracle_values=np.array(self.cum["values"], dtype=np.int64),
            F_star=self.F_star,
            seed=self.seed,
            wall_time=time.perf_counter() - self.start,
            extras=self.extras,
        )


def _check_T(T):
    if int(T) != T or T < 1:
        raise InvalidArgument("horizon T must be an integer >= 1")
    return int(T)


def _momentum(beta, t):
    b = beta(t) if callable(beta) else beta
    if not 0.0 <= b < 1.0:
        raise InvalidArgument(f"heavy-ball momentum must lie in [0, 1), got {b}")
    return b


def run_deterministic(problem, method, policy, w0, T):
    """Run ``T`` steps of ``method`` from ``w0`` with step policy ``policy``.

    Nesterov and dual averaging are forwarded to their own engines; the
    policy is ignored for them.
    """
    if isinstance(method, Nesterov):
        return run_nesterov(problem, ThetaSequence(method.rule), w0, T, restart=method.restart)
    if isinstance(method, DualAveraging):
        return run_dual_averaging(problem, method.gamma, method.eta, w0, T)
    T = _check_T(T)
    w = as_weights(w0, problem.dim).copy()
    name = method_name(method)
    tr = _Tracer(problem, name, seed=getattr(method, "seed", None))

    spec = None
    if isinstance(method, ProxGrad):
        if not isinstance(problem, CompositeL1):
            raise InvalidArgument("proximal gradient needs a composite problem")
        spec = method.spec if method.spec is not None else proxlib.spec_for(problem)
    rng = np.random.default_rng(method.seed) if isinstance(method, NoisyGD) else None
    w_prev = w.copy()

    tr.observe(w)
    for t in range(T):
        if isinstance(method, Subgradient):
            g = problem.subgradient(w)
        else:
            g = problem.grad(w)
        tr.grads += 1
        eta = policy.next_step(t, w, g, problem)
        if isinstance(method, NoisyGD):
            d = g + method.sigma * rng.standard_normal(problem.dim)
        else:
            d = g
        if spec is not None:
            w_new = proxlib.prox(spec, w - eta * d, gamma=eta)
            tr.proxes += 1
        elif isinstance(method, HeavyBall):
            w_new = w - eta * d + _momentum(method.beta, t) * (w - w_prev)
        else:
            w_new = w - eta * d
        tr.step(eta, d)
        w_prev, w = w, w_new
        tr.observe(w)
    return tr.finish()


class ThetaSequence:
    """Momentum weights ``theta_t`` with ``theta_0 = 1`` and ``theta_{-1} = 1/2``.

    ``half_shift`` uses ``theta_{t-1} = (t+1)/2``; ``recurrence`` takes the
    largest root of ``theta_t (theta_t - 1) = theta_{t-1}^2``.
    """

    RULES = ("half_shift", "recurrence")

    def __init__(self, rule="half_shift"):
        if rule not in self.RULES:
            raise InvalidArgument(f"unknown theta rule {rule!r}")
        self.rule = rule
        self.reset()

    def reset(self):
        self.k = 0
        self.theta_prev = 0.5
        self.theta = 1.0

    def advance(self):
        self.k += 1
        prev = self.theta
        if self.rule == "half_shift":
            new = (self.k + 2) / 2.0
        else:
            new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * prev * prev))
        self.theta_prev, self.theta = prev, new

    def slack(self):
        return self.theta_prev ** 2 - self.theta * (self.theta - 1.0)

    def momentum(self):
        """Equivalent heavy-ball coefficient ``(theta_{t-1} - 1) / theta_t``."""
        return (self.theta_prev - 1.0) / self.theta


def run_nesterov(problem, theta, w0, T, restart=None):
    """Accelerated gradient in three-sequence form with step ``1/L``.

    ``restart="function_value"`` resets the anchor ``u`` to the new iterate
    and ``theta`` to its initial value whenever ``F`` increases.
    """
    T = _check_T(T)
    if restart not in (None, "none", "function_value"):
        raise InvalidArgument(f"unknown restart rule {restart!r}")
    L = problem.constants.L
    if L is None or not L > 0:
        raise InvalidArgument("Nesterov's method needs a certified L > 0")
    if isinstance(theta, str):
        theta = ThetaSequence(theta)
    w = as_weights(w0, problem.dim).copy()
    u = w.copy()
    tr = _Tracer(problem, "nesterov")
    us, th_prev, th, betas, slacks, restarted = [u.copy()], [theta.theta_prev], [], [], [], []
    tr.observe(w)
    F_w = tr.F[-1]
    for t in range(T):
        th.append(theta.theta)
        betas.append(theta.momentum())
        slacks.append(theta.slack())
        inv = 1.0 / theta.theta
        z = (1.0 - inv) * w + inv * u
        gz = problem.grad(z)
        tr.grads += 1
        w_new = z - gz / L
        u_new = u - (theta.theta / L) * gz
        tr.step(1.0 / L, gz)
        tr.observe(w_new)
        F_new = tr.F[-1]
        did_restart = False
        if restart == "function_value":
            tr.values += 1
            if F_new > F_w:
                u_new = w_new.copy()
                theta.reset()
                did_restart = True
        if not did_restart:
            theta.advance()
        restarted.append(did_restart)
        w, u, F_w = w_new, u_new, F_new
        us.append(u.copy())
        th_prev.append(theta.theta_prev)
    tr.extras.update(
        u=np.array(us),
        theta_prev=np.array(th_prev),
        theta=np.array(th),
        momentum=np.array(betas),
        theta_slack=np.array(slacks),
        restarted=np.array(restarted, dtype=bool),
        L=L,
    )
    return tr.finish()


def _weight(gamma, j):
    if callable(gamma):
        return float(gamma(j))
    if np.ndim(gamma) == 0:
        return float(gamma)
    return float(gamma[j])


def run_dual_averaging(problem, gamma, eta, w0, T):
    """Euclidean dual averaging ``w_{t+1} = w_0 - eta * sum_{j<=t} gamma_j grad F(w_j)``."""
    T = _check_T(T)
    if not eta > 0:
        raise InvalidArgument("dual averaging needs eta > 0")
    w0 = as_weights(w0, problem.dim).copy()
    w = w0.copy()
    acc = np.zeros(problem.dim)
    tr = _Tracer(problem, "dual_averaging")
    tr.observe(w)
    for t in range(T):
        g = problem.grad(w)
        tr.grads += 1
        gam = _weight(gamma, t)
        acc = acc + gam * g
        tr.step(eta * gam, g)
        w = w0 - eta * acc
        tr.observe(w)
    return tr.finish()


def method_from_dict(doc):
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InvalidArgument("method document needs a 'kind' key")
    kind = doc["kind"]
    if kind not in METHOD_KINDS:
        raise InvalidArgument(f"unknown method kind {kind!r}")
    args = {k: v for k, v in doc.items() if k != "kind"}
    if kind == "prox_grad" and "spec" in args:
        args["spec"] = proxlib.prox_from_dict(args["spec"])
    if kind == "dual_averaging" and isinstance(args.get("gamma"), list):
        args["gamma"] = tuple(args["gamma"])
    try:
        return METHOD_KINDS[kind](**args)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for method {kind!r}: {exc}") from None
