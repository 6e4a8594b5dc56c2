"""Potential-function certificates for recorded runs.

Every analysis is cast as ``D_{t+1} + Delta_t <= omega_t D_t + E_t``.  The
deterministic schemes are checked pathwise on a :class:`RunRecord`; the
stochastic ones either by exact enumeration of every batch sequence or, for
the hybrid estimator, against an ensemble of seeded runs.  The module also
holds the closed-form rate bounds, output selection (last, averaged, best)
and empirical rate fitting.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import prox as proxlib
from .errors import CertificateFailure, InvalidArgument, InvalidParams, Unsupported
from .estimators import ENUMERATION_GUARD, SgdDriverSpec, all_batches, make_estimator
from .problems import as_weights

SCHEMES = (
    "subgradient_convex",
    "gd_nonconvex",
    "gd_convex",
    "nesterov_convex",
    "sgd_convex_enumerated",
    "sgd_nonconvex_enumerated",
    "hybrid_vr",
)
DETERMINISTIC_SCHEMES = SCHEMES[:4]
TRACE_COLUMNS = ("t", "D", "Delta", "E", "omega", "slack", "bound")

# methods each deterministic scheme can certify
COMPATIBLE = {
    "subgradient_convex": ("subgradient", "gd"),
    "gd_nonconvex": ("gd",),
    "gd_convex": ("gd",),
    "nesterov_convex": ("nesterov",),
}

SLACK_RTOL = 1e-9
TREE_TOL = 1e-12
PARAM_TOL = 1e-12


@dataclass(eq=False)
class CertificateTrace:
    """Per-step potential quantities.

    ``D``, ``metric`` and ``bound`` have one entry per iterate; ``Delta``,
    ``E``, ``omega`` and ``slack`` one per step.  Entries that were not checked
    (restart steps, undefined bounds) are NaN.
    """

    scheme: str
    D: np.ndarray
    Delta: np.ndarray
    E: np.ndarray
    omega: np.ndarray
    slack: np.ndarray
    bound: np.ndarray
    metric: np.ndarray
    ok: bool = True
    first_violation: tuple | None = None
    extras: dict = field(default_factory=dict)

    @property
    def min_slack(self):
        s = self.slack[np.isfinite(self.slack)]
        return float(s.min()) if s.size else math.nan

    def telescoping_gap(self):
        """``D_0 - D_T + sum E - sum Delta``; nonnegative when the trace holds."""
        ok = np.isfinite(self.slack)
        return float(np.sum(self.slack[ok]))

    def rows(self):
        n = len(self.D)
        for t in range(n):
            step = t < n - 1
            yield (
                t,
                _cell(self.D[t]),
                _cell(self.Delta[t]) if step else None,
                _cell(self.E[t]) if step else None,
                _cell(self.omega[t]) if step else None,
                _cell(self.slack[t]) if step else None,
                _cell(self.bound[t]),
            )


def _cell(x):
    x = float(x)
    return None if math.isnan(x) else x


def _need(value, name):
    if value is None:
        raise InvalidArgument(f"certificate needs the constant {name}")
    return value


def _fail(trace, where, slack, reason, strict):
    if trace.first_violation is None:
        trace.first_violation = (where, reason, slack)
    trace.ok = False
    if strict:
        raise CertificateFailure(where, slack, reason)


# --------------------------------------------------------------------------
# deterministic certificates


def certify_deterministic(run, problem, scheme, strict=True):
    """Fill and check the potential trace of ``run`` under ``scheme``.

    Raises :class:`CertificateFailure` on the first violated step (slack below
    ``-1e-9 (1 + |D_t|)``), negative ``Delta_t`` or a bound violation, unless
    ``strict`` is false, in which case the trace reports ``ok = False``.
    """
    if scheme not in DETERMINISTIC_SCHEMES:
        raise InvalidArgument(f"unknown deterministic scheme {scheme!r}")
    if run.T < 1:
        raise InvalidArgument("cannot certify an empty run")
    if run.method not in COMPATIBLE[scheme]:
        raise InvalidArgument(f"scheme {scheme!r} does not apply to method {run.method!r}")
    c = problem.constants
    T = run.T
    eta = np.asarray(run.eta, dtype=float)
    F = np.asarray(run.F, dtype=float)
    gns = np.asarray(run.grad_norm_sq, dtype=float)
    omega = np.ones(T)
    bound = np.full(T + 1, np.nan)
    metric = np.full(T + 1, np.nan)
    checked = np.ones(T, dtype=bool)

    if scheme == "subgradient_convex":
        w_star, F_star = _need(c.w_star, "w*"), _need(c.F_star, "F*")
        gap = F - F_star
        D = 0.5 * _dist_sq(run.iterates, w_star)
        g_sq = np.einsum("ij,ij->i", run.directions, run.directions)
        Delta = eta * gap[:T]
        E = 0.5 * eta ** 2 * g_sq
        # weighted average of w_0..w_{t-1} with weights eta
        S = np.cumsum(eta)
        avg = np.cumsum(eta[:, None] * run.iterates[:T], axis=0) / S[:, None]
        metric[1:] = np.array([problem.value(w) for w in avg]) - F_star
        if c.M is not None:
            bound[1:] = (2.0 * D[0] + c.M ** 2 * np.cumsum(eta ** 2)) / (2.0 * S)
    elif scheme == "gd_nonconvex":
        L = _need(c.L, "L")
        F_star = c.F_star if c.F_star is not None else 0.0
        D = F - F_star
        coef = eta * (1.0 - L * eta / 2.0)
        Delta = coef * gns[:T]
        E = np.zeros(T)
        if c.F_star is not None:
            S = np.cumsum(coef)
            metric[1:] = np.minimum.accumulate(gns[:T])
            with np.errstate(divide="ignore"):
                bound[1:] = np.where(S > 0, (F[0] - F_star) / S, np.inf)
    elif scheme == "gd_convex":
        L = _need(c.L, "L")
        w_star, F_star = _need(c.w_star, "w*"), _need(c.F_star, "F*")
        if np.ptp(eta) > 1e-12 * eta[0] or eta[0] * L > 1.0 + 1e-9:
            raise InvalidArgument("gd_convex needs a constant step eta <= 1/L")
        L_eff = 1.0 / eta[0]
        t_idx = np.arange(T + 1, dtype=float)
        gap = F - F_star
        D = 0.5 * L_eff * _dist_sq(run.iterates, w_star) + t_idx * gap
        Delta = t_idx[:T] / (2.0 * L_eff) * gns[:T]
        E = np.zeros(T)
        metric = gap.copy()
        bound[1:] = _dist_sq(run.iterates[:1], w_star)[0] * L_eff / (2.0 * t_idx[1:])
    else:
        w_star, F_star = _need(c.w_star, "w*"), _need(c.F_star, "F*")
        ex = run.extras
        if "u" not in ex:
            raise InvalidArgument("nesterov_convex needs a run from run_nesterov")
        L = ex["L"]
        gap = F - F_star
        th_prev, th = ex["theta_prev"], ex["theta"]
        D = th_prev ** 2 * gap + 0.5 * L * _dist_sq(ex["u"], w_star)
        Delta = (th_prev[:T] ** 2 - th * (th - 1.0)) * gap[:T]
        E = np.zeros(T)
        checked = ~ex["restarted"]
        metric = gap.copy()
        if not ex["restarted"].any():
            R2 = _dist_sq(run.iterates[:1], w_star)[0]
            bound[1:] = 2.0 * L * R2 / (np.arange(1, T + 1) + 1.0) ** 2

    slack = omega * D[:T] + E - D[1:] - Delta
    slack = np.where(checked, slack, np.nan)
    trace = CertificateTrace(scheme, D, Delta, E, omega, slack, bound, metric)
    tol = SLACK_RTOL * (1.0 + np.abs(D[:T]))
    for t in range(T):
        if not checked[t]:
            continue
        if Delta[t] < -1e-12 * (1.0 + abs(D[t])):
            _fail(trace, t, float(Delta[t]), "negative-Delta", strict)
        if slack[t] < -tol[t]:
            _fail(trace, t, float(slack[t]), "slack", strict)
    viol = metric - bound
    btol = 1e-10 + 1e-9 * np.abs(np.nan_to_num(bound))
    for t in np.nonzero(np.nan_to_num(viol, nan=-np.inf) > btol)[0]:
        _fail(trace, int(t), float(viol[t]), "bound", strict)
        break
    return trace


def _dist_sq(W, w_star):
    d = np.asarray(W) - w_star
    return np.einsum("ij,ij->i", d, d)


# --------------------------------------------------------------------------
# exact stochastic certificates


def certify_stochastic_enumerated(problem, spec, w0, T, scheme="sgd_convex_enumerated", strict=True):
    """Check the conditional recursion at every node of the batch tree.

    Every sequence of ``T`` batches is enumerated, so ``E[D_{t+1} | node]`` is
    exact.  Supports mini-batch SGD and SVRG with deterministic step
    policies; SVRG stages follow ``spec.inner`` with last-iterate snapshots.
    """
    if scheme not in ("sgd_convex_enumerated", "sgd_nonconvex_enumerated"):
        raise InvalidArgument(f"unknown enumerated scheme {scheme!r}")
    if not isinstance(spec, SgdDriverSpec):
        raise InvalidArgument("enumerated certificate needs an SgdDriverSpec")
    if spec.estimator not in ("minibatch", "svrg") or spec.loopless is not None:
        raise Unsupported("enumerated certificates cover mini-batch and staged SVRG only")
    if spec.estimator == "svrg" and spec.snapshot != "last":
        raise Unsupported("enumerated SVRG certificate needs last-iterate snapshots")
    if not spec.policy.deterministic:
        raise Unsupported("enumerated certificates need a step policy that depends on t only")
    if int(T) != T or T < 1:
        raise InvalidArgument("horizon T must be an integer >= 1")
    T = int(T)
    c = problem.constants
    n, b = problem.n_components, spec.b
    n_batches = math.comb(n, b)
    if n_batches ** T > ENUMERATION_GUARD:
        raise Unsupported(f"{n_batches}^{T} batch paths exceed the enumeration guard")
    batches = all_batches(n, b)
    spec.policy.reset()
    etas = np.array([spec.policy.next_step(k) for k in range(T)], dtype=float)
    stage_starts = set()
    if spec.estimator == "svrg":
        k, lengths = 0, spec.inner_lengths()
        i = 0
        while k < T:
            stage_starts.add(k)
            k += lengths[min(i, len(lengths) - 1)]
            i += 1
    w0 = as_weights(w0, problem.dim)

    # expand the tree: each node holds its iterate and estimator state
    levels = [[((), w0.copy(), make_estimator(spec.estimator, b=b))]]
    node_stats = []  # (depth, path, w, children D-arguments, child vs)
    M_sq, sig_sq = 0.0, 0.0
    for k in range(T):
        nxt = []
        for path, w, est in levels[-1]:
            if k in stage_starts:
                est.snapshot(problem, w)
            g = problem.grad(w)
            vs, children = [], []
            for batch in batches:
                e = copy.copy(est)
                v = e.peek(problem, w, batch)
                w_new = w - etas[k] * v
                if spec.projection is not None:
                    w_new = proxlib.prox(spec.projection, w_new, gamma=etas[k])
                vs.append(v)
                children.append(w_new)
                nxt.append((path + (batch,), w_new, e))
            V = np.array(vs)
            M_sq = max(M_sq, float(np.max(np.einsum("ij,ij->i", V, V))))
            var = float(np.mean(np.einsum("ij,ij->i", V - g, V - g)))
            sig_sq = max(sig_sq, var)
            node_stats.append((k, path, w, g, V.mean(axis=0), children))
        levels.append(nxt)

    if scheme == "sgd_convex_enumerated":
        w_star, F_star = _need(c.w_star, "w*"), _need(c.F_star, "F*")

        def D(w):
            d = w - w_star
            return 0.5 * float(d @ d)

        def Delta_E(k, w, g):
            return etas[k] * (problem.value(w) - F_star), 0.5 * etas[k] ** 2 * M_sq
    else:
        L = _need(c.L, "L")
        F_star = c.F_star if c.F_star is not None else 0.0

        def D(w):
            return problem.value(w) - F_star

        def Delta_E(k, w, g):
            return etas[k] * (1.0 - L * etas[k] / 2.0) * float(g @ g), 0.5 * L * etas[k] ** 2 * sig_sq

    D_lvl = np.zeros(T + 1)
    Delta_lvl, E_lvl, slack_lvl = np.zeros(T), np.zeros(T), np.full(T, np.inf)
    trace = CertificateTrace(scheme, D_lvl, Delta_lvl, E_lvl, np.ones(T), slack_lvl,
                             np.full(T + 1, np.nan), np.full(T + 1, np.nan))
    root_bias = float(np.max(np.abs(node_stats[0][4] - node_stats[0][3])))
    for k, path, w, g, mean_v, children in node_stats:
        Dk = D(w)
        Dk1 = float(np.mean([D(x) for x in children]))
        dlt, e = Delta_E(k, w, g)
        s = Dk + e - Dk1 - dlt
        weight = 1.0 / n_batches ** k
        D_lvl[k] += weight * Dk
        if k == T - 1:
            D_lvl[T] += weight * Dk1
        Delta_lvl[k] += weight * dlt
        E_lvl[k] = e
        slack_lvl[k] = min(slack_lvl[k], s)
        if dlt < -TREE_TOL:
            _fail(trace, path, dlt, "negative-Delta", strict)
        if s < -TREE_TOL:
            _fail(trace, path, s, "slack", strict)
    trace.metric[:] = D_lvl
    trace.extras.update(root_bias=root_bias, nodes=len(node_stats), paths=n_batches ** T,
                        M_sq=M_sq, sigma_sq=sig_sq)
    if root_bias > TREE_TOL and spec.estimator in ("minibatch", "svrg"):
        _fail(trace, (), root_bias, "root-bias", strict)
    return trace


# --------------------------------------------------------------------------
# hybrid estimator


@dataclass(frozen=True)
class HybridCertParams:
    """Step ``eta``, weight ``c``, mixing ``beta`` and variance budgets."""

    L: float
    eta: float
    c: float
    beta: float
    sigma_hat_sq: float = 0.0
    sigma_init_sq: float = 0.0

    @staticmethod
    def beta_min(L, eta):
        """Smallest ``beta`` satisfying both parameter conditions."""
        a = 1.0 - L * eta
        return 1.0 - math.sqrt(a / (a + 2.0 * L * L * eta * eta))

    @classmethod
    def from_horizon(cls, L, T, sigma_hat_sq=0.0, beta=None, sigma_init_sq=None):
        """``eta = 1/(L (T+1)^{1/3})``, ``c = (1 - L eta)/(2 L^2 eta) + eta``."""
        if not L > 0 or int(T) != T or T < 1:
            raise InvalidArgument("need L > 0 and an integer horizon T >= 1")
        eta = 1.0 / (L * (T + 1.0) ** (1.0 / 3.0))
        c = (1.0 - L * eta + 2.0 * L * L * eta * eta) / (2.0 * L * L * eta)
        if beta is None:
            beta = cls.beta_min(L, eta)
        if sigma_init_sq is None:
            sigma_init_sq = (T + 1.0) ** (-2.0 / 3.0)
        return cls(L=L, eta=eta, c=c, beta=beta, sigma_hat_sq=sigma_hat_sq, sigma_init_sq=sigma_init_sq)

    def residuals(self):
        """LHS minus RHS of the two parameter conditions."""
        L, eta, c, q = self.L, self.eta, self.c, (1.0 - self.beta) ** 2
        return (2.0 * L * L * eta * eta * c * q - eta * (1.0 - L * eta), c * q - (c - eta))

    def check(self):
        L, eta = self.L, self.eta
        if not 0.0 < eta <= 1.0 / L * (1.0 + 1e-15):
            raise InvalidParams(f"need 0 < eta <= 1/L, got eta={eta}")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidParams(f"beta must lie in [0, 1], got {self.beta}")
        r1, r2 = self.residuals()
        if r1 > PARAM_TOL or r2 > PARAM_TOL:
            raise InvalidParams(f"parameter conditions violated: residuals {r1:.3e}, {r2:.3e}")
        return self

    def bound(self, T, F0_gap, v0_sq):
        L, eta = self.L, self.eta
        return (2.0 * F0_gap / (eta * (T + 1))
                + v0_sq / (T + 1)
                + self.sigma_init_sq / (2.0 * L * L * eta * eta * (T + 1))
                + self.beta ** 2 * self.sigma_hat_sq / (L * L * eta * eta))


def hybrid_metric(run):
    """``(1/(T+1)) sum_t ||grad F(w_t)||^2`` over one run."""
    return float(np.mean(run.grad_norm_sq))


def certify_hybrid(runs, params, problem, strict=True, min_runs=20):
    """Check the ensemble-average stationarity against the closed-form bound.

    The bound gets a sampling margin of three standard errors.
    """
    runs = list(runs)
    if len(runs) < min_runs:
        raise InvalidArgument(f"hybrid certificate needs at least {min_runs} seeded runs")
    params.check()
    T = runs[0].T
    if any(r.T != T for r in runs):
        raise InvalidArgument("all runs in the ensemble need the same horizon")
    F_star = _need(problem.constants.F_star, "F*")
    vals = np.array([hybrid_metric(r) for r in runs])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    w0 = runs[0].iterates[0]
    g0 = problem.grad(w0)
    bnd = params.bound(T, problem.value(w0) - F_star, float(g0 @ g0))
    trace = CertificateTrace("hybrid_vr", np.array([mean]), np.zeros(0), np.zeros(0), np.zeros(0),
                             np.zeros(0), np.array([bnd]), np.array([mean]))
    trace.extras.update(mean=mean, std_err=se, bound=bnd, margin=3.0 * se, values=vals,
                        residuals=params.residuals())
    if mean > bnd + 3.0 * se:
        _fail(trace, T, bnd + 3.0 * se - mean, "bound", strict)
    return trace


# --------------------------------------------------------------------------
# closed-form bounds


def _radius(R, w0, constants):
    if R is not None:
        return float(R)
    if w0 is not None and constants is not None and constants.w_star is not None:
        return float(np.linalg.norm(as_weights(w0) - constants.w_star))
    raise InvalidArgument("bound needs R = ||w0 - w*|| (or w0 with a known w*)")


def evaluate_bound(scheme, constants=None, *, t=None, T=None, L=None, M=None, R=None, w0=None,
                   C=None, etas=None, F0_gap=None, v0_sq=None, params=None):
    """Closed-form right-hand side of the rate bound for ``scheme``.

    ``t`` indexes the iterate ``w_t`` being bounded; ``T`` is a horizon.
    Constants not passed explicitly are read from ``constants``.
    """
    if constants is not None:
        L = constants.L if L is None else L
        M = constants.M if M is None else M
    if scheme == "gd_convex":
        t = _need(t, "t")
        if t < 1:
            raise InvalidArgument("gd_convex bound needs t >= 1")
        return _need(L, "L") * _radius(R, w0, constants) ** 2 / (2.0 * t)
    if scheme == "nesterov":
        return 2.0 * _need(L, "L") * _radius(R, w0, constants) ** 2 / (_need(t, "t") + 1.0) ** 2
    if scheme == "sgd_fixed":
        R, C, M, T = _radius(R, w0, constants), _need(C, "C"), _need(M, "M"), _need(T, "T")
        s = math.sqrt(T + 1.0)
        return R * R / (2.0 * C * s) + M * M * C / (2.0 * s)
    if scheme == "sgd_diminishing":
        R, C, M, T = _radius(R, w0, constants), _need(C, "C"), _need(M, "M"), _need(T, "T")
        den = 4.0 * (math.sqrt(T + 1.0) - 1.0)
        if den <= 0:
            raise InvalidArgument("diminishing-step bound needs T >= 1")
        return R * R / (C * den) + M * M * C * (1.0 + math.log(T + 1.0)) / den
    if scheme == "subgradient":
        etas = np.asarray(_need(etas, "etas"), dtype=float)
        R, M = _radius(R, w0, constants), _need(M, "M")
        return (R * R + M * M * float(np.sum(etas ** 2))) / (2.0 * float(np.sum(etas)))
    if scheme == "gd_nonconvex":
        etas = np.asarray(_need(etas, "etas"), dtype=float)
        S = float(np.sum(etas * (1.0 - _need(L, "L") * etas / 2.0)))
        if S <= 0:
            raise InvalidArgument("gd_nonconvex bound needs sum eta (1 - L eta / 2) > 0")
        return _need(F0_gap, "F0_gap") / S
    if scheme == "hybrid":
        return _need(params, "params").bound(_need(T, "T"), _need(F0_gap, "F0_gap"), _need(v0_sq, "v0_sq"))
    raise InvalidArgument(f"unknown bound scheme {scheme!r}")


# --------------------------------------------------------------------------
# output certification, rates, oracle counts

OUTPUT_MODES = ("last", "uniform", "weighted", "best")


def certify_output(run, mode, problem, gammas=None):
    """Pick the reported point ``w_hat`` and check Jensen for averages.

    ``weighted`` uses weights ``gammas`` over ``w_0..w_T`` (or over
    ``w_0..w_{T-1}`` when ``T`` weights are given); default is the step
    sizes.
    """
    if mode not in OUTPUT_MODES:
        raise InvalidArgument(f"unknown output mode {mode!r}")
    W = np.asarray(run.iterates)
    if W.shape[0] == 0:
        raise InvalidArgument("cannot certify the output of an empty run")
    F_vals = np.asarray(run.F, dtype=float)
    if mode == "last":
        w_hat, idx = W[-1], len(W) - 1
    elif mode == "best":
        idx = int(np.argmin(run.grad_norm_sq))
        w_hat = W[idx]
    else:
        if mode == "uniform":
            weights = np.ones(len(W))
        else:
            weights = np.asarray(run.eta if gammas is None else gammas, dtype=float)
            if weights.shape[0] not in (len(W), len(W) - 1):
                raise InvalidArgument("weights need T or T+1 entries")
            if np.any(weights < 0) or weights.sum() <= 0:
                raise InvalidArgument("weights must be nonnegative with a positive sum")
        Wk, Fk = W[: len(weights)], F_vals[: len(weights)]
        S = weights.sum()
        w_hat = weights @ Wk / S
        idx = None
        if problem.convex:
            rhs = float(weights @ Fk / S)
            lhs = problem.value(w_hat)
            if lhs > rhs + 1e-9 * (1.0 + abs(rhs)):
                raise CertificateFailure(mode, rhs - lhs, "jensen")
    F_hat = problem.value(w_hat)
    F_star = problem.constants.F_star
    metrics = {
        "index": idx,
        "F": F_hat,
        "F_gap": None if F_star is None else F_hat - F_star,
        "grad_norm_sq": problem.stationarity(w_hat),
    }
    return w_hat, metrics


def fit_rate(series, window=0.5, t=None, min_points=10):
    """Least-squares slope of ``log(series)`` against ``log(t)`` on a window.

    ``window`` is a tail fraction in ``(0, 1]`` or an inclusive ``(t_lo, t_hi)``
    range.  ``t`` defaults to ``1, 2, ...``.
    """
    y = np.asarray(series, dtype=float)
    t = np.arange(1, len(y) + 1, dtype=float) if t is None else np.asarray(t, dtype=float)
    if t.shape != y.shape:
        raise InvalidArgument("series and t need the same length")
    if isinstance(window, (tuple, list)):
        lo, hi = window
        mask = (t >= lo) & (t <= hi)
    else:
        if not 0.0 < window <= 1.0:
            raise InvalidArgument("tail fraction must lie in (0, 1]")
        mask = np.zeros(len(y), dtype=bool)
        mask[len(y) - int(math.ceil(window * len(y))):] = True
    ts, ys = t[mask], y[mask]
    if len(ys) < min_points:
        raise InvalidArgument(f"rate fit needs at least {min_points} points, got {len(ys)}")
    if np.any(ys <= 0) or np.any(ts <= 0):
        raise InvalidArgument("rate fit needs positive values and positive t on the window")
    return loglog_slope(ts, ys)


def loglog_slope(x, y):
    """Slope of the least-squares line through ``(log x, log y)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgument("log-log slope needs at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def oracle_complexity(run):
    """Total oracle calls of a run."""
    last = lambda a: int(a[-1]) if len(a) else 0
    counts = {
        "grads": last(run.oracle_grads),
        "component_grads": last(run.oracle_component_grads),
        "prox": last(run.oracle_prox),
        "values": last(run.oracle_values),
    }
    counts["total"] = sum(counts.values())
    return counts


def iterations_to_gap(run, eps):
    """First ``t`` with ``F(w_t) - F* <= eps``, or ``None``."""
    hit = np.nonzero(run.F_gap <= eps)[0]
    return int(hit[0]) if hit.size else None
