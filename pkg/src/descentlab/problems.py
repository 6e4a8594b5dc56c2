"""Objective instances with exact oracles and certified structure constants.

Every problem exposes ``value``, ``grad``, ``component_grad`` and
``subgradient`` plus a :class:`StructureConstants` record holding the
smoothness modulus ``L``, the convexity modulus ``mu``, an optional
subgradient bound ``M`` and the optimum ``(F_star, w_star)`` whenever it is
known in closed form.

Finite sums follow the convention ``F(w) = (1/n) sum_i F_i(w)``.  For the
data-fitting kinds (least squares, logistic) the objective is written as a
plain sum over samples, so the i-th component is ``n`` times the per-sample
loss.  ``grad`` of a finite sum is computed as the sequential mean of the
component gradients, which makes the averaging identity hold bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidArgument, NumericFailure, Unsupported

POWER_RTOL = 1e-10
POWER_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class StructureConstants:
    L: float
    mu: float
    M: float | None = None
    F_star: float | None = None
    w_star: np.ndarray | None = None
    region_radius: float | None = None
    # average-smoothness modulus of the components (finite sums only)
    L_avg: float | None = None


def as_weights(w, dim=None):
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = w.reshape(1)
    if w.ndim != 1:
        raise InvalidArgument(f"weights must be a vector, got shape {w.shape}")
    if dim is not None and w.shape[0] != dim:
        raise InvalidArgument(f"dimension mismatch: expected {dim}, got {w.shape[0]}")
    return w


def spectral_norm(A, rtol=POWER_RTOL, max_iter=POWER_MAX_ITER):
    """Largest singular value of a symmetric matrix by power iteration.

    The start vector is fixed so repeated calls return identical results.
    Raises :class:`NumericFailure` if the estimate has not settled to
    relative tolerance ``rtol`` within ``max_iter`` iterations.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    if not np.any(A):
        return 0.0
    v = np.random.default_rng(12345).standard_normal(p)
    v /= np.linalg.norm(v)
    est = 0.0
    for k in range(1, max_iter + 1):
        Av = A @ v
        new = float(np.linalg.norm(Av))
        if new == 0.0:
            return 0.0
        v = Av / new
        if abs(new - est) <= rtol * new:
            return new
        est = new
    raise NumericFailure(f"power iteration did not converge in {max_iter} iterations", iterations=max_iter)


class Problem:
    """Base class.  Subclasses set ``dim``, ``n_components`` and implement
    ``value``, ``component_value`` and ``component_grad``."""

    kind = "problem"
    n_components = 1
    smooth = True

    def _w(self, w):
        return as_weights(w, self.dim)

    def _index(self, i):
        if not 0 <= i < self.n_components:
            raise InvalidArgument(f"component index {i} out of range [0, {self.n_components})")

    def grad(self, w):
        w = self._w(w)
        if self.n_components == 1:
            return self.component_grad(0, w)
        total = np.zeros(self.dim)
        for i in range(self.n_components):
            total = total + self.component_grad(i, w)
        return total / self.n_components

    def batch_grad(self, batch, w):
        """Mini-batch gradient ``(1/b) sum_{i in batch} grad F_i(w)``."""
        w = self._w(w)
        total = np.zeros(self.dim)
        for i in batch:
            total = total + self.component_grad(i, w)
        return total / len(batch)

    def component_grads(self, w):
        """All component gradients stacked as an ``(n, dim)`` array."""
        w = self._w(w)
        return np.array([self.component_grad(i, w) for i in range(self.n_components)]).reshape(-1, self.dim)

    def subgradient(self, w):
        if not self.convex:
            raise Unsupported(f"{self.kind}: subgradient requested for a nonconvex problem")
        return self.grad(w)

    def hessian(self):
        raise Unsupported(f"{self.kind} has no constant Hessian")

    def component_hessians(self):
        raise Unsupported(f"{self.kind} has no constant component Hessians")

    @property
    def constants(self):
        if self._constants is None:
            self._constants = certify_constants(self)
        return self._constants

    @property
    def convex(self):
        return self.constants.mu >= -1e-12 * max(1.0, self.constants.L)

    def stationarity(self, w):
        """Squared norm of the (sub)gradient used by trace instrumentation."""
        g = self.grad(w) if self.smooth else self.subgradient(w)
        return float(g @ g)


class Quadratic(Problem):
    """``F(w) = 1/2 w'Qw + q'w`` with symmetric ``Q``."""

    kind = "quadratic"

    def __init__(self, Q, q=None, region_radius=None, constants=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise InvalidArgument(f"Q must be square, got {Q.shape}")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12:
            raise InvalidArgument("Q must be symmetric within 1e-12")
        self.Q = Q
        self.dim = Q.shape[0]
        self.q = np.zeros(self.dim) if q is None else as_weights(q, self.dim)
        self.region_radius = region_radius
        self._constants = constants

    def value(self, w):
        w = self._w(w)
        return float(0.5 * w @ self.Q @ w + self.q @ w)

    def component_value(self, i, w):
        self._index(i)
        return self.value(w)

    def component_grad(self, i, w):
        self._index(i)
        w = self._w(w)
        return self.Q @ w + self.q

    def hessian(self):
        return self.Q

    def component_hessians(self):
        return [self.Q]


class FiniteSumQuadratic(Problem):
    """``F(w) = (1/n) sum_i (1/2 w'Q_i w + q_i'w)``."""

    kind = "finite_sum_quadratic"

    def __init__(self, components, region_radius=None, constants=None):
        comps = []
        for Qi, qi in components:
            Qi = np.atleast_2d(np.asarray(Qi, dtype=float))
            if np.max(np.abs(Qi - Qi.T), initial=0.0) > 1e-12:
                raise InvalidArgument("component Q_i must be symmetric within 1e-12")
            comps.append((Qi, as_weights(qi, Qi.shape[0])))
        if not comps:
            raise InvalidArgument("finite sum needs at least one component")
        self.dim = comps[0][0].shape[0]
        if any(Qi.shape != (self.dim, self.dim) for Qi, _ in comps):
            raise InvalidArgument("all components must share one dimension")
        self.components = comps
        self.n_components = len(comps)
        self.region_radius = region_radius
        self._constants = constants

    def component_value(self, i, w):
        self._index(i)
        w = self._w(w)
        Qi, qi = self.components[i]
        return float(0.5 * w @ Qi @ w + qi @ w)

    def value(self, w):
        w = self._w(w)
        return sum(self.component_value(i, w) for i in range(self.n_components)) / self.n_components

    def component_grad(self, i, w):
        self._index(i)
        w = self._w(w)
        Qi, qi = self.components[i]
        return Qi @ w + qi

    def component_grads(self, w):
        if not hasattr(self, "_stack"):
            self._stack = (np.array([Qi for Qi, _ in self.components]),
                           np.array([qi for _, qi in self.components]))
        H, q = self._stack
        return H @ self._w(w) + q

    def hessian(self):
        return sum(Qi for Qi, _ in self.components) / self.n_components

    def mean_linear_term(self):
        return sum(qi for _, qi in self.components) / self.n_components

    def component_hessians(self):
        return [Qi for Qi, _ in self.components]


class LeastSquares(Problem):
    """``F(w) = 1/2 ||X'w - y||^2`` with ``X`` of shape ``(p, n)``."""

    kind = "least_squares"

    def __init__(self, X, y, region_radius=None, constants=None):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[1] != self.y.shape[0]:
            raise InvalidArgument(f"X has {self.X.shape[1]} samples but y has {self.y.shape[0]}")
        self.dim, self.n_components = self.X.shape
        self.region_radius = region_radius
        self._constants = constants

    def value(self, w):
        w = self._w(w)
        r = self.X.T @ w - self.y
        return float(0.5 * r @ r)

    def component_value(self, i, w):
        self._index(i)
        w = self._w(w)
        r = self.X[:, i] @ w - self.y[i]
        return float(self.n_components * 0.5 * r * r)

    def component_grad(self, i, w):
        self._index(i)
        w = self._w(w)
        xi = self.X[:, i]
        return (self.n_components * (xi @ w - self.y[i])) * xi

    def hessian(self):
        return self.X @ self.X.T

    def component_hessians(self):
        n = self.n_components
        return [n * np.outer(self.X[:, i], self.X[:, i]) for i in range(n)]


class Logistic(Problem):
    """``F(w) = sum_i log(1 + exp(y_i x_i'w))`` with labels in {-1, +1}."""

    kind = "logistic"

    def __init__(self, X, y, region_radius=None, constants=None):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        if self.X.shape[1] != self.y.shape[0]:
            raise InvalidArgument(f"X has {self.X.shape[1]} samples but y has {self.y.shape[0]}")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise InvalidArgument("logistic labels must be +1 or -1")
        self.dim, self.n_components = self.X.shape
        self.region_radius = region_radius
        self._constants = constants

    def value(self, w):
        w = self._w(w)
        return float(np.sum(np.logaddexp(0.0, self.y * (self.X.T @ w))))

    def component_value(self, i, w):
        self._index(i)
        w = self._w(w)
        return float(self.n_components * np.logaddexp(0.0, self.y[i] * (self.X[:, i] @ w)))

    def component_grad(self, i, w):
        self._index(i)
        w = self._w(w)
        xi, yi = self.X[:, i], self.y[i]
        return (self.n_components * yi * expit(yi * (xi @ w))) * xi

    def curvature_bound(self):
        return 0.25 * (self.X @ self.X.T)

    def component_hessians(self):
        # upper bounds: Hessian of F_i is dominated by (n/4) x_i x_i'
        n = self.n_components
        return [0.25 * n * np.outer(self.X[:, i], self.X[:, i]) for i in range(n)]


class CompositeL1(Problem):
    """``F(w) = f(w) + lam * ||w||_1`` for a smooth ``f``.

    ``grad`` returns the gradient of the smooth part only.
    """

    kind = "composite_l1"
    smooth = False

    def __init__(self, inner, lam=1.0, region_radius=None, constants=None):
        if lam < 0:
            raise InvalidArgument("lam must be nonnegative")
        if not inner.smooth:
            raise InvalidArgument("inner part of a composite problem must be smooth")
        self.inner = inner
        self.lam = float(lam)
        self.dim = inner.dim
        self.n_components = inner.n_components
        self.region_radius = region_radius
        self._constants = constants

    def value(self, w):
        w = self._w(w)
        return self.inner.value(w) + self.lam * float(np.sum(np.abs(w)))

    def smooth_value(self, w):
        return self.inner.value(w)

    def component_grad(self, i, w):
        return self.inner.component_grad(i, w)

    def grad(self, w):
        return self.inner.grad(w)

    def subgradient(self, w):
        if not self.inner.convex:
            raise Unsupported("subgradient of a nonconvex nonsmooth objective")
        w = self._w(w)
        # np.sign(0) == 0: minimal-norm tie-break at kinks
        return self.inner.grad(w) + self.lam * np.sign(w)

    def prox_weight(self):
        return self.lam


def l1_norm(p, lam=1.0):
    """``F(w) = lam * ||w||_1`` on ``R^p`` as a composite with a zero smooth part."""
    return CompositeL1(Quadratic(np.zeros((p, p)), np.zeros(p)), lam=lam)


def random_quadratic(dim, cond=1e3, L=1.0, seed=0, region_radius=None):
    """SPD quadratic with spectrum log-spaced in ``[L/cond, L]``."""
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.geomspace(L / cond, L, dim)
    Q = (U * eig) @ U.T
    Q = 0.5 * (Q + Q.T)
    q = rng.standard_normal(dim)
    return Quadratic(Q, q, region_radius=region_radius)


def scalar_finite_sum(anchors):
    """Components ``F_i(w) = 1/2 (w - a_i)^2`` on the real line."""
    return FiniteSumQuadratic([(np.eye(1), -np.atleast_1d(float(a))) for a in anchors])


def random_finite_sum_quadratic(n, dim, seed=0, indefinite=False, shift=1.0):
    """Random finite-sum quadratic whose mean Hessian is positive definite.

    Component Hessians are ``base + c * E_i`` with ``sum_i E_i = 0``.  With
    ``indefinite=True`` the perturbations are ``E_i = S - n u_i u_i'`` for unit
    vectors ``u_i`` and ``S = sum_j u_j u_j'``, which is negative along ``u_i``;
    ``c`` is grown until every component Hessian has a negative eigenvalue, so
    each ``F_i`` is nonconvex while ``F`` itself stays bounded below.
    """
    if n < 1 or dim < 1:
        raise InvalidArgument("need n >= 1 and dim >= 1")
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((dim, dim))
    base = base @ base.T / dim + shift * np.eye(dim)
    if indefinite:
        if n < 2 or dim < 2:
            raise InvalidArgument("indefinite components need n >= 2 and dim >= 2")
        U = rng.standard_normal((n, dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        S = U.T @ U
        E = [S - n * np.outer(u, u) for u in U]
    else:
        E = [rng.standard_normal((dim, dim)) for _ in range(n)]
        E = [0.5 * (A + A.T) for A in E]
        mean_E = sum(E) / n
        E = [A - mean_E for A in E]
    scale = 0.5
    if indefinite:
        for _ in range(60):
            if all(np.linalg.eigvalsh(base + scale * A)[0] < 0 for A in E):
                break
            scale *= 1.5
        else:
            raise NumericFailure("could not make every component indefinite", iterations=60)
    comps = [(base + scale * A, rng.standard_normal(dim)) for A in E]
    return FiniteSumQuadratic(comps)


def _solve_composite(problem, max_iter=1_000_000, tol=1e-13):
    inner = problem.inner
    L = inner.constants.L
    lam = problem.lam
    w = np.zeros(problem.dim)
    if L == 0.0:
        g = inner.grad(w)
        if np.any(np.abs(g) > lam):
            return None
        return w
    step = 1.0 / L
    for _ in range(max_iter):
        v = w - step * inner.grad(w)
        new = np.sign(v) * np.maximum(np.abs(v) - step * lam, 0.0)
        if np.linalg.norm(new - w) <= tol * (1.0 + np.linalg.norm(w)):
            return new
        w = new
    return w


def certify_constants(problem):
    """Compute :class:`StructureConstants` for ``problem`` from its data."""
    R = problem.region_radius
    if isinstance(problem, CompositeL1):
        inner = problem.inner.constants
        w_star = _solve_composite(problem)
        F_star = problem.value(w_star) if w_star is not None else None
        M = None
        if inner.L == 0.0:
            M = problem.lam * math.sqrt(problem.dim) + float(np.linalg.norm(problem.inner.grad(np.zeros(problem.dim))))
        elif R is not None and w_star is not None:
            M = (float(np.linalg.norm(problem.inner.grad(w_star))) + inner.L * R
                 + problem.lam * math.sqrt(problem.dim))
        return StructureConstants(L=inner.L, mu=inner.mu, M=M, F_star=F_star, w_star=w_star,
                                  region_radius=R, L_avg=inner.L_avg)

    if isinstance(problem, Logistic):
        H = problem.curvature_bound()
        L = spectral_norm(H)
        M = float(np.sum(np.linalg.norm(problem.X, axis=0)))
        L_avg = math.sqrt(spectral_norm(_mean_square(problem.component_hessians())))
        return StructureConstants(L=L, mu=0.0, M=M, region_radius=R, L_avg=L_avg)

    H = problem.hessian()
    L = spectral_norm(H)
    mu = float(np.linalg.eigvalsh(H)[0])
    if isinstance(problem, LeastSquares):
        b = problem.X @ problem.y
    elif isinstance(problem, FiniteSumQuadratic):
        b = -problem.mean_linear_term()
    else:
        b = -problem.q
    w_star, *_ = np.linalg.lstsq(H, b, rcond=None)
    if np.linalg.norm(problem.grad(w_star)) > 1e-8 * (1.0 + L):
        w_star = None
    convex = mu >= -1e-12 * max(1.0, L)
    F_star = problem.value(w_star) if (w_star is not None and convex) else None
    M = L * R if (R is not None and w_star is not None) else None
    L_avg = None
    if problem.n_components > 1:
        L_avg = math.sqrt(spectral_norm(_mean_square(problem.component_hessians())))
    return StructureConstants(L=L, mu=mu, M=M, F_star=F_star, w_star=w_star,
                              region_radius=R, L_avg=L_avg)


def _mean_square(mats):
    return sum(A.T @ A for A in mats) / len(mats)


# --- module-level oracle surface ---------------------------------------

def value(problem, w):
    return problem.value(w)


def grad(problem, w):
    return problem.grad(w)


def component_grad(problem, i, w):
    return problem.component_grad(i, w)


def subgradient(problem, w):
    return problem.subgradient(w)


# --- JSON fixtures -------------------------------------------------------

def problem_from_dict(doc):
    """Build a problem from a fixture document (matrices row-major).

    Supported kinds: ``quadratic``, ``least_squares``, ``logistic``,
    ``composite_l1``, ``finite_sum_quadratic``, ``l1_norm``,
    ``random_quadratic`` and ``scalar_finite_sum``.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InvalidArgument("problem document needs a 'kind' key")
    kind = doc["kind"]
    R = doc.get("region_radius")
    try:
        if kind == "quadratic":
            return Quadratic(doc["Q"], doc.get("q"), region_radius=R)
        if kind == "least_squares":
            return LeastSquares(doc["X"], doc["y"], region_radius=R)
        if kind == "logistic":
            return Logistic(doc["X"], doc["y"], region_radius=R)
        if kind == "finite_sum_quadratic":
            comps = [(c["Q"], c["q"]) for c in doc["components"]]
            return FiniteSumQuadratic(comps, region_radius=R)
        if kind == "composite_l1":
            return CompositeL1(problem_from_dict(doc["inner"]), lam=doc.get("lam", 1.0), region_radius=R)
        if kind == "l1_norm":
            return l1_norm(int(doc["dim"]), lam=doc.get("lam", 1.0))
        if kind == "random_quadratic":
            return random_quadratic(int(doc["dim"]), cond=doc.get("cond", 1e3), L=doc.get("L", 1.0),
                                    seed=doc.get("seed", 0), region_radius=R)
        if kind == "scalar_finite_sum":
            return scalar_finite_sum(doc["anchors"])
        if kind == "random_finite_sum_quadratic":
            return random_finite_sum_quadratic(int(doc["n"]), int(doc["dim"]), seed=doc.get("seed", 0),
                                               indefinite=doc.get("indefinite", False))
    except KeyError as exc:
        raise InvalidArgument(f"problem of kind {kind!r} is missing key {exc.args[0]!r}") from None
    raise InvalidArgument(f"unknown problem kind {kind!r}")


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
