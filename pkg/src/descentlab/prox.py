"""Proximal operators ``prox_{gamma g}(w) = argmin_z gamma g(z) + 1/2 ||z - w||^2``.

Three evaluation routes are provided: closed forms for separable and
block-separable ``g`` (:func:`prox`), the conjugate route through Moreau's
identity (:func:`prox_via_moreau`), and a scalar root solve of the
optimality condition for differentiable separable ``g``
(:class:`ScalarSeparable`).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import InvalidArgument, NumericFailure, Unsupported
from .problems import as_weights

SCALAR_MAX_ITER = 200
SCALAR_TOL = 1e-12


@dataclass(frozen=True)
class Zero:
    gamma: float = 1.0


@dataclass(frozen=True)
class L1:
    """``g(z) = lam * ||z||_1``."""

    lam: float = 1.0
    gamma: float = 1.0


@dataclass(frozen=True)
class SqL2:
    """``g(z) = (lam / 2) * ||z||^2``."""

    lam: float = 1.0
    gamma: float = 1.0


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo > hi):
            raise InvalidArgument("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass(frozen=True)
class L2Ball:
    radius: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidArgument("ball radius must be nonnegative")


@dataclass(frozen=True)
class GroupL2:
    """``g(z) = lam * sum_b ||z_b||_2`` over a partition of the coordinates."""

    blocks: tuple
    lam: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        blocks = tuple(tuple(int(j) for j in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)

    def check_partition(self, dim):
        flat = sorted(j for b in self.blocks for j in b)
        if flat != list(range(dim)):
            raise InvalidArgument(f"group blocks must partition range({dim})")


@dataclass(frozen=True)
class ScalarSeparable:
    """``g(z) = sum_j h(z_j)`` for a convex, differentiable scalar ``h``.

    ``dh`` is the derivative (vectorised over arrays); ``d2h`` is optional and
    enables Newton polishing.  ``h`` itself is only needed by callers that
    evaluate the prox objective.
    """

    dh: Callable
    d2h: Callable | None = None
    h: Callable | None = None
    gamma: float = 1.0


PROX_KINDS = {"zero": Zero, "l1": L1, "sq_l2": SqL2, "box": Box, "l2_ball": L2Ball, "group_l2": GroupL2}


def _check(spec, w, gamma):
    gamma = spec.gamma if gamma is None else gamma
    if not gamma > 0:
        raise InvalidArgument("prox parameter gamma must be positive")
    return as_weights(w), float(gamma)


def soft_threshold(w, tau):
    # |w_i| == tau maps to 0
    return np.sign(w) * np.maximum(np.abs(w) - tau, 0.0)


def project_l2_ball(w, radius):
    nrm = np.linalg.norm(w)
    if nrm <= radius:
        return w.copy()
    return w * (radius / nrm)


def prox(spec, w, gamma=None):
    """Evaluate ``prox_{gamma g}(w)``; ``gamma`` defaults to ``spec.gamma``."""
    w, gamma = _check(spec, w, gamma)
    if isinstance(spec, Zero):
        return w.copy()
    if isinstance(spec, L1):
        return soft_threshold(w, gamma * spec.lam)
    if isinstance(spec, SqL2):
        return w / (1.0 + gamma * spec.lam)
    if isinstance(spec, Box):
        return np.clip(w, spec.lo, spec.hi)
    if isinstance(spec, L2Ball):
        return project_l2_ball(w, spec.radius)
    if isinstance(spec, GroupL2):
        spec.check_partition(w.shape[0])
        out = np.empty_like(w)
        for b in spec.blocks:
            idx = list(b)
            wb = w[idx]
            nrm = np.linalg.norm(wb)
            scale = max(0.0, 1.0 - gamma * spec.lam / nrm) if nrm > 0 else 0.0
            out[idx] = scale * wb
        return out
    if isinstance(spec, ScalarSeparable):
        return _scalar_prox(spec, w, gamma)
    raise Unsupported(f"no prox for {type(spec).__name__}")


def _scalar_prox(spec, w, gamma):
    """Solve ``dh(z) + (z - w)/gamma = 0`` coordinate-wise.

    The root is bracketed by ``w -/+ (gamma |dh(w)| + 1)`` and refined by
    bisection, taking a Newton step whenever it stays inside the bracket.
    """

    def resid(z):
        return spec.dh(z) + (z - w) / gamma

    slope = np.abs(np.asarray(spec.dh(w), dtype=float))
    lo = w - gamma * slope - 1.0
    hi = w + gamma * slope + 1.0
    z = 0.5 * (lo + hi)
    for _ in range(SCALAR_MAX_ITER):
        r = resid(z)
        done = np.abs(r) <= SCALAR_TOL
        stuck = (hi - lo) <= 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        if np.all(done | stuck):
            return z
        lo = np.where(r < 0, z, lo)
        hi = np.where(r > 0, z, hi)
        mid = 0.5 * (lo + hi)
        if spec.d2h is not None:
            newton = z - r / (spec.d2h(z) + 1.0 / gamma)
            inside = (newton > lo) & (newton < hi)
            z = np.where(done, z, np.where(inside, newton, mid))
        else:
            z = np.where(done, z, mid)
    raise NumericFailure(f"scalar prox did not converge in {SCALAR_MAX_ITER} iterations",
                         iterations=SCALAR_MAX_ITER)


def prox_via_moreau(spec, w, gamma=None):
    """``prox_{gamma g}(w) = w - gamma * prox_{g*/gamma}(w / gamma)``.

    Conjugates implemented: ``L1`` (indicator of the l-inf ball of radius
    ``lam``), ``GroupL2`` (product of l2 balls), ``SqL2`` and ``Zero``.
    """
    w, gamma = _check(spec, w, gamma)
    x = w / gamma
    if isinstance(spec, Zero):
        dual = np.zeros_like(x)
    elif isinstance(spec, L1):
        dual = np.clip(x, -spec.lam, spec.lam)
    elif isinstance(spec, GroupL2):
        spec.check_partition(w.shape[0])
        dual = np.empty_like(x)
        for b in spec.blocks:
            idx = list(b)
            dual[idx] = project_l2_ball(x[idx], spec.lam)
    elif isinstance(spec, SqL2):
        # g*(y) = ||y||^2 / (2 lam)
        dual = x * (gamma * spec.lam / (1.0 + gamma * spec.lam))
    else:
        raise Unsupported(f"no conjugate implemented for {type(spec).__name__}")
    return w - gamma * dual


def gradient_mapping(problem, spec, w, beta):
    """``G_beta(w) = (w - prox_{beta g}(w - beta * grad f(w))) / beta``."""
    if not beta > 0:
        raise InvalidArgument("gradient mapping needs beta > 0")
    g = problem.grad(w)
    if isinstance(spec, Zero):
        return g
    w = as_weights(w, problem.dim)
    return (w - prox(spec, w - beta * g, gamma=beta)) / beta


def spec_for(problem):
    """The regulariser of a composite problem as a prox spec."""
    lam = getattr(problem, "lam", None)
    if lam is None:
        return Zero()
    return L1(lam=lam)


def with_gamma(spec, gamma):
    return replace(spec, gamma=gamma)


def prox_from_dict(doc):
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InvalidArgument("prox document needs a 'kind' key")
    kind = doc["kind"]
    if kind not in PROX_KINDS:
        raise InvalidArgument(f"unknown prox kind {kind!r}")
    args = {k: v for k, v in doc.items() if k != "kind"}
    if kind == "group_l2":
        args["blocks"] = tuple(tuple(b) for b in args["blocks"])
    return PROX_KINDS[kind](**args)
