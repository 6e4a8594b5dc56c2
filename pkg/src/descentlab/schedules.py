"""Step-size policies.

A policy is a small stateful object; ``next_step(t, w, g, problem)`` returns
``eta_t > 0`` and may update internal state.  Use one policy instance per run.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgument, Unsupported


class StepPolicy:
    kind = "policy"
    # True when eta_t depends only on t (needed by the enumerated certificates)
    deterministic = True

    def next_step(self, t, w=None, g=None, problem=None):
        raise NotImplementedError

    def reset(self):
        pass


class Constant(StepPolicy):
    kind = "constant"

    def __init__(self, eta):
        if not eta > 0:
            raise InvalidArgument("constant step must be positive")
        self.eta = float(eta)

    def next_step(self, t, w=None, g=None, problem=None):
        return self.eta


class Diminishing(StepPolicy):
    """``eta_t = C / (t + beta)^nu``."""

    kind = "diminishing"

    def __init__(self, C, beta=1.0, nu=0.5):
        if not (C > 0 and nu > 0):
            raise InvalidArgument("diminishing step needs C > 0 and nu > 0")
        if not beta > 0:
            raise InvalidArgument("shift beta must be positive so that eta_0 is finite")
        self.C, self.beta, self.nu = float(C), float(beta), float(nu)

    def next_step(self, t, w=None, g=None, problem=None):
        return self.C / (t + self.beta) ** self.nu


class Staircase(StepPolicy):
    """``eta_t = C / (ceil(t/s) + beta)^nu``; constant on blocks of ``s`` steps."""

    kind = "staircase"

    def __init__(self, C, beta=1.0, nu=0.5, s=10):
        if not (C > 0 and nu > 0 and beta > 0):
            raise InvalidArgument("staircase step needs C, beta, nu > 0")
        if int(s) < 1:
            raise InvalidArgument("staircase block length s must be >= 1")
        self.C, self.beta, self.nu, self.s = float(C), float(beta), float(nu), int(s)

    def next_step(self, t, w=None, g=None, problem=None):
        level = -(-t // self.s)  # ceil(t/s) for integer t >= 0, with ceil(0/s) = 0
        return self.C / (level + self.beta) ** self.nu


class AdaptiveAccumulator(StepPolicy):
    """``eta_t = C / sqrt(sum_{j<=t} ||g_j||^2 + eps)``; ``g_t`` is added first."""

    kind = "adaptive"
    deterministic = False

    def __init__(self, C, eps=1e-8):
        if not C > 0 or eps < 0:
            raise InvalidArgument("adaptive step needs C > 0 and eps >= 0")
        self.C, self.eps = float(C), float(eps)
        self.accumulated = 0.0

    def reset(self):
        self.accumulated = 0.0

    def next_step(self, t, w=None, g=None, problem=None):
        if g is None:
            raise InvalidArgument("adaptive step needs the applied gradient g")
        g = np.asarray(g, dtype=float)
        self.accumulated += float(g @ g)
        denom = math.sqrt(self.accumulated + self.eps)
        if denom == 0.0:
            raise InvalidArgument("adaptive step undefined: zero accumulated gradient and eps = 0")
        return self.C / denom


class Explicit(StepPolicy):
    """Replays a fixed sequence of steps."""

    kind = "explicit"

    def __init__(self, steps):
        self.steps = [float(s) for s in steps]
        if any(not s > 0 for s in self.steps):
            raise InvalidArgument("explicit steps must be positive")

    def next_step(self, t, w=None, g=None, problem=None):
        if t >= len(self.steps):
            raise InvalidArgument(f"explicit schedule has no step for t={t}")
        return self.steps[t]


class BarzilaiBorwein(StepPolicy):
    """``eta_t = ||w_t - w_{t-1}|| / ||g_t - g_{t-1}||``.

    Returns ``eta0`` at the first call.  A denominator below ``1e-15`` sets
    ``degenerate`` and repeats the previous emitted step.
    """

    kind = "bb"
    deterministic = False

    def __init__(self, eta0):
        if not eta0 > 0:
            raise InvalidArgument("BB fallback step must be positive")
        self.eta0 = float(eta0)
        self.reset()

    def reset(self):
        self.prev_w = None
        self.prev_g = None
        self.last = self.eta0
        self.degenerate = False

    def next_step(self, t, w=None, g=None, problem=None):
        w = np.asarray(w, dtype=float).copy()
        g = np.asarray(g, dtype=float).copy()
        if self.prev_w is None:
            eta = self.eta0
        else:
            den = float(np.linalg.norm(g - self.prev_g))
            if den < 1e-15:
                self.degenerate = True
                eta = self.last
            else:
                self.degenerate = False
                eta = float(np.linalg.norm(w - self.prev_w)) / den
                if eta == 0.0:
                    self.degenerate = True
                    eta = self.last
        self.prev_w, self.prev_g, self.last = w, g, eta
        return eta


class ExactQuadratic(StepPolicy):
    """Exact line search ``argmin_eta F(w - eta g) = g'g / g'Qg`` on quadratics."""

    kind = "exact"
    deterministic = False

    def __init__(self):
        self.last = None

    def reset(self):
        self.last = None

    def next_step(self, t, w=None, g=None, problem=None):
        if problem is None:
            raise InvalidArgument("exact line search needs the problem")
        Q = problem.hessian()
        g = np.asarray(g, dtype=float)
        gg = float(g @ g)
        if gg == 0.0:
            # already stationary; any positive step leaves w unchanged
            return self.last if self.last is not None else 1.0 / max(problem.constants.L, 1e-300)
        curv = float(g @ Q @ g)
        if curv <= 0.0:
            raise Unsupported("exact line search: nonpositive curvature along g")
        self.last = gg / curv
        return self.last


POLICIES = {
    "constant": Constant,
    "diminishing": Diminishing,
    "staircase": Staircase,
    "adaptive": AdaptiveAccumulator,
    "explicit": Explicit,
    "bb": BarzilaiBorwein,
    "exact": ExactQuadratic,
}


def next_step(policy, t, w, g, problem=None):
    return policy.next_step(t, w, g, problem)


def policy_from_dict(doc, problem=None):
    """Build a policy from ``{"kind": ..., **params}``.

    ``{"kind": "constant", "step_over_L": c}`` gives ``eta = c / L`` using the
    problem's certified smoothness modulus.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InvalidArgument("schedule document needs a 'kind' key")
    kind = doc["kind"]
    if kind not in POLICIES:
        raise InvalidArgument(f"unknown schedule kind {kind!r}")
    args = {k: v for k, v in doc.items() if k != "kind"}
    if kind == "constant" and "step_over_L" in args:
        if problem is None:
            raise InvalidArgument("step_over_L needs a problem with certified L")
        args = {"eta": args.pop("step_over_L") / problem.constants.L}
    try:
        return POLICIES[kind](**args)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for schedule {kind!r}: {exc}") from None
