"""Well-mixed ODE limit of the model and its equilibrium structure.

u1, u2 are the densities of healthy and infected hosts (u0 = 1 - u1 - u2):

    u1' = lambda1*u1*(1 - u1 - u2) - u1 - lambda2*u2*u1 + delta*u2
    u2' = lambda1*u2*(1 - u1 - u2) - u2 + lambda2*u2*u1 - delta*u2

The total density u = u1 + u2 follows the closed logistic equation
u' = (lambda1*(1-u) - 1)*u with equilibrium u* = 1 - 1/lambda1 when
lambda1 > 1; on the manifold u1 + u2 = u* the infection survives iff
lambda2 * u* > delta, settling at u2 = u* - delta/lambda2.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

_TOL = 1e-9

Rates = namedtuple("Rates", "lambda1 lambda2 delta")


@dataclass(frozen=True)
class MFState:
    """Densities of healthy (u1) and infected (u2) hosts."""

    u1: float
    u2: float

    def __post_init__(self):
        if self.u1 < -_TOL or self.u2 < -_TOL or self.u1 + self.u2 > 1.0 + _TOL:
            raise ValueError(
                f"state ({self.u1}, {self.u2}) outside the simplex "
                "u1 >= 0, u2 >= 0, u1 + u2 <= 1")


def mf_derivative(s: MFState, params) -> tuple:
    """Right-hand sides (du1/dt, du2/dt); params needs lambda1/lambda2/delta."""
    l1, l2, d = params.lambda1, params.lambda2, params.delta
    u1, u2 = s.u1, s.u2
    empty = 1.0 - u1 - u2
    du1 = l1 * u1 * empty - u1 - l2 * u2 * u1 + d * u2
    du2 = l1 * u2 * empty - u2 + l2 * u2 * u1 - d * u2
    return du1, du2


@dataclass
class MFTrajectory:
    times: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    @property
    def endpoint(self) -> MFState:
        return MFState(float(self.u1[-1]), float(self.u2[-1]))

    def to_csv(self) -> str:
        lines = ["t,u1,u2"]
        for t, a, b in zip(self.times, self.u1, self.u2):
            lines.append(f"{t:.17g},{a:.17g},{b:.17g}")
        return "\n".join(lines) + "\n"


def mf_integrate(s0: MFState, params, horizon: float, step: float = 1e-3,
                 sample_every: int | None = None) -> MFTrajectory:
    """Classical fixed-step 4th-order integration of the density system.

    Raises if any step leaves the simplex by more than 1e-9 (no silent
    clamping).  Samples every ``sample_every`` steps (default ~2000 rows).
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    n_steps = max(1, round(horizon / step))
    if sample_every is None:
        sample_every = max(1, n_steps // 2000)
    l1, l2, d = params.lambda1, params.lambda2, params.delta

    def rhs(u1, u2):
        empty = 1.0 - u1 - u2
        return (l1 * u1 * empty - u1 - l2 * u2 * u1 + d * u2,
                l1 * u2 * empty - u2 + l2 * u2 * u1 - d * u2)

    u1, u2 = s0.u1, s0.u2
    ts, xs, ys = [0.0], [u1], [u2]
    h = step
    for i in range(n_steps):
        k1a, k1b = rhs(u1, u2)
        k2a, k2b = rhs(u1 + 0.5 * h * k1a, u2 + 0.5 * h * k1b)
        k3a, k3b = rhs(u1 + 0.5 * h * k2a, u2 + 0.5 * h * k2b)
        k4a, k4b = rhs(u1 + h * k3a, u2 + h * k3b)
        u1 += (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        u2 += (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        if u1 < -_TOL or u2 < -_TOL or u1 + u2 > 1.0 + _TOL:
            raise ValueError(
                f"integration left the simplex at t={(i + 1) * h}: "
                f"({u1}, {u2}); reduce the step")
        if (i + 1) % sample_every == 0 or i + 1 == n_steps:
            ts.append((i + 1) * h)
            xs.append(u1)
            ys.append(u2)
    return MFTrajectory(np.array(ts), np.array(xs), np.array(ys))


def coexistence_condition(params) -> bool:
    """Strict survival condition for the infection: lambda2*(1 - 1/lambda1)
    exceeds delta (false whenever lambda1 <= 1, where hosts die out)."""
    if params.lambda1 <= 1.0:
        return False
    return params.lambda2 * (1.0 - 1.0 / params.lambda1) > params.delta


def host_equilibrium(params) -> float:
    """u* = 1 - 1/lambda1 (requires lambda1 > 1)."""
    if params.lambda1 <= 1.0:
        raise ValueError("host equilibrium needs lambda1 > 1")
    return 1.0 - 1.0 / params.lambda1


def mf_equilibria(params) -> list:
    """Fixed points with stability tags from the two scalar reductions:
    the u-equation along the total density and the u2-equation on the
    manifold u1 + u2 = u*."""
    out = []
    l1, l2, d = params.lambda1, params.lambda2, params.delta
    out.append((MFState(0.0, 0.0), "stable" if l1 <= 1.0 else "unstable"))
    if l1 > 1.0:
        ustar = 1.0 - 1.0 / l1
        host_only_stable = not (l2 * ustar > d)
        out.append((MFState(ustar, 0.0),
                    "stable" if host_only_stable else "unstable"))
        if coexistence_condition(params):
            out.append((MFState(d / l2, ustar - d / l2), "stable"))
    return out
