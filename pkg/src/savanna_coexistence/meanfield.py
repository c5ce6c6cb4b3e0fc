"""Mean-field ODEs of the grass/sapling/tree models.

The well-mixed system is

    dS/dt = beta*G*T - (omega(G) + mu)*S
    dT/dt = omega(G)*S - nu*T

with G := 1 - S - T derived rather than integrated, so the three fractions
always sum to one. Linearising at the all-grass state gives the matrix
``[[-(omega+mu), beta], [omega, -nu]]``; its trace is always negative, so the
sign of the determinant alone decides whether trees invade.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np
import numpy.typing as npt

from .config import RESIDUAL_TOL, STEP_TOL
from .errors import StepTooLarge
from .models import (
    ConstantOmega,
    FixedPoint,
    GSTState,
    RateParams,
    StabilityVerdict,
    StepOmega,
    exact,
)

logger = logging.getLogger(__name__)

IntegrationMethod = Literal["rk4", "euler"]


def survival_condition(p: RateParams, omega_value: float) -> bool:
    """True iff ``mu*nu < omega*(beta - nu)``, decided on the exact rationals of the floats."""
    return exact(p.mu) * exact(p.nu) < exact(omega_value) * (exact(p.beta) - exact(p.nu))


def jacobian_at_origin(p: RateParams, omega_value: float) -> npt.NDArray[np.float64]:
    return np.array(
        [[-(omega_value + p.mu), p.beta], [omega_value, -p.nu]],
        dtype=np.float64,
    )


def _exact_determinant(p: RateParams, omega_value: float) -> Fraction:
    w = exact(omega_value)
    return (w + exact(p.mu)) * exact(p.nu) - exact(p.beta) * w


def classify_origin(p: RateParams, omega_value: float) -> StabilityVerdict:
    """Stability of the all-grass state from the sign of the Jacobian's determinant."""
    det = _exact_determinant(p, omega_value)
    if det < 0:
        kind: Literal["Unstable", "Attracting", "Degenerate"] = "Unstable"
    elif det > 0:
        kind = "Attracting"
    else:
        kind = "Degenerate"
    return StabilityVerdict(
        kind=kind,
        determinant=float(det),
        trace=-(omega_value + p.mu) - p.nu,
    )


def classify_by_eigenvalues(p: RateParams, omega_value: float) -> str:
    """Independent classification from the eigenvalues, used to cross-check the determinant rule."""
    eig = np.linalg.eigvals(jacobian_at_origin(p, omega_value))
    return "Attracting" if bool(np.all(eig.real < 0)) else "Unstable"


def phase_grid(
    betas: npt.ArrayLike, mus: npt.ArrayLike, nu: float, omega_value: float
) -> npt.NDArray[np.int8]:
    """Determinant signs over a beta x mu grid: -1 Unstable, +1 Attracting, 0 Degenerate.

    Vectorised float arithmetic; cells within rounding of zero should be
    re-checked with :func:`classify_origin`.
    """
    b = np.asarray(betas, dtype=np.float64)[:, None]
    m = np.asarray(mus, dtype=np.float64)[None, :]
    det = (omega_value + m) * nu - b * omega_value
    return np.sign(det).astype(np.int8)


# ─── Right-hand sides and fixed points ────────────────────────────────────────


def rhs(p: RateParams, S: float, T: float) -> tuple[float, float, float]:
    """(dG/dt, dS/dt, dT/dt) at the state (1-S-T, S, T)."""
    G = 1.0 - S - T
    w = p.omega_of(G)
    dS = p.beta * G * T - (w + p.mu) * S
    dT = w * S - p.nu * T
    dG = p.mu * S + p.nu * T - p.beta * G * T
    return dG, dS, dT


def _root_for(p: RateParams, w: float) -> GSTState | None:
    if w <= 0 or p.beta <= 0:
        return None
    G = (w + p.mu) * p.nu / (p.beta * w)
    T = w * (1.0 - G) / (w + p.nu)
    S = p.nu * T / w
    if not (0.0 < G < 1.0 and S > 0.0 and T > 0.0):
        return None
    return GSTState(G=1.0 - S - T, S=S, T=T)


def interior_fixed_points(p: RateParams) -> list[FixedPoint]:
    """Interior equilibria, one per growth regime that contains its own root.

    Returns an empty list when no admissible root exists.
    """
    if isinstance(p.omega, ConstantOmega):
        candidates: list[tuple[Literal["constant", "omega0", "omega1"], float]] = [
            ("constant", p.omega.value)
        ]
    else:
        assert isinstance(p.omega, StepOmega)
        candidates = [("omega0", p.omega.omega0), ("omega1", p.omega.omega1)]

    points: list[FixedPoint] = []
    for regime, w in candidates:
        state = _root_for(p, w)
        if state is None:
            continue
        if isinstance(p.omega, StepOmega):
            below = state.G < 1.0 - p.omega.delta0
            if below != (regime == "omega0"):
                logger.debug("dropping %s root at G=%.6g: outside its regime", regime, state.G)
                continue
        residual = max(abs(v) for v in rhs(p, state.S, state.T))
        if residual >= RESIDUAL_TOL:
            raise ArithmeticError(f"fixed point residual {residual:.3g} in regime {regime}")
        points.append(FixedPoint(state=state, regime=regime, residual=residual))
    return points


# ─── Integration ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class MeanFieldTrajectory:
    """Samples of a mean-field run; ``G`` is derived from ``S`` and ``T``."""

    t: npt.NDArray[np.float64]
    S: npt.NDArray[np.float64]
    T: npt.NDArray[np.float64]

    @property
    def G(self) -> npt.NDArray[np.float64]:
        return 1.0 - self.S - self.T

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> GSTState:
        S, T = float(self.S[i]), float(self.T[i])
        return GSTState(G=1.0 - S - T, S=S, T=T)

    @property
    def final(self) -> GSTState:
        return self[len(self) - 1]


def _vector_field(p: RateParams, y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    _, dS, dT = rhs(p, float(y[0]), float(y[1]))
    return np.array([dS, dT])


def integrate_meanfield(
    p: RateParams,
    x0: GSTState,
    t_end: float,
    dt: float,
    *,
    method: IntegrationMethod = "rk4",
) -> MeanFieldTrajectory:
    """Fixed-step integration of the reduced (S, T) system.

    The last step is shortened so the trajectory ends exactly at ``t_end``.
    Raises :class:`StepTooLarge` as soon as a coordinate leaves [0, 1] by more
    than the step tolerance.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")

    n_steps = math.ceil(t_end / dt - 1e-12) if t_end > 0 else 0
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, 2))
    times[0] = 0.0
    y = np.array([x0.S, x0.T], dtype=np.float64)
    states[0] = y
    t = 0.0
    for k in range(1, n_steps + 1):
        h = min(dt, t_end - t)
        if method == "euler":
            y = y + h * _vector_field(p, y)
        else:
            k1 = _vector_field(p, y)
            k2 = _vector_field(p, y + 0.5 * h * k1)
            k3 = _vector_field(p, y + 0.5 * h * k2)
            k4 = _vector_field(p, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_end if k == n_steps else t + h
        g = 1.0 - y[0] - y[1]
        if min(y[0], y[1], g) < -STEP_TOL or max(y[0], y[1], g) > 1.0 + STEP_TOL:
            raise StepTooLarge(
                f"left the simplex at t={t:.6g} (S={y[0]:.3g}, T={y[1]:.3g}); reduce dt={dt}"
            )
        times[k] = t
        states[k] = y
    return MeanFieldTrajectory(t=times, S=states[:, 0], T=states[:, 1])
