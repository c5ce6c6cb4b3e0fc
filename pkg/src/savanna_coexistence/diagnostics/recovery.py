"""Recovery of the truncated process: the weighted functional Q and its drift.

Q(xi) = prefactor * sum_x exp(-lambda * |x|) * w[xi(x)] with w = (0, 1, theta)
and |x| the sup norm of torus-centered coordinates. While every small box is
below density a0, Q grows in mean at rate at least rho * Q, which pushes some
box past a0 within t0 * log L.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import binomtest

from ..config import CONFIDENCE, DEFAULT_A0, MAX_HALVINGS
from ..engine import exact_transitions, run_model
from ..errors import NoFeasibleConstants
from ..lattice import Configuration, Geometry
from ..meanfield import survival_condition
from ..models import CheckResult, RateParams, RecoveryConstants, sup_norm_integral_bound
from ..seeding import as_generator, rng_for

logger = logging.getLogger(__name__)

Prefactor = Literal["lambda_d", "one"]


class WeightSpec(BaseModel):
    """Site weights w(0) = 0, w(1) = 1, w(2) = theta."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    theta: float = Field(..., gt=0)

    @property
    def table(self) -> npt.NDArray[np.float64]:
        return np.array([0.0, 1.0, self.theta])


def recovery_constants(
    p: RateParams, d: int, a0_init: float = DEFAULT_A0, *, alpha: float | None = None
) -> RecoveryConstants:
    """theta at the interval midpoint, a0 halved until the drift margin rho is positive.

    Raises :class:`NoFeasibleConstants` when mu * nu >= omega * (beta - nu) or
    when ``MAX_HALVINGS`` halvings do not make rho positive.
    """
    w = p.omega_min
    if not survival_condition(p, w) or p.nu <= 0:
        raise NoFeasibleConstants(
            f"(mu+omega)/omega < theta < beta/nu is empty for beta={p.beta}, mu={p.mu}, "
            f"nu={p.nu}, omega={w}"
        )
    lo, hi = (p.mu + w) / w, p.beta / p.nu
    theta = (lo + hi) / 2
    a0 = a0_init
    for halvings in range(MAX_HALVINGS + 1):
        rho = min(theta * w - (w + p.mu), (p.beta * (1 - 4 * a0) - theta * p.nu) / theta)
        if rho > 0:
            break
        a0 /= 2
    else:
        raise NoFeasibleConstants(
            f"drift margin stayed <= 0 after {MAX_HALVINGS} halvings of a0 (rho={rho:.3g})"
        )
    eps0 = (1 - (1 - a0) ** (1 / d)) / 4
    alpha = 0.75 * d if alpha is None else alpha
    if not d / 2 < alpha < d:
        raise ValueError(f"alpha={alpha} must lie in (d/2, d) = ({d / 2}, {d})")
    rc = RecoveryConstants(
        theta=theta,
        a0=a0,
        rho=rho,
        eps0=eps0,
        t0=2 * d / rho,
        alpha=alpha,
        d=d,
        halvings=halvings,
    )
    logger.info(
        "recovery constants: theta=%.6g a0=%.6g (%d halvings) rho=%.6g eps0=%.6g t0=%.6g",
        theta,
        a0,
        halvings,
        rho,
        eps0,
        rc.t0,
    )
    return rc


def recovery_invariants(rc: RecoveryConstants, p: RateParams) -> list[str]:
    """Which defining inequalities of ``rc`` fail (empty when all hold)."""
    w = p.omega_min
    problems = []
    if not (p.mu + w) / w < rc.theta < (p.beta / p.nu if p.nu > 0 else math.inf):
        problems.append("theta outside ((mu+omega)/omega, beta/nu)")
    if not rc.theta * w - (w + p.mu) >= rc.rho:
        problems.append("theta*omega - (omega+mu) < rho")
    if not p.beta * (1 - 4 * rc.a0) - rc.theta * p.nu >= rc.theta * rc.rho * (1 - 1e-12):
        problems.append("beta(1-4a0) - theta*nu < theta*rho")
    if not (1 - 4 * rc.eps0) ** rc.d > 1 - 2 * rc.a0:
        problems.append("(1-4 eps0)^d <= 1 - 2 a0")
    if not math.isclose(rc.t0, 2 * rc.d / rc.rho):
        problems.append("t0 != 2d/rho")
    return problems


# ─── Q and its drift ──────────────────────────────────────────────────────────


def _decay(g: Geometry, lam: float) -> npt.NDArray[np.float64]:
    return np.exp(-lam * g.norm_grid.astype(np.float64))


def _prefactor(lam: float, d: int, prefactor: Prefactor) -> float:
    return lam**d if prefactor == "lambda_d" else 1.0


def q_functional(
    xi: Configuration,
    lam: float,
    weights: WeightSpec,
    prefactor: Prefactor = "lambda_d",
) -> float:
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    g = xi.geometry
    mask = xi.state != 0
    if not mask.any():
        return 0.0
    w = weights.table[xi.state[mask]]
    return _prefactor(lam, g.d, prefactor) * float(np.dot(_decay(g, lam)[mask], w))


def q_upper_bound(theta: float, lam: float, d: int) -> float:
    """theta * exp(lambda/2) * integral of exp(-|z|_inf) over R^d."""
    return theta * sup_norm_integral_bound(d, lam)


def infinitesimal_mean_q(xi: Configuration, rc: RecoveryConstants, p: RateParams) -> float:
    """Exact generator of Q at ``xi`` for the truncated process, from the maintained counts."""
    g = xi.geometry
    boxes = g.require_boxes()
    lam = rc.lam(g.L)
    decay = _decay(g, lam)
    w = p.omega_min
    state = xi.state
    per_box = xi.box_n2_nbhd[np.ix_(*([boxes.site_box] * g.d))]
    coeff = np.zeros(g.shape, dtype=np.float64)
    coeff[state == 1] = (rc.theta - 1) * w - p.mu
    zeros = state == 0
    coeff[zeros] = p.beta * per_box[zeros] / g.window_volume(g.L)
    coeff[state == 2] = -rc.theta * p.nu
    return lam**g.d * float(np.sum(coeff * decay))


def infinitesimal_mean_q_slow(xi: Configuration, rc: RecoveryConstants, p: RateParams) -> float:
    """Sum of rate times Q increment over every transition of the enumerated generator."""
    g = xi.geometry
    lam = rc.lam(g.L)
    weight = WeightSpec(theta=rc.theta).table
    total = 0.0
    for x, new, rate in exact_transitions("truncated", xi, p):
        old = int(xi.state[x])
        total += rate * (weight[new] - weight[old]) * math.exp(-lam * g.norm(x))
    return lam**g.d * total


def min_flip_change(x: tuple[int, ...], g: Geometry, lam: float, theta: float) -> float:
    """Smallest |change of Q| any single flip at ``x`` can cause."""
    return lam**g.d * math.exp(-lam * g.norm(x)) * min(1.0, theta - 1.0)


def flip_changes(x: tuple[int, ...], g: Geometry, lam: float, theta: float) -> dict[str, float]:
    scale = lam**g.d * math.exp(-lam * g.norm(x))
    return {
        "0<->1": scale,
        "1<->2": scale * (theta - 1.0),
        "0<->2": scale * theta,
    }


def random_sparse_configuration(
    g: Geometry, a0: float, rng: np.random.Generator, *, fill: float = 1.0
) -> Configuration:
    """Random configuration whose every small box holds at most a0 * |box| nonzero sites."""
    boxes = g.require_boxes()
    cap = math.floor(a0 * boxes.box_volume)
    state = np.zeros(g.shape, dtype=np.int8)
    if cap == 0:
        return Configuration(g, state)
    for box in np.ndindex(*boxes.shape):
        k = int(rng.integers(0, math.floor(cap * fill) + 1))
        if k == 0:
            continue
        sites = np.array(list(boxes.box_sites(box)))
        chosen = sites[rng.choice(len(sites), size=k, replace=False)]
        state[tuple(chosen.T)] = rng.integers(1, 3, size=k)
    return Configuration(g, state)


def recovery_drift_sweep(
    g: Geometry,
    p: RateParams,
    rc: RecoveryConstants,
    n_configs: int,
    seed: int | np.random.Generator,
) -> CheckResult:
    """Assert mu(xi) >= rho * Q(xi) on random configurations below box density a0.

    The geometry's epsilon0 must not exceed ``rc.eps0`` for the neighborhood
    containment the inequality relies on.
    """
    if g.epsilon0 is None or g.epsilon0 > rc.eps0 + 1e-15:
        raise ValueError(f"geometry epsilon0={g.epsilon0} must be <= eps0={rc.eps0:.6g}")
    rng = as_generator(seed)
    weights = WeightSpec(theta=rc.theta)
    lam = rc.lam(g.L)
    worst = math.inf
    failures = 0
    for _ in range(n_configs):
        xi = random_sparse_configuration(g, rc.a0, rng)
        gap = infinitesimal_mean_q(xi, rc, p) - rc.rho * q_functional(xi, lam, weights)
        worst = min(worst, gap)
        if gap < 0:
            failures += 1
    return CheckResult(
        name="drift dominates rho*Q below density a0",
        passed=failures == 0,
        detail=f"{failures} of {n_configs} configurations violate mu >= rho*Q",
        statistics={"min_gap": worst, "configs": float(n_configs)},
    )


# ─── Monte Carlo ──────────────────────────────────────────────────────────────


class RecoveryEstimate(BaseModel):
    tau_samples: list[float] = Field(default_factory=list)
    exceed_fraction: float = 0.0
    ci_low: float = 0.0
    ci_high: float = 1.0
    horizon: float = 0.0
    bound: float = 1.0
    threshold_mass: int = 0
    error: str | None = None


def seed_configuration(g: Geometry, n_nonzero: int, rng: np.random.Generator) -> Configuration:
    """``n_nonzero`` trees placed uniformly in the origin box, grass elsewhere."""
    boxes = g.require_boxes()
    sites = np.array(list(boxes.box_sites((0,) * g.d)))
    k = min(n_nonzero, len(sites))
    chosen = sites[rng.choice(len(sites), size=k, replace=False)]
    state = np.zeros(g.shape, dtype=np.int8)
    state[tuple(chosen.T)] = 2
    return Configuration(g, state)


def estimate_recovery_time(
    g: Geometry,
    p: RateParams,
    rc: RecoveryConstants,
    alpha: float,
    replicas: int,
    seed: int,
    *,
    a0: float | None = None,
) -> RecoveryEstimate:
    """Sample the first time some box reaches density a0, starting from L^alpha trees in one box.

    Runs stop at t0 * log L; the fraction that get there without recovering is
    compared with L^(d/2 - alpha). ``a0`` overrides ``rc.a0`` for the
    threshold only.
    """
    boxes = g.require_boxes()
    level = rc.a0 if a0 is None else a0
    mass = math.ceil(level * boxes.box_volume - 1e-12)
    horizon = rc.t0 * math.log(g.L)
    n0 = math.ceil(g.L**alpha)
    if n0 > boxes.box_volume:
        logger.warning("L^alpha=%d exceeds the box volume %d; capping", n0, boxes.box_volume)
    taus: list[float] = []
    for r in range(replicas):
        rng = rng_for(seed, 0, r)
        init = seed_configuration(g, n0, rng)
        run = run_model("truncated", g, p, init, horizon, rng, stop_at_box_mass=mass)
        taus.append(run.stopped_at if run.stopped_at is not None else math.inf)
    exceed = sum(1 for t in taus if t > horizon)
    ci = binomtest(exceed, replicas).proportion_ci(confidence_level=CONFIDENCE)
    logger.info(
        "recovery: %d/%d runs exceeded t0 log L = %.4g (threshold %d sites)",
        exceed,
        replicas,
        horizon,
        mass,
    )
    return RecoveryEstimate(
        tau_samples=taus,
        exceed_fraction=exceed / replicas,
        ci_low=float(ci.low),
        ci_high=float(ci.high),
        horizon=horizon,
        bound=float(g.L ** (g.d / 2 - alpha)),
        threshold_mass=mass,
    )


@dataclass
class DynkinResidual:
    """Martingale residuals M_t = Q(t) - Q(0) - int mu ds across replicas."""

    times: npt.NDArray[np.float64]
    residuals: npt.NDArray[np.float64]
    drift_bound: float
    max_abs_drift: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def mean(self) -> npt.NDArray[np.float64]:
        return self.residuals.mean(axis=0)

    @property
    def std_err(self) -> npt.NDArray[np.float64]:
        n = self.residuals.shape[0]
        return self.residuals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(
            self.residuals.shape[1]
        )

    @property
    def second_moment(self) -> npt.NDArray[np.float64]:
        return (self.residuals**2).mean(axis=0)

    def fitted_constant(self, L: int, d: int) -> float:
        """Smallest C with E M_t^2 <= C L^-d t at every sampled t > 0."""
        t = self.times
        keep = t > 0
        if not keep.any():
            return 0.0
        return float(np.max(self.second_moment[keep] * L**d / t[keep]))

    def mean_within(self, sigmas: float = 4.0) -> bool:
        se = self.std_err
        return bool(np.all(np.abs(self.mean) <= sigmas * se + 1e-15))


def dynkin_residuals(
    g: Geometry,
    p: RateParams,
    rc: RecoveryConstants,
    init: Configuration,
    horizon: float,
    replicas: int,
    seed: int,
    *,
    n_points: int = 10,
) -> DynkinResidual:
    """Residuals of Q's Dynkin decomposition along truncated-process runs."""
    lam = rc.lam(g.L)
    weights = WeightSpec(theta=rc.theta)
    times = np.linspace(0.0, horizon, n_points + 1)
    residuals = np.zeros((replicas, n_points + 1))
    max_drift = 0.0
    for r in range(replicas):
        q0 = q_functional(init, lam, weights)
        path: list[tuple[float, float, float]] = []

        def observe(t: float, c: Configuration) -> None:
            path.append((t, q_functional(c, lam, weights), infinitesimal_mean_q(c, rc, p)))

        run_model("truncated", g, p, init, horizon, rng_for(seed, 0, r), observer=observe)
        ev_t = np.array([e[0] for e in path])
        ev_q = np.array([e[1] for e in path])
        ev_mu = np.array([e[2] for e in path])
        max_drift = max(max_drift, float(np.abs(ev_mu).max()))
        # Piecewise-constant integral of mu up to each sample time.
        for k, t in enumerate(times):
            i = int(np.searchsorted(ev_t, t, side="right")) - 1
            seg_end = np.minimum(np.append(ev_t[1 : i + 1], t), t)
            integral = float(np.sum(ev_mu[: i + 1] * (seg_end - ev_t[: i + 1])))
            residuals[r, k] = ev_q[i] - q0 - integral
    bound = rc.theta * (p.beta + p.omega_max + p.mu + p.nu) * sup_norm_integral_bound(g.d, lam)
    out = DynkinResidual(
        times=times, residuals=residuals, drift_bound=bound, max_abs_drift=max_drift
    )
    if max_drift > bound:
        out.notes.append(f"observed |mu| {max_drift:.4g} above the a-priori bound {bound:.4g}")
    return out


def q_bound_check(xi: Configuration, rc: RecoveryConstants) -> CheckResult:
    lam = rc.lam(xi.geometry.L)
    q = q_functional(xi, lam, WeightSpec(theta=rc.theta))
    bound = q_upper_bound(rc.theta, lam, xi.geometry.d)
    return CheckResult(
        name="Q <= theta * U",
        passed=q <= bound,
        statistics={"Q": q, "bound": bound},
    )
