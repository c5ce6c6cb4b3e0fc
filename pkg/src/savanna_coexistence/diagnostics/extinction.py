"""Extinction functionals of Krone's process.

With theta' between beta/nu and (mu+omega)/omega, the unweighted sum
S(eta) = #1's + theta' * #2's has nonpositive drift whenever
mu * nu >= omega * (beta - nu), so it is a nonnegative supermartingale. The
discounted Q'(eta) = sum_x exp(-lambda' |x|) w'[eta(x)] has drift bounded by
per-site coefficients that are both nonpositive once beta * exp(lambda' L) <= theta' nu.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel

from ..errors import LambdaTooLarge, NoFeasibleConstants
from ..lattice import Configuration
from ..models import RateParams
from .recovery import WeightSpec, q_functional

logger = logging.getLogger(__name__)


class ExtinctionReport(BaseModel):
    theta_prime: float = 0.0
    S_value: float = 0.0
    mu_S: float = 0.0
    Qprime: float = 0.0
    mu_Qprime_bound: float = 0.0
    coeff_sapling: float = 0.0
    coeff_tree: float = 0.0
    error: str | None = None

    @property
    def supermartingale(self) -> bool:
        return self.mu_S <= 0

    @property
    def coefficients_nonpositive(self) -> bool:
        return self.coeff_sapling <= 0 and self.coeff_tree <= 0


def theta_prime(p: RateParams) -> float:
    """Midpoint of [beta/nu, (mu+omega)/omega]."""
    w = p.omega_min
    if p.nu <= 0 or w <= 0:
        raise NoFeasibleConstants("theta' needs nu > 0 and omega > 0")
    lo, hi = p.beta / p.nu, (p.mu + w) / w
    if lo > hi:
        logger.warning("theta' interval [%.4g, %.4g] is empty; S has no sign guarantee", lo, hi)
    return (lo + hi) / 2


def s_drift(eta: Configuration, p: RateParams, tp: float) -> float:
    """Exact generator of S at ``eta`` for Krone's process."""
    g = eta.geometry
    state = eta.state
    w = p.omega_min
    n1 = int(np.count_nonzero(state == 1))
    n2 = int(np.count_nonzero(state == 2))
    births = float(eta.window2[state == 0].sum()) * p.beta / g.window_volume(g.L)
    return n1 * (w * (tp - 1) - p.mu) + births - n2 * tp * p.nu


def extinction_functionals(
    eta: Configuration, p: RateParams, lam_prime: float
) -> ExtinctionReport:
    """S, its drift, Q' and the per-site bound on Q''s drift.

    Raises :class:`LambdaTooLarge` when beta * exp(lambda' L) > theta' nu, which
    would leave the tree coefficient positive.
    """
    g = eta.geometry
    tp = theta_prime(p)
    coeff_tree = p.beta * math.exp(lam_prime * g.L) - tp * p.nu
    if coeff_tree > 0:
        raise LambdaTooLarge(
            f"beta*exp(lambda'*L) = {p.beta * math.exp(lam_prime * g.L):.6g} exceeds "
            f"theta'*nu = {tp * p.nu:.6g}"
        )
    coeff_sapling = (tp - 1) * p.omega_min - p.mu
    weights = WeightSpec(theta=tp)
    state = eta.state
    s_value = float(np.count_nonzero(state == 1) + tp * np.count_nonzero(state == 2))
    decay = np.exp(-lam_prime * g.norm_grid.astype(np.float64))
    bound = float(
        coeff_sapling * decay[state == 1].sum() + coeff_tree * decay[state == 2].sum()
    )
    return ExtinctionReport(
        theta_prime=tp,
        S_value=s_value,
        mu_S=s_drift(eta, p, tp),
        Qprime=q_functional(eta, lam_prime, weights, prefactor="one"),
        mu_Qprime_bound=bound,
        coeff_sapling=coeff_sapling,
        coeff_tree=coeff_tree,
    )


def max_lambda_prime(p: RateParams, L: int) -> float:
    """Largest lambda' with beta * exp(lambda' L) <= theta' nu (0 if none)."""
    tp = theta_prime(p)
    if p.beta <= 0:
        return math.inf
    ratio = tp * p.nu / p.beta
    return math.log(ratio) / L if ratio > 1 else 0.0
