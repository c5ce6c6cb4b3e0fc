"""The diagnostics suite: every deterministic check that applies to one parameter set."""

from __future__ import annotations

import logging
import math

from ..boxprocess import lumpability_discrepancies
from ..errors import HypothesisFails, NoFeasibleConstants
from ..ide import build_test_functions, default_test_h, theorem3_constants, verify_lemma81
from ..lattice import BoxGeometry, Configuration, Geometry
from ..meanfield import survival_condition
from ..models import CheckResult, DiagnosticsReport, RateParams, StepOmega
from ..seeding import rng_for
from .brw import check_cosh_reference, cosh_excess
from .extinction import s_drift, theta_prime
from .recovery import (
    q_bound_check,
    recovery_constants,
    recovery_drift_sweep,
    recovery_invariants,
)

logger = logging.getLogger(__name__)

LUMP_BOXES = BoxGeometry(d=1, L=3, ell=1, boxes_per_axis=2)


def _survival_checks(
    report: DiagnosticsReport, p: RateParams, g: Geometry, seed: int, n_configs: int
) -> None:
    try:
        rc = recovery_constants(p, g.d)
    except NoFeasibleConstants as e:
        report.add(CheckResult(name="recovery constants", passed=False, detail=str(e)))
        return
    report.constants.update(
        {
            "theta": rc.theta,
            "a0": rc.a0,
            "rho": rc.rho,
            "eps0": rc.eps0,
            "t0": rc.t0,
            "alpha": rc.alpha,
            "lambda": rc.lam(g.L),
        }
    )
    problems = recovery_invariants(rc, p)
    report.add(
        CheckResult(
            name="recovery constants",
            passed=not problems,
            detail="; ".join(problems),
            statistics={"halvings": float(rc.halvings)},
        )
    )
    report.add(q_bound_check(Configuration.filled(g, 2), rc))
    if g.epsilon0 is not None and g.epsilon0 <= rc.eps0 and g.periodic:
        report.add(recovery_drift_sweep(g, p, rc, n_configs, rng_for(seed, 1, 0)))
    else:
        logger.info(
            "skipping drift sweep: geometry epsilon0=%s, need <= %.4g", g.epsilon0, rc.eps0
        )


def _extinction_checks(
    report: DiagnosticsReport, p: RateParams, g: Geometry, seed: int, n_configs: int
) -> None:
    # Outside the survival region theta' lies in [beta/nu, (mu + omega)/omega].
    tp = theta_prime(p)
    report.constants["theta_prime"] = tp
    rng = rng_for(seed, 2, 0)
    worst = -math.inf
    for _ in range(n_configs):
        eta = Configuration(g, rng.integers(0, 3, size=g.shape))
        worst = max(worst, s_drift(eta, p, tp))
    report.add(
        CheckResult(
            name="S is a supermartingale",
            passed=worst <= 0,
            statistics={"max_drift": worst, "configs": float(n_configs)},
        )
    )


def _test_function_checks(
    report: DiagnosticsReport, p: RateParams, kappa: float, d: int
) -> None:
    try:
        c = theorem3_constants(p, kappa, d)
    except HypothesisFails as e:
        report.add(
            CheckResult(
                name="test-function hypotheses", passed=True, detail=f"not applicable: {e}"
            )
        )
        return
    report.constants.update(
        {k: float(v) for k, v in c.model_dump(exclude={"ledger"}).items()}
    )
    if c.ledger is not None:
        report.constants.update({f"ledger.{k}": v for k, v in c.ledger.model_dump().items()})
    f = build_test_functions(c, default_test_h(c))
    lemma = verify_lemma81(f, c, p)
    notes = [] if lemma.omega_saturated else ["growth rate not saturated on the support"]
    if not lemma.conclusive:
        notes.append("grid tolerance exceeds the margin")
    report.add(
        CheckResult(
            name="test functions expand",
            passed=lemma.passed,
            detail="; ".join(notes),
            statistics={
                "min_deriv_S": lemma.min_deriv_S,
                "min_deriv_T": lemma.min_deriv_T,
                "threshold": lemma.threshold,
                "tolerance": lemma.tolerance,
            },
        )
    )


def run_diagnostics(
    p: RateParams,
    g: Geometry,
    *,
    seed: int = 0,
    n_configs: int = 200,
    include_ide: bool = True,
) -> DiagnosticsReport:
    """Evaluate constants and run the deterministic assertion sweeps for ``p`` on ``g``."""
    report = DiagnosticsReport(params=p)
    w = p.omega_min
    if w > 0 and survival_condition(p, w):
        _survival_checks(report, p, g, seed, n_configs)
    elif w > 0 and p.nu > 0:
        _extinction_checks(report, p, g, seed, n_configs)

    report.constants["cosh_excess"] = cosh_excess(1.0)
    report.add(CheckResult(name="cosh(1) - 1 matches 0.543", passed=check_cosh_reference()))

    problems = lumpability_discrepancies(LUMP_BOXES, p)
    report.add(
        CheckResult(
            name="box chain is the lumped truncated process",
            passed=not problems,
            detail="; ".join(problems[:3]),
            statistics={"discrepancies": float(len(problems))},
        )
    )
    if include_ide and isinstance(p.omega, StepOmega):
        _test_function_checks(report, p, g.kappa, g.d)
    logger.info(
        "diagnostics: %d checks, %d failed",
        len(report.checks),
        sum(1 for c in report.checks if not c.passed),
    )
    return report


def render_records(report: DiagnosticsReport) -> str:
    """Structured text records: one ``constant`` line per ledger entry, one ``check`` line each."""
    lines = [f"constant\t{k}\t{v!r}" for k, v in sorted(report.constants.items())]
    for c in report.checks:
        stats = " ".join(f"{k}={v:.6g}" for k, v in sorted(c.statistics.items()))
        lines.append(
            f"check\t{c.name}\t{'PASS' if c.passed else 'FAIL'}\t{stats}\t{c.detail}".rstrip()
        )
    return "\n".join(lines) + "\n"

