"""Reusable formatting helpers for tool and CLI output."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from typing import Any

from .errors import (
    ConfigInvalid,
    GridTooCoarse,
    HypothesisFails,
    NoFeasibleConstants,
    SavannaError,
)
from .models import (
    CheckResult,
    DiagnosticsReport,
    FixedPoint,
    Lemma81Report,
    RateParams,
    StabilityVerdict,
    StepOmega,
)

logger = logging.getLogger(__name__)

FORMAT_FIELD_DESC = "Output format: 'markdown' (default, readable) or 'json' (machine-readable)."


def json_out(payload: Any) -> str:
    """Serialise a tool payload for ``format='json'`` output."""
    return json.dumps(payload, indent=2, ensure_ascii=False, default=str)


def num(value: float | None, digits: int = 6) -> str:
    if value is None:
        return "n/a"
    return f"{value:.{digits}g}"


def md_cell(value: object) -> str:
    # Check names and error details end up in table cells; pipes and line
    # breaks would split the row.
    return (
        str(value)
        .replace("\\", "\\\\")
        .replace("|", "\\|")
        .replace("\r\n", " ")
        .replace("\n", " ")
        .replace("\r", " ")
    )


def md_table(header: Iterable[str], rows: Iterable[Iterable[object]]) -> str:
    head = list(header)
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(md_cell(c) for c in row) + " |" for row in rows]
    return "\n".join(lines)


def describe_rates(p: RateParams) -> str:
    base = f"beta={num(p.beta)}, mu={num(p.mu)}, nu={num(p.nu)}"
    if isinstance(p.omega, StepOmega):
        w = p.omega
        return f"{base}, omega0={num(w.omega0)}, omega1={num(w.omega1)}, delta0={num(w.delta0)}"
    return f"{base}, omega={num(p.omega.value)}"


def render_verdict(v: StabilityVerdict, survives: bool) -> str:
    meaning = {
        "Unstable": "the all-grass state is unstable, so trees invade",
        "Attracting": "the all-grass state attracts, so trees die out",
        "Degenerate": "the determinant vanishes; linearisation is inconclusive",
    }[v.kind]
    return "\n".join(
        [
            f"**Origin: {v.kind}**: {meaning}.",
            f"- det = {num(v.determinant)}, trace = {num(v.trace)}",
            f"- survival condition mu*nu < omega*(beta - nu): {'yes' if survives else 'no'}",
        ]
    )


def render_fixed_points(points: list[FixedPoint]) -> str:
    if not points:
        return "No interior fixed point."
    return md_table(
        ["regime", "G", "S", "T", "residual"],
        (
            [fp.regime, num(fp.state.G), num(fp.state.S), num(fp.state.T), num(fp.residual, 3)]
            for fp in points
        ),
    )


def render_constants(constants: Mapping[str, float], title: str = "Constants") -> str:
    lines = [f"## {title}", ""]
    lines.append(md_table(["name", "value"], ([k, num(v)] for k, v in constants.items())))
    return "\n".join(lines)


def render_check(c: CheckResult) -> list[object]:
    stats = ", ".join(f"{k}={num(v, 4)}" for k, v in sorted(c.statistics.items()))
    return [c.name, "PASS" if c.passed else "FAIL", stats, c.detail]


def render_diagnostics(report: DiagnosticsReport) -> str:
    failed = sum(1 for c in report.checks if not c.passed)
    lines = [
        f"## Diagnostics: {len(report.checks)} checks, {failed} failed",
        "",
    ]
    if report.params is not None:
        lines += [f"Rates: {describe_rates(report.params)}", ""]
    header = ["check", "result", "statistics", "detail"]
    lines.append(md_table(header, map(render_check, report.checks)))
    if report.constants:
        lines += ["", render_constants(report.constants, "Constants ledger")]
    return "\n".join(lines)


def render_lemma81(rep: Lemma81Report, crossing: float | None = None) -> str:
    verdict = "PASS" if rep.passed else "FAIL"
    lines = [
        f"## Expanding test functions: {verdict}",
        f"- min dS/dt on the sapling support: {num(rep.min_deriv_S)} ({rep.nodes_S} nodes)",
        f"- min dT/dt on the tree support: {num(rep.min_deriv_T)} ({rep.nodes_T} nodes)",
        f"- required: >= {num(rep.threshold)} - {num(rep.tolerance, 3)} (grid h={num(rep.h)})",
        f"- growth rate saturated at omega0: {'yes' if rep.omega_saturated else 'no'}",
    ]
    if not rep.conclusive and not rep.error:
        lines.append("- grid tolerance exceeds the margin; refine h for a conclusive check")
    if crossing is not None:
        lines.append(f"- tree derivative turns negative from nu = {num(crossing)}")
    if rep.error:
        lines.append(f"- error: {rep.error}")
    return "\n".join(lines)


def handle_error(e: Exception, context: str = "") -> str:
    """Consistent error formatting. Also logs the failure so stdio
    deployments leave a trail."""
    logger.warning(
        "error in %s: %s: %s",
        context or "tool",
        type(e).__name__,
        e,
        exc_info=True,
    )
    prefix = f"Error in {context}: " if context else "Error: "
    if isinstance(e, ConfigInvalid):
        where = f" at '{e.field_path}'" if e.field_path else ""
        return f"{prefix}invalid configuration{where}: {e}"
    if isinstance(e, NoFeasibleConstants):
        return f"{prefix}no admissible constants for these rates ({e})"
    if isinstance(e, HypothesisFails):
        return f"{prefix}the rates do not satisfy the required hypothesis ({e})"
    if isinstance(e, GridTooCoarse):
        return f"{prefix}grid too coarse; use a smaller h ({e})"
    if isinstance(e, SavannaError | ValueError):
        return f"{prefix}{e}"
    return f"{prefix}{type(e).__name__}: {e}"
