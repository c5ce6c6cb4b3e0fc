"""Builders shared by the test modules (plain functions, importable by name)."""

from __future__ import annotations

from savanna_coexistence.models import RateParams


def rates(beta: float, mu: float, nu: float, omega: float | dict) -> RateParams:
    """Build rates from plain numbers; a float ``omega`` is a constant growth rate."""
    spec = omega if isinstance(omega, dict) else {"kind": "constant", "value": omega}
    return RateParams.model_validate({"beta": beta, "mu": mu, "nu": nu, "omega": spec})


def step(omega0: float, omega1: float, delta0: float) -> dict:
    return {"kind": "step", "omega0": omega0, "omega1": omega1, "delta0": delta0}
