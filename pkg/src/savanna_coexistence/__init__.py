"""Savanna coexistence: Staver-Levin and Krone lattice models and their limits."""

from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as _distribution_version

try:
    # Built from pyproject.toml, so there is no second literal to keep in step.
    # The manifest of every experiment records it as the code version.
    __version__ = _distribution_version("savanna-coexistence")
except PackageNotFoundError:  # pragma: no cover - only without an install
    # An obviously non-release marker beats a plausible wrong one in a manifest.
    __version__ = "0.0.0+source"
