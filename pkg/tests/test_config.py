"""The Literal aliases in config.py must list exactly the vocabularies next to them."""

from __future__ import annotations

from typing import get_args

import pytest

from savanna_coexistence import config


@pytest.mark.parametrize(
    ("alias", "values"),
    [
        (config.ExperimentKind, config.EXPERIMENT_KINDS),
        (config.ModelKind, config.MODEL_KINDS),
        (config.BoundaryRule, config.BOUNDARY_RULES),
        (config.InitialPattern, config.INITIAL_PATTERNS),
        (config.SweepableParam, config.SWEEPABLE_PARAMS),
    ],
)
def test_literal_matches_tuple(alias, values):
    """Adding a kind to one place and not the other is caught here."""
    assert get_args(alias) == values


def test_stream_names_follow_stream_ids():
    ids = [config.STREAM_V, config.STREAM_U, config.STREAM_W, config.STREAM_WHAT]
    ids.append(config.STREAM_ARROW)
    assert ids == list(range(len(config.STREAM_NAMES)))


def test_pilot_seeds_sit_above_any_grid_index():
    assert config.PILOT_GRID_OFFSET >= 2**32
