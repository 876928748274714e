import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argox.enrichment import (
    blend_state_regional,
    enrich_all_states,
    reconstruct_regional_series,
)
from argox.panels import PanelError
from argox.weeks import EpiWeek, week_range
from tests.conftest import make_panel

W0 = EpiWeek(2014, 40)


def _weights_oracle(values, pops):
    """Direct-summation weighted mean, independent of the implementation."""
    total = sum(pops)
    acc = 0.0
    for v, p in zip(values, pops):
        acc += v * (p / total)
    return acc


def test_two_state_weighted_mean(small_registry):
    # volumes 10 and 20 with populations 1M and 3M -> 17.5
    panels = {
        "S01": make_panel(W0, 1, ["flu"], [[10.0]]),
        "S02": make_panel(W0, 1, ["flu"], [[20.0]]),
        "S03": make_panel(W0, 1, ["flu"], [[5.0]]),
    }
    regional = reconstruct_regional_series(panels, small_registry, [W0])
    assert regional["R1"].at(W0, "flu") == pytest.approx(17.5, abs=1e-12)


def test_equal_values_pass_through(small_registry):
    panels = {g: make_panel(W0, 2, ["flu"], [[7.0], [7.0]]) for g in small_registry.states}
    regional = reconstruct_regional_series(panels, small_registry, panels["S01"].weeks)
    for r in small_registry.regions:
        np.testing.assert_allclose(regional[r].values, 7.0)


def test_three_state_region_matches_oracle(rng):
    from argox.geo import GeoRegistry

    registry = GeoRegistry(
        region_of={"S01": "R1", "S02": "R1", "S03": "R1"},
        population={"S01": 2.5e6, "S02": 1.1e6, "S03": 8.9e6},
        standalone=frozenset(),
    )
    weeks = week_range(W0, W0.add(3))
    vals = {g: rng.uniform(0, 100, (4, 2)) for g in registry.states}
    panels = {g: make_panel(W0, 4, ["a", "b"], v) for g, v in vals.items()}
    regional = reconstruct_regional_series(panels, registry, weeks)["R1"]
    pops = [registry.population[g] for g in ("S01", "S02", "S03")]
    for i in range(4):
        for j in range(2):
            expect = _weights_oracle([vals[g][i, j] for g in ("S01", "S02", "S03")], pops)
            assert regional.values[i, j] == pytest.approx(expect, abs=1e-12)


def test_reconstruction_weights_sum_to_one(small_registry):
    # all-ones volumes isolate the weight sum
    panels = {g: make_panel(W0, 1, ["flu"], [[1.0]]) for g in small_registry.states}
    regional = reconstruct_regional_series(panels, small_registry, [W0])
    for r in small_registry.regions:
        assert regional[r].at(W0, "flu") == pytest.approx(1.0, abs=1e-12)


def test_region_without_members_rejected(small_registry):
    with pytest.raises(PanelError, match="no member"):
        reconstruct_regional_series({}, small_registry, [W0])


def test_blend_weights(small_registry):
    state = make_panel(W0, 1, ["flu"], [[3.0]])
    region = make_panel(W0, 1, ["flu"], [[6.0]])
    out = blend_state_regional(state, region, "S01", small_registry)
    assert out.enriched
    assert out.panel.at(W0, "flu") == pytest.approx(4.0, abs=1e-12)


def test_standalone_passes_through_unchanged(small_registry):
    state = make_panel(W0, 1, ["flu"], [[3.0]])
    region = make_panel(W0, 1, ["flu"], [[99.0]])
    out = blend_state_regional(state, region, "S03", small_registry)
    assert not out.enriched
    assert out.panel is state


def test_blend_fixed_point(small_registry):
    state = make_panel(W0, 1, ["flu"], [[42.0]])
    out = blend_state_regional(state, state, "S01", small_registry)
    assert out.panel.at(W0, "flu") == pytest.approx(42.0, abs=1e-12)


def test_blend_misaligned_weeks_rejected(small_registry):
    state = make_panel(W0, 2, ["flu"], [[1.0], [2.0]])
    region = make_panel(W0.add(1), 2, ["flu"], [[1.0], [2.0]])
    with pytest.raises(PanelError, match="misaligned"):
        blend_state_regional(state, region, "S01", small_registry)


@settings(max_examples=50)
@given(st.floats(0, 100), st.floats(0, 100))
def test_blend_between_inputs(s, r):
    from argox.geo import GeoRegistry

    registry = GeoRegistry({"S01": "R1"}, {"S01": 1.0}, frozenset())
    state = make_panel(W0, 1, ["flu"], [[s]])
    region = make_panel(W0, 1, ["flu"], [[r]])
    out = blend_state_regional(state, region, "S01", registry).panel.at(W0, "flu")
    assert min(s, r) - 1e-12 <= out <= max(s, r) + 1e-12


def test_enrich_all_states_missing_terms_as_zero(small_registry):
    # S02 lacks the "cough" term; its regional blend still sees it via S01.
    panels = {
        "S01": make_panel(W0, 1, ["cough", "flu"], [[30.0, 10.0]]),
        "S02": make_panel(W0, 1, ["flu"], [[20.0]]),
        "S03": make_panel(W0, 1, ["flu"], [[5.0]]),
    }
    enriched = enrich_all_states(panels, small_registry, [W0])
    # regional cough = 30 * 0.25 = 7.5; S02 blend = (2/3)*0 + (1/3)*7.5
    assert enriched["S02"].panel.at(W0, "cough") == pytest.approx(2.5, abs=1e-12)
    assert enriched["S03"].enriched is False


def test_enrichment_disabled_returns_raw(small_registry):
    panels = {g: make_panel(W0, 1, ["flu"], [[11.0]]) for g in small_registry.states}
    out = enrich_all_states(panels, small_registry, [W0], enabled=False)
    assert all(not e.enriched for e in out.values())
    assert out["S01"].panel.at(W0, "flu") == 11.0
