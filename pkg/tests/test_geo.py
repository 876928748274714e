import pytest

from argox.geo import RegistryError, default_registry, load_registry, write_registry


def test_default_registry_shape():
    reg = default_registry()
    assert len(reg.states) == 51
    assert len(reg.regions) == 10
    assert reg.standalone == frozenset({"HI", "AK", "VT", "MT", "ND", "ME", "SD"})


def test_region_nine_members():
    reg = default_registry()
    assert set(reg.region_members("R9")) == {"CA", "AZ", "NV", "HI"}


def test_regions_partition_states():
    reg = default_registry()
    union = []
    for r in reg.regions:
        members = reg.region_members(r)
        assert members
        union.extend(members)
    assert sorted(union) == list(reg.states)
    assert len(union) == 51


def test_unknown_region_rejected():
    reg = default_registry()
    with pytest.raises(RegistryError):
        reg.region_members("R11")


def test_nyc_shares_ny_region():
    reg = default_registry()
    assert reg.region_of["NYC"] == reg.region_of["NY"]


def test_populations_positive():
    reg = default_registry()
    assert all(p > 0 for p in reg.population.values())


def test_florida_rejected(tmp_path):
    path = tmp_path / "reg.csv"
    path.write_text("geo,region,population,standalone\nFL,R4,21000000,0\n")
    with pytest.raises(RegistryError, match="excluded geography"):
        load_registry(path)


def test_missing_nyc_rejected(tmp_path):
    reg = default_registry()
    path = tmp_path / "reg.csv"
    write_registry(reg, path)
    lines = [l for l in path.read_text().splitlines() if not l.startswith("NYC")]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(RegistryError, match="51 state-level"):
        load_registry(path)


def test_duplicate_geography_rejected(tmp_path):
    path = tmp_path / "reg.csv"
    path.write_text(
        "geo,region,population,standalone\nS01,R1,100,0\nS01,R1,100,0\n"
    )
    with pytest.raises(RegistryError, match="duplicate"):
        load_registry(path)


def test_nonpositive_population_rejected(tmp_path):
    path = tmp_path / "reg.csv"
    path.write_text("geo,region,population,standalone\nS01,R1,0,0\n")
    with pytest.raises(RegistryError, match="population"):
        load_registry(path)


def test_synthetic_registry_bypasses_us_check(tmp_path):
    path = tmp_path / "reg.csv"
    path.write_text(
        "geo,region,population,standalone\nS01,R1,100,0\nS02,R1,200,1\n"
    )
    reg = load_registry(path)
    assert reg.states == ("S01", "S02")
    assert reg.standalone == frozenset({"S02"})


def test_registry_roundtrip(tmp_path, small_registry):
    path = tmp_path / "reg.csv"
    write_registry(small_registry, path)
    back = load_registry(path)
    assert back.region_of == small_registry.region_of
    assert back.population == small_registry.population
    assert back.standalone == small_registry.standalone
