import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from argox.audit import LookaheadAudit
from argox.backtest import BacktestConfig, ConfigError, run_backtest
from argox.synth import SynthConfig, generate_synthetic
from argox.weeks import EpiWeek

SMALL = dict(window=30, national_lags=10, cv_folds=5)


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("world")
    w = generate_synthetic(
        SynthConfig(seed=17, n_states=3, n_weeks=160, n_regions=2, n_terms=5,
                    n_standalone=1),
        tmp,
    )
    return w


def _config(world, start_idx=110, end_idx=139, **over):
    args = dict(
        ili=str(world.paths["ili"]),
        trends_dir=str(world.paths["trends_dir"]),
        registry=str(world.paths["registry"]),
        start=world.weeks[start_idx],
        end=world.weeks[end_idx],
        **SMALL,
    )
    args.update(over)
    return BacktestConfig(**args)


def test_shapes_and_audit(world, tmp_path):
    audit = LookaheadAudit()
    cfg = _config(world)
    paths = run_backtest(cfg, tmp_path / "run", audit=audit)
    records = pd.read_csv(paths["records"])
    n_weeks, n_states = 30, 3
    for method in ("argox", "naive", "var1"):
        assert (records["method"] == method).sum() == n_weeks * n_states
    # every first-step, second-step, and benchmark fit is audited
    assert audit.verify() > 0
    fs_tasks = [r for r in audit.records if r.task.startswith("first_step")]
    assert all(r.max_ili_week == r.fit_week.prev() for r in fs_tasks)
    assert all(r.max_search_week == r.fit_week for r in fs_tasks)
    digest = json.loads(paths["summary_json"].read_text())
    assert digest["audit_passed"] is True
    assert digest["audit_records"] == len(audit.records)


def test_provenance_split(world, tmp_path):
    paths = run_backtest(_config(world), tmp_path / "run")
    records = pd.read_csv(paths["records"])
    argox = records[records["method"] == "argox"]
    assert set(argox.loc[argox["geo"] == "S03", "provenance"]) == {"standalone"}
    assert set(argox.loc[argox["geo"] == "S01", "provenance"]) == {"joint"}
    # intervals present and ordered for the main method
    assert (argox["lo"] <= argox["estimate"]).all()
    assert (argox["estimate"] <= argox["hi"]).all()


def test_rerun_byte_identical(world, tmp_path):
    cfg = _config(world, end_idx=125)
    p1 = run_backtest(cfg, tmp_path / "r1")
    p2 = run_backtest(cfg, tmp_path / "r2")
    for key in ("records", "summary", "per_state", "relative_mse", "diagnostics"):
        assert Path(p1[key]).read_bytes() == Path(p2[key]).read_bytes()


def test_resolved_config_roundtrips(world, tmp_path):
    cfg = _config(world, end_idx=125)
    p1 = run_backtest(cfg, tmp_path / "r1")
    cfg2 = BacktestConfig.from_json(p1["resolved_config"])
    p2 = run_backtest(cfg2, tmp_path / "r2")
    assert Path(p1["records"]).read_bytes() == Path(p2["records"]).read_bytes()


def test_first_step_cache_reused(world, tmp_path):
    cfg = _config(world, end_idx=125)
    out = tmp_path / "run"
    p1 = run_backtest(cfg, out)
    stamp = Path(p1["first_step"]).stat().st_mtime_ns
    p2 = run_backtest(cfg, out)
    assert Path(p2["first_step"]).stat().st_mtime_ns == stamp  # untouched
    records = pd.read_csv(p2["records"])
    assert not records.empty


def test_requested_week_outside_panel(world, tmp_path):
    cfg = _config(world)
    bad = BacktestConfig(**{**cfg.__dict__, "end": EpiWeek(2030, 1)})
    with pytest.raises(Exception, match="2030"):
        run_backtest(bad, tmp_path / "run")


def test_missing_trends_geo_rejected(world, tmp_path):
    import shutil

    data2 = tmp_path / "data2"
    shutil.copytree(Path(world.paths["trends_dir"]).parent, data2)
    (data2 / "trends" / "S02.csv").unlink()
    cfg = _config(world)
    cfg = BacktestConfig(**{**cfg.__dict__, "trends_dir": str(data2 / "trends")})
    with pytest.raises(Exception, match="S02"):
        run_backtest(cfg, tmp_path / "run")


def test_methods_subset_only_naive(world, tmp_path):
    cfg = _config(world, end_idx=120, methods=("naive",))
    paths = run_backtest(cfg, tmp_path / "run")
    records = pd.read_csv(paths["records"])
    assert set(records["method"]) == {"naive"}
    assert not (Path(tmp_path / "run") / "nonexistent").exists()


def test_external_method_joined(world, tmp_path):
    ext = tmp_path / "gft.csv"
    rows = []
    for k in range(110, 121):
        w = world.weeks[k]
        for g in world.states:
            rows.append((w.year, w.week, g, 2.0))
    pd.DataFrame(rows, columns=["year", "week", "geo", "estimate"]).to_csv(ext, index=False)
    cfg = _config(world, end_idx=120, methods=("naive", f"external:{ext}"))
    paths = run_backtest(cfg, tmp_path / "run")
    records = pd.read_csv(paths["records"])
    assert (records["method"] == "external:gft").sum() == 11 * 3
    assert np.allclose(
        records.loc[records["method"] == "external:gft", "estimate"], 2.0
    )


def test_routing_auto_writes_standalone(world, tmp_path):
    cfg = _config(
        world, end_idx=120,
        routing="auto",
        routing_insample=(world.weeks[0], world.weeks[99]),
    )
    with pytest.raises(ValueError, match="candidates"):
        # only 3 states: fewer than five contiguous candidates must fail loudly
        run_backtest(cfg, tmp_path / "run")


def test_routing_auto_with_enough_states(tmp_path):
    w = generate_synthetic(
        SynthConfig(seed=23, n_states=7, n_weeks=160, n_regions=2, n_terms=4,
                    n_standalone=0),
        tmp_path / "data",
    )
    cfg = BacktestConfig(
        ili=str(w.paths["ili"]), trends_dir=str(w.paths["trends_dir"]),
        registry=str(w.paths["registry"]),
        start=w.weeks[110], end=w.weeks[120],
        routing="auto", routing_insample=(w.weeks[0], w.weeks[99]),
        **SMALL,
    )
    paths = run_backtest(cfg, tmp_path / "run")
    standalone_file = tmp_path / "run" / "standalone.csv"
    assert standalone_file.exists()
    table = pd.read_csv(standalone_file)
    assert table["selected"].sum() == 5
    records = pd.read_csv(paths["records"])
    chosen = set(table.loc[table["selected"] == 1, "geo"])
    argox = records[records["method"] == "argox"]
    assert set(argox.loc[argox["provenance"] == "standalone", "geo"]) == chosen


def test_enrichment_ablation_changes_estimates(world, tmp_path):
    cfg_on = _config(world, end_idx=118)
    cfg_off = BacktestConfig(**{**cfg_on.__dict__, "enrichment": False})
    p_on = run_backtest(cfg_on, tmp_path / "on")
    p_off = run_backtest(cfg_off, tmp_path / "off")
    a = pd.read_csv(p_on["records"])
    b = pd.read_csv(p_off["records"])
    joint_a = a[(a["method"] == "argox") & (a["provenance"] == "joint")]["estimate"]
    joint_b = b[(b["method"] == "argox") & (b["provenance"] == "joint")]["estimate"]
    assert not np.allclose(joint_a, joint_b)
    # naive is untouched by the ablation
    np.testing.assert_allclose(
        a[a["method"] == "naive"]["estimate"], b[b["method"] == "naive"]["estimate"]
    )


def test_noiseless_world_first_step_beats_naive(tmp_path):
    w = generate_synthetic(
        SynthConfig(seed=31, n_states=4, n_weeks=170, n_regions=2, n_terms=6,
                    search_noise=0.0, zero_inflation=0.0,
                    national_zero_inflation=0.0, n_standalone=0),
        tmp_path / "data",
    )
    cfg = BacktestConfig(
        ili=str(w.paths["ili"]), trends_dir=str(w.paths["trends_dir"]),
        registry=str(w.paths["registry"]),
        start=w.weeks[115], end=w.weeks[165], **SMALL,
    )
    paths = run_backtest(cfg, tmp_path / "run")
    # with noiseless search signal, the full model should crush carry-forward
    summary = pd.read_csv(paths["summary"])
    whole = summary[summary["period"] == "whole"].set_index("method")
    assert whole.loc["argox", "mse"] < 0.5 * whole.loc["naive", "mse"]


def test_quality_gradient_state_vs_national(tmp_path):
    # heavy zero-inflation at one state vs clean national data: the state's
    # first-step estimates should be worse, echoing the sparsity motivation
    from argox.backtest import prepare_inputs

    wins = []
    for seed in range(20):
        w = generate_synthetic(
            SynthConfig(seed=700 + seed, n_states=3, n_weeks=120, n_regions=1,
                        n_terms=8, search_noise=0.3,
                        zero_inflation=0.01,
                        zero_inflation_by_state={"S01": 0.78},
                        national_zero_inflation=0.01, n_standalone=0),
            tmp_path / f"d{seed}",
        )
        cfg = BacktestConfig(
            ili=str(w.paths["ili"]), trends_dir=str(w.paths["trends_dir"]),
            registry=str(w.paths["registry"]),
            start=w.weeks[70], end=w.weeks[119],
            window=25, national_lags=10, cv_folds=5,
        )
        data = prepare_inputs(cfg, tmp_path / f"r{seed}")
        from argox.panels import parse_ili_csv

        ili = parse_ili_csv(w.paths["ili"])
        errs = {"S01": [], "US": []}
        for wk in data.eval_weeks:
            for g in ("S01", "US"):
                errs[g].append((data.first_step.at(wk, g) - ili.at(wk, g)) ** 2)
        wins.append(np.mean(errs["S01"]) > np.mean(errs["US"]))
    assert np.median(wins) == 1.0
