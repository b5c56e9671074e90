import json

import numpy as np
import pytest

from qcbt.config import default_config
from qcbt.events import read_events
from qcbt.scenarios import ScenarioError, run_scenario, trial_rng, write_report

SMALL = {
    "correlations": dict(correlations={"n_pairs": 3000}),
    "uncertainty-sweep": dict(sweep={"n_values": (100, 300), "trials": 4},
                              efficiency={"idler_efficiencies": (0.5, 1.0), "pair_budget": 2000, "trials": 3}),
    "track": dict(track={"n": 200, "trials": 3, "stream_batch": 200, "stream_batches": 3},
                  displacement={"mirror_positions": (0, 50)}),
    "background": dict(background={"n": 200, "trials": 3}, displacement={"mirror_positions": (0, 50)},
                       aperture={"n": 200, "trials": 3}),
    "overlap-bound": dict(overlap={"random_configs": 50}),
    "crb-check": dict(crb={"n": 200, "trials": 20}),
    "bench": dict(bench={"n_events": 20000}),
}


def small(scenario, seed=3, **extra):
    sec = {k: dict(v) for k, v in SMALL[scenario].items()}
    for k, v in extra.items():
        sec.setdefault(k, {}).update(v)
    return default_config(scenario, seed, **sec)


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_trial_rng_streams_independent():
    a = trial_rng(1, "x", 0).random(4)
    assert np.array_equal(a, trial_rng(1, "x", 0).random(4))
    assert not np.array_equal(a, trial_rng(1, "x", 1).random(4))
    assert not np.array_equal(a, trial_rng(1, "y", 0).random(4))
    assert not np.array_equal(a, trial_rng(2, "x", 0).random(4))


@pytest.mark.parametrize("scenario", sorted(SMALL))
def test_scenario_runs_and_writes(scenario, tmp_path):
    rep = run_scenario(small(scenario))
    assert rep.tables and rep.wall_clock > 0
    write_report(rep, tmp_path)
    meta = json.loads((tmp_path / "report.json").read_text())
    assert meta["scenario"] == scenario and meta["version"]
    for name, table in rep.tables.items():
        lines = (tmp_path / f"{name}.csv").read_text().splitlines()
        assert lines[0] == ",".join(table.columns)
        assert len(lines) == 1 + len(table.rows)


@pytest.mark.parametrize("scenario", ["track", "correlations", "uncertainty-sweep"])
def test_same_seed_is_byte_identical(scenario, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_report(run_scenario(small(scenario, 9)), a)
    write_report(run_scenario(small(scenario, 9)), b)
    assert csv_bytes(a) == csv_bytes(b)
    c = tmp_path / "c"
    write_report(run_scenario(small(scenario, 10)), c)
    assert csv_bytes(a) != csv_bytes(c)


def test_workers_do_not_change_results(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_report(run_scenario(small("track")), a)
    write_report(run_scenario(small("track", run={"workers": 2})), b)
    assert csv_bytes(a) == csv_bytes(b)


def test_keep_events_files_readable(tmp_path):
    rep = run_scenario(small("track"), keep_events=True)
    write_report(rep, tmp_path)
    files = sorted(tmp_path.glob("events_*.bin"))
    assert files
    ev = read_events(files[0])
    assert len(ev) > 0 and np.all(np.diff(ev["t"]) >= 0)


def test_correlations_writes_pairs(tmp_path):
    write_report(run_scenario(small("correlations")), tmp_path)
    lines = (tmp_path / "pairs.csv").read_text().splitlines()
    assert len(lines) > 3000


def test_track_recovers_step():
    rep = run_scenario(small("track", track={"n": 2000, "trials": 6, "stream_batch": 0}))
    rows = [r for r in rep.summary["track"] if r["mirror_t"] == 50]
    for r in rows:
        assert abs(r["mean_dx"] - 25.0) < 5 * max(r["se_dx"], 0.1)


def test_runtime_failure_is_wrapped():
    with pytest.raises(ScenarioError) as e:
        run_scenario(small("crb-check", crb={"n": 0}))
    assert e.value.stage == "crb-check" and e.value.seed == 3
