import json

import numpy as np

from oldroyd_splash import __version__
from oldroyd_splash.io import COLUMNS, read_snapshot, snapshot_name, write_run
from oldroyd_splash.params import RunRecord
from oldroyd_splash.scenario import Scenario, simulate


def small():
    return Scenario.from_dict({"curve": {"kind": "circle", "radius": 1.0},
                               "params": {"grid_n": 16, "dt": 0.01, "t_final": 0.09},
                               "initial_velocity": {"kind": "rigid_rotation", "omega": 1.0},
                               "conformal": {"identity_map_mode": True}})


def test_empty_record(tmp_path):
    path = write_run(RunRecord(), tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]
    man = json.loads(path.read_text())
    assert man["snapshots"] == [] and man["version"] == __version__


def test_ten_snapshots(tmp_path):
    sc = small()
    rec = simulate(sc)
    assert len(rec.snapshots) == 10
    write_run(rec, tmp_path, scenario=sc)
    files = sorted(tmp_path.glob("snapshot_*.csv"))
    assert len(files) == 10
    ts = [float(f.stem.split("_t")[1]) for f in files]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["scenario_hash"] == sc.digest()
    assert man["tolerances"] == {"tol_div": 1e-8, "tol_picard": 1e-8, "tol_solver": 1e-8}
    assert man["params"] == sc.params.to_dict()
    # values read back exactly
    data = read_snapshot(files[-1])
    f = rec.snapshots[-1].fields
    assert list(data) == list(COLUMNS)
    assert np.array_equal(data["v1"], f.velocity[:, 0])
    assert np.array_equal(data["T22"], f.stress[:, 2])
    assert np.array_equal(data["X2"], f.flux[:, 1])


def test_rewrite_clears_old_snapshots(tmp_path):
    sc = small()
    write_run(simulate(sc), tmp_path)
    write_run(simulate(sc, t_final=0.04), tmp_path)
    assert len(list(tmp_path.glob("snapshot_*.csv"))) == 5


def test_same_run_twice_identical(tmp_path):
    sc = small()
    a, b = tmp_path / "a", tmp_path / "b"
    write_run(simulate(sc), a, scenario=sc)
    write_run(simulate(sc), b, scenario=sc)
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_snapshot_name():
    assert snapshot_name(3, 0.25) == "snapshot_0003_t0.2500000000.csv"
