"""Deterministic run output: one CSV per snapshot plus a manifest.

Floats are written with ``repr``, the shortest string that reads back to
the same double, so identical runs give byte-identical files.
"""

import json
from pathlib import Path

import numpy as np

from . import __version__

COLUMNS = ("node_i", "node_j", "x1", "x2", "v1", "v2", "q", "T11", "T12", "T22", "X1", "X2")
SNAPSHOT_GLOB = "snapshot_*.csv"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if hasattr(x, "value"):
        return x.value
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dump_json(obj, path):
    text = json.dumps(obj, sort_keys=True, indent=2, default=_jsonable)
    Path(path).write_text(text + "\n")
    return Path(path)


def snapshot_name(k, t):
    return f"snapshot_{k:04d}_t{t:.10f}.csv"


def snapshot_csv(snap, labels, n):
    f = snap.fields
    N = len(f.pressure)
    idx = np.arange(N)
    cols = [idx % n, idx // n, labels[:, 0], labels[:, 1], f.velocity[:, 0], f.velocity[:, 1], f.pressure,
            f.stress[:, 0], f.stress[:, 1], f.stress[:, 2], f.flux[:, 0], f.flux[:, 1]]
    lines = [",".join(COLUMNS)]
    for r in range(N):
        vals = [str(int(cols[0][r])), str(int(cols[1][r]))] + [repr(float(c[r])) for c in cols[2:]]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def write_run(record, out_dir, scenario=None):
    """Write ``record`` under ``out_dir`` and return the manifest path.

    Snapshot files left over from an earlier run in the same directory are
    removed first so the tree reflects this record only.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob(SNAPSHOT_GLOB):
        old.unlink()
    files = []
    if record.snapshots:
        labels = record.snapshots[0].fields.flux
        n = len(record.snapshots[0].curve_conformal)
        for k, snap in enumerate(record.snapshots):
            name = snapshot_name(k, snap.t)
            (out / name).write_text(snapshot_csv(snap, labels, n))
            files.append({"file": name, "t": float(snap.t)})
    manifest = dict(record.manifest)
    manifest.update({"tool": "oldroyd-splash", "version": __version__, "columns": list(COLUMNS),
                     "snapshots": files})
    params = manifest.get("params")
    if params:
        manifest["tolerances"] = {k: v for k, v in params.items() if k.startswith("tol_")}
    if scenario is not None:
        manifest["scenario"] = scenario.to_dict()
        manifest["scenario_hash"] = scenario.digest()
    return dump_json(manifest, out / "manifest.json")


def read_snapshot(path):
    """Columns of a snapshot CSV as a dict of arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(COLUMNS)}
