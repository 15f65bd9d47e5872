"""File formats: survival CSV, adjacency edge lists, design JSON, traces and reports."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import DataError
from .graph import SpatialGraph
from .survival import SurvivalDataset


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    import io as _io

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------- survival CSV

def read_survival_csv(path) -> SurvivalDataset:
    """Read ``region,time,event,x1,...,xp`` rows; regions keep first-appearance order."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read survival data {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file")
        if header[:3] != ["region", "time", "event"]:
            raise DataError(f"{path}: header must start with region,time,event; got {','.join(header)}")
        p = len(header) - 3
        regions, times, events, X = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                t = float(row[1])
                e = row[2].strip()
                x = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if e not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: event must be 0 or 1, got {e!r}")
            if not (np.isfinite(t) and t >= 0):
                raise DataError(f"{path}:{lineno}: time must be finite and >= 0")
            if not all(np.isfinite(x)):
                raise DataError(f"{path}:{lineno}: non-finite covariate")
            regions.append(row[0].strip())
            times.append(t)
            events.append(e == "1")
            X.append(x)
    if not times:
        raise DataError(f"{path}: no records")
    ids = list(dict.fromkeys(regions))
    pos = {r: k for k, r in enumerate(ids)}
    return SurvivalDataset(
        region=[pos[r] for r in regions],
        time=times,
        event=events,
        X=np.array(X, dtype=float).reshape(len(times), p),
        region_ids=tuple(ids),
    )


def write_survival_csv(path, data: SurvivalDataset) -> None:
    header = ["region", "time", "event"] + [f"x{k + 1}" for k in range(data.p)]
    rows = (
        [data.region_ids[r], float(t), int(e)] + [float(v) for v in x]
        for r, t, e, x in zip(data.region, data.time, data.event, data.X)
    )
    write_csv(path, header, rows)


# ---------------------------------------------------------------- adjacency

def read_graph(path) -> SpatialGraph:
    """Edge list: ``regionA regionB`` per line; a lone id declares an isolated region."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read graph {path}: {exc}") from exc
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) > 2:
            raise DataError(f"{path}:{lineno}: expected one or two region ids")
        if len(parts) == 2 and parts[0] == parts[1]:
            raise DataError(f"{path}:{lineno}: self-loop on {parts[0]!r}")
        edges.append(tuple(parts))
    if not edges:
        raise DataError(f"{path}: no regions")
    return SpatialGraph.from_edges(edges)


def write_graph(path, graph: SpatialGraph) -> None:
    lines = [f"{a} {b}" for a, b in graph.edges()]
    deg = graph.adjacency.sum(axis=1)
    lines += [str(r) for r, dgr in zip(graph.region_ids, deg) if dgr == 0]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- schemas and designs

def load_schema(name: str) -> dict:
    return json.loads(resources.files("gwcrp").joinpath("schemas", f"{name}.schema.json").read_text())


def validate(obj, schema_name: str) -> None:
    try:
        jsonschema.validate(_jsonable(obj), load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise DataError(f"{schema_name} does not match its schema: {exc.message}") from exc


def read_design(path):
    from .simulation import SimulationDesign

    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read design {path}: {exc}") from exc
    validate(obj, "design")
    try:
        return SimulationDesign.from_json(obj)
    except (ValueError, KeyError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_design(path, design) -> None:
    write_json(path, design.to_json())


# ---------------------------------------------------------------- traces

def trace_records(trace):
    """NDJSON-ready dicts ``{iter, labels, k, loglik_per_region}`` with 1-based labels."""
    for b in range(trace.draws):
        rec = {
            "iter": int(trace.burn_in + b + 1),
            "labels": (trace.labels[b] + 1).tolist(),
            "k": int(trace.k[b]),
        }
        rec["loglik_per_region"] = None if trace.loglik is None else trace.loglik[b].tolist()
        yield rec


def write_trace_ndjson(path, trace) -> None:
    lines = (json.dumps(rec, separators=(",", ":")) for rec in trace_records(trace))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace_ndjson(path):
    """Return ``(iters, labels (0-based), k, loglik)`` arrays from a trace file."""
    iters, labels, ks, ll = [], [], [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            iters.append(rec["iter"])
            labels.append(rec["labels"])
            ks.append(rec["k"])
            ll.append(rec["loglik_per_region"])
    loglik = None if any(v is None for v in ll) else np.array(ll, dtype=float)
    return np.array(iters), np.array(labels, dtype=np.int64) - 1, np.array(ks), loglik
