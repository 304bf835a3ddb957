"""Deterministic delimited/JSON artifact writers and the run manifest.

Every writer emits byte-stable output for identical inputs: floats are
rendered with shortest-roundtrip repr, newlines are always "\\n", JSON
keys keep insertion order, and nothing embeds a timestamp. CSV schemas
are registered here with a version; JSON documents carry their own
schema_version field.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridMismatch, LengthMismatch
from .fields import CHARACTERISTIC_COLUMNS, RasterField
from .network import NetworkModel, apply_overrides
from .pipeline import PredictionReport, report_to_dict
from .transient import INDEX_COLUMNS, StabilityIndices

CSV_SCHEMA_VERSION = 1

INDICES_HEADER = ("scenario_id",) + INDEX_COLUMNS
CHARACTERISTICS_HEADER = ("scenario_id",) + CHARACTERISTIC_COLUMNS
PREDICTIONS_HEADER = ("scenario_id", "cluster", "label", "stage1", "stage2")


def fmt(value) -> str:
    """Shortest-roundtrip text for a scalar (bools as 0/1)."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_json(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path} is empty") from None
        return header, [row for row in reader if row]


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


# --- embedding artifacts ----------------------------------------------------

def write_embedding_csv(path, net: NetworkModel, coords: np.ndarray) -> Path:
    X = np.asarray(coords, dtype=float)
    if X.shape[0] != len(net.buses):
        raise LengthMismatch("coordinate rows != network buses")
    header = ["bus_id"] + [f"x{j + 1}" for j in range(X.shape[1])]
    rows = ([net.buses[i].id, *X[i]] for i in range(X.shape[0]))
    return write_csv(path, header, rows)


def read_embedding_csv(path) -> tuple[list[int], np.ndarray]:
    header, rows = read_csv(path)
    if not header or header[0] != "bus_id":
        raise ConfigError(f"{path} is not an embedding table")
    ids = [int(r[0]) for r in rows]
    X = np.array([[float(v) for v in r[1:]] for r in rows])
    return ids, X


def write_spectrum_csv(path, report) -> Path:
    rows = []
    for m in range(report.n_positive):
        rows.append([m + 1, report.eigenvalues[m], report.cumulative_shares[m]])
    return write_csv(path, ["rank", "eigenvalue", "cumulative_share"], rows)


def write_fidelity_csv(path, ks, values) -> Path:
    if len(ks) != len(values):
        raise LengthMismatch("dimension/fidelity lengths differ")
    return write_csv(path, ["k", "fidelity"], zip(ks, values))


# --- raster artifacts -------------------------------------------------------

def write_heatmap_csv(path, field: RasterField) -> Path:
    path = Path(path)
    out = write_csv(path, [f"c{j}" for j in range(field.resolution)],
                    field.grid)
    meta = {
        "schema_version": CSV_SCHEMA_VERSION,
        "tag": field.tag,
        "resolution": field.resolution,
        "bbox": list(field.bbox),
    }
    write_json(path.with_suffix(path.suffix + ".meta.json"), meta)
    return out


def read_heatmap_csv(path) -> RasterField:
    path = Path(path)
    _, rows = read_csv(path)
    grid = np.array([[float(v) for v in r] for r in rows])
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    if grid.shape != (meta["resolution"], meta["resolution"]):
        raise GridMismatch(f"{path} grid does not match its metadata")
    return RasterField(grid=grid, bbox=tuple(meta["bbox"]),
                       resolution=meta["resolution"], tag=meta["tag"])


# --- per-scenario tables ----------------------------------------------------

def write_characteristics_csv(path, ids, chars) -> Path:
    X = np.asarray(chars, dtype=float)
    if len(ids) != X.shape[0]:
        raise LengthMismatch("scenario ids != characteristic rows")
    if X.shape[1] != len(CHARACTERISTIC_COLUMNS):
        raise LengthMismatch("characteristic column count mismatch")
    rows = ([int(i), *row] for i, row in zip(ids, X))
    return write_csv(path, CHARACTERISTICS_HEADER, rows)


def read_characteristics_csv(path) -> tuple[list[int], np.ndarray]:
    header, rows = read_csv(path)
    if tuple(header) != CHARACTERISTICS_HEADER:
        raise ConfigError(f"{path} header does not match the "
                          "characteristic schema")
    ids = [int(r[0]) for r in rows]
    X = np.array([[float(v) for v in r[1:]] for r in rows])
    return ids, X


def write_indices_csv(path, ids, indices) -> Path:
    """The stability-index exchange table (import path for external EMT)."""
    if len(ids) != len(indices):
        raise LengthMismatch("scenario ids != index rows")
    rows = ([int(i), ix.v_severity, ix.tsi, ix.rocof, ix.pf_converged]
            for i, ix in zip(ids, indices))
    return write_csv(path, INDICES_HEADER, rows)


def read_indices_csv(path) -> tuple[list[int], list[StabilityIndices]]:
    header, rows = read_csv(path)
    if tuple(header) != INDICES_HEADER:
        raise ConfigError(f"{path} header does not match the index schema")
    ids, out = [], []
    for r in rows:
        ids.append(int(r[0]))
        out.append(StabilityIndices(
            v_severity=float(r[1]), tsi=float(r[2]), rocof=float(r[3]),
            pf_converged=r[4] not in ("0", "0.0", "False", "false")))
    return ids, out


def write_scenarios_csv(path, scenarios, spec, net: NetworkModel) -> Path:
    """One row per scenario: id, origin, flags, parameters, net injections."""
    names = [p.name for p in spec.parameters]
    header = (["scenario_id", "provenance", "clipped", "pf_converged"]
              + names
              + ["total_load_p_mw", "total_renewable_p_mw", "hvdc_p_mw"])
    rows = []
    for s in scenarios:
        realized = apply_overrides(net, s.overrides)
        load_p = float(sum(ld.p for ld in realized.loads))
        ren_p = float(sum(g.p_set for g in realized.generators
                          if g.kind == "renewable"))
        hvdc_p = 0.0 if realized.hvdc is None else realized.hvdc.p_delivered
        rows.append([s.id, s.provenance, s.clipped, s.pf.converged,
                     *s.params, load_p, ren_p, hvdc_p])
    return write_csv(path, header, rows)


def write_overrides_json(path, scenarios) -> Path:
    doc = {
        "schema_version": CSV_SCHEMA_VERSION,
        "scenarios": [
            {"id": s.id, "provenance": s.provenance, "clipped": s.clipped,
             "params": [float(v) for v in s.params],
             "overrides": s.overrides.to_dict()}
            for s in scenarios
        ],
    }
    return write_json(path, doc)


# --- matrices and reports ---------------------------------------------------

def write_matrix_csv(path, M, row_names, col_names) -> Path:
    M = np.asarray(M, dtype=float)
    if M.shape != (len(row_names), len(col_names)):
        raise LengthMismatch("matrix shape does not match header names")
    rows = ([name, *M[i]] for i, name in enumerate(row_names))
    return write_csv(path, ["", *col_names], rows)


def write_predictions_csv(path, ids, predictions) -> Path:
    if len(ids) != len(predictions):
        raise LengthMismatch("scenario ids != predictions")
    rows = ([int(i), p.cluster, p.label, p.stage1, p.stage2 or ""]
            for i, p in zip(ids, predictions))
    return write_csv(path, PREDICTIONS_HEADER, rows)


def write_report_csv(path, report: PredictionReport) -> Path:
    doc = report_to_dict(report)
    rows = []
    for stage in ("stage1", "stage2"):
        block = doc[stage]
        (tn, fp), (fn, tp) = block["confusion"]
        rows.append([stage, block["positive"],
                     "" if block["precision"] is None else block["precision"],
                     "" if block["recall"] is None else block["recall"],
                     tp, fp, fn, tn])
    return write_csv(path, ["stage", "positive", "precision", "recall",
                            "tp", "fp", "fn", "tn"], rows)


# --- run manifest -----------------------------------------------------------

def write_manifest(path, config_doc: dict, seed: int,
                   artifacts: dict[str, Path]) -> Path:
    """Config hash, seed, versions, and per-artifact checksums."""
    import matplotlib
    import scipy

    from . import __version__

    config_text = json.dumps(config_doc, indent=2, sort_keys=True)
    doc = {
        "schema_version": CSV_SCHEMA_VERSION,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": int(seed),
        "versions": {
            "gridscen": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
        },
        "artifacts": {name: sha256_of(p)
                      for name, p in sorted(artifacts.items())},
    }
    return write_json(path, doc)
