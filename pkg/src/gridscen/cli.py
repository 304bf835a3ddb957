"""Pipeline orchestration CLI.

Verbs mirror the processing stages: embed, characterize, sample,
simulate, cluster, typify, predict, evaluate, correlate, plus a
pipeline verb that chains them end to end including a held-out
prediction check.

Configuration comes from one JSON file plus per-verb flag overrides
(flags win).  Bare file names are also looked up in the bundled data.
Every invocation writes a manifest with the config hash, the global
seed, library versions, and artifact checksums.  Exit codes: 1 for
usage or configuration errors, 2 for data errors, 3 for numerical
failures.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__, io, report
from .correlation import (SampleMatrixPair, cca, kcca,
                          kernel_correlation_matrix, pearson_matrix)
from .embedding import (SmacofConfig, classical_mds, fidelity_sweep,
                        metric_mds, spectrum_report)
from .errors import (DATA_ERRORS, NUMERICAL_ERRORS, ConfigError,
                     ConstantColumn, LengthMismatch)
from .fields import (CHARACTERISTIC_COLUMNS, FIELD_TAGS, RasterConfig,
                     compute_characteristics, raster_fields)
from .gmm import GmmFitConfig
from .network import (DispatchOverrides, apply_overrides, bundled_data_path,
                      build_impedance_matrix, electrical_distance,
                      heaviest_loaded_branch, load_network, solve_power_flow)
from .pipeline import (cluster_scenarios, cluster_to_dict,
                       evaluate_predictions, index_matrix,
                       labels_from_indices, predict_batch, set_from_dict,
                       set_to_json)
from .pipeline import typify as build_typical_set
from .scenarios import (ScenarioSample, generate_scenarios, load_spec,
                        orthogonal_parameters)
from .transient import FaultSpec, TransientConfig, run_batch

CONFIG_SCHEMA_VERSION = 1
HOLDOUT_SEED_OFFSET = 1000  # keeps the held-out stream disjoint

INDEX_NAMES = ("v_severity", "tsi", "rocof")

_DEFAULT_DOC = {
    "schema_version": CONFIG_SCHEMA_VERSION,
    "network": None,
    "output_dir": "out",
    "uncertainty": None,
    "seed": 0,
    "embedding": {"method": "classical", "k": 2,
                  "smacof_max_iter": 500, "smacof_tol": 1e-7},
    "raster": {"resolution": 32, "bandwidth": 1.5},
    "scenarios": {"total": 200, "levels": 3, "holdout": 65},
    "fault": {"branch": "heaviest", "t_fault": 1.0, "clearing_time": 0.105},
    "simulation": {"h": 0.005, "horizon": 10.0},
    "clustering": {"k": None},
    "gmm": {"m_max": 3},
    "coverage": {"threshold": 0.2},
}

# flat flag name -> location in the nested config document
_FLAG_DESTS = {
    "network": ("network",),
    "output_dir": ("output_dir",),
    "uncertainty": ("uncertainty",),
    "seed": ("seed",),
    "method": ("embedding", "method"),
    "k": ("embedding", "k"),
    "resolution": ("raster", "resolution"),
    "bandwidth": ("raster", "bandwidth"),
    "total": ("scenarios", "total"),
    "levels": ("scenarios", "levels"),
    "holdout": ("scenarios", "holdout"),
    "fault_branch": ("fault", "branch"),
    "t_fault": ("fault", "t_fault"),
    "clearing_time": ("fault", "clearing_time"),
    "h": ("simulation", "h"),
    "horizon": ("simulation", "horizon"),
    "clusters": ("clustering", "k"),
    "m_max": ("gmm", "m_max"),
    "threshold": ("coverage", "threshold"),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved, validated run configuration shared by all verbs."""
    network: Path
    output_dir: Path
    uncertainty: Path | None
    seed: int
    method: str
    embed_k: int
    smacof_max_iter: int
    smacof_tol: float
    resolution: int
    bandwidth: float
    n_scenarios: int
    levels: int
    n_holdout: int
    fault_branch: str
    t_fault: float
    clearing_time: float
    h: float
    horizon: float
    clusters: int | None
    m_max: int
    coverage_threshold: float

    def to_doc(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "network": str(self.network),
            "output_dir": str(self.output_dir),
            "uncertainty": None if self.uncertainty is None
            else str(self.uncertainty),
            "seed": self.seed,
            "embedding": {"method": self.method, "k": self.embed_k,
                          "smacof_max_iter": self.smacof_max_iter,
                          "smacof_tol": self.smacof_tol},
            "raster": {"resolution": self.resolution,
                       "bandwidth": self.bandwidth},
            "scenarios": {"total": self.n_scenarios, "levels": self.levels,
                          "holdout": self.n_holdout},
            "fault": {"branch": self.fault_branch, "t_fault": self.t_fault,
                      "clearing_time": self.clearing_time},
            "simulation": {"h": self.h, "horizon": self.horizon},
            "clustering": {"k": self.clusters},
            "gmm": {"m_max": self.m_max},
            "coverage": {"threshold": self.coverage_threshold},
        }

    def smacof(self) -> SmacofConfig:
        return SmacofConfig(max_iter=self.smacof_max_iter,
                            tol=self.smacof_tol, seed=self.seed)

    def raster(self) -> RasterConfig:
        return RasterConfig(resolution=self.resolution,
                            bandwidth_factor=self.bandwidth)

    def transient(self) -> TransientConfig:
        return TransientConfig(h=self.h, horizon=self.horizon)


def _merge_doc(base: dict, extra: dict, prefix: str = "") -> dict:
    out = dict(base)
    for key, val in extra.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config field {name!r} must be an object")
            out[key] = _merge_doc(base[key], val, prefix=name + ".")
        else:
            out[key] = val
    return out


def _expect_int(doc: dict, group: str, key: str, minimum: int):
    val = doc[group][key] if group else doc[key]
    name = f"{group}.{key}" if group else key
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{name} must be an integer")
    if val < minimum:
        raise ConfigError(f"{name} must be >= {minimum}")
    return val


def _expect_num(doc: dict, group: str, key: str, minimum: float,
                inclusive: bool = False):
    val = doc[group][key] if group else doc[key]
    name = f"{group}.{key}" if group else key
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name} must be a number")
    val = float(val)
    if inclusive:
        if val < minimum:
            raise ConfigError(f"{name} must be >= {minimum}")
    elif val <= minimum:
        raise ConfigError(f"{name} must be > {minimum}")
    return val


def _resolve_existing(value, base: Path, field: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{field} must be a file path")
    p = Path(value)
    candidates = [p] if p.is_absolute() else [base / p, Path.cwd() / p]
    for cand in candidates:
        if cand.exists():
            return cand.resolve()
    if "/" not in value:
        stem = value[:-5] if value.endswith(".json") else value
        bundled = bundled_data_path(stem)
        if bundled.exists():
            return bundled
    raise ConfigError(f"{field}: {value!r} does not exist")


def _check_fault_branch(value) -> str:
    if not isinstance(value, str):
        raise ConfigError("fault.branch must be a string")
    if value == "heaviest":
        return value
    parts = value.split("-")
    if len(parts) == 2 and all(p.strip().isdigit() for p in parts):
        return value
    raise ConfigError(
        "fault.branch must be 'heaviest' or 'FROM-TO' bus numbers")


def load_config(config_path: str | None, flags: dict) -> PipelineConfig:
    """Defaults <- config file <- flags, then validate and resolve."""
    doc = json.loads(json.dumps(_DEFAULT_DOC))
    base = Path.cwd()
    if config_path is not None:
        cp = Path(config_path)
        if not cp.is_file():
            raise ConfigError(f"config file {config_path!r} does not exist")
        try:
            file_doc = json.loads(cp.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(file_doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc = _merge_doc(doc, file_doc)
        base = cp.resolve().parent
    for flag, value in flags.items():
        if value is None:
            continue
        dest = _FLAG_DESTS[flag]
        if flag == "clusters" and value == 0:
            value = None  # 0 selects automatic cluster count
        if len(dest) == 1:
            doc[dest[0]] = value
        else:
            doc[dest[0]][dest[1]] = value

    if doc["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise ConfigError("schema_version must be "
                          f"{CONFIG_SCHEMA_VERSION}")
    if doc["network"] is None:
        raise ConfigError("network is required (config file or --network)")
    method = doc["embedding"]["method"]
    if method not in ("classical", "metric"):
        raise ConfigError("embedding.method must be 'classical' or 'metric'")
    clusters = doc["clustering"]["k"]
    if clusters is not None:
        if isinstance(clusters, bool) or not isinstance(clusters, int):
            raise ConfigError("clustering.k must be an integer or null")
        if clusters < 1:
            raise ConfigError("clustering.k must be >= 1 (null = automatic)")
    uncertainty = doc["uncertainty"]

    cfg = PipelineConfig(
        network=_resolve_existing(doc["network"], base, "network"),
        output_dir=(Path(doc["output_dir"]) if
                    Path(doc["output_dir"]).is_absolute()
                    else (base / doc["output_dir"]).resolve()),
        uncertainty=(None if uncertainty is None else
                     _resolve_existing(uncertainty, base, "uncertainty")),
        seed=_expect_int(doc, "", "seed", 0),
        method=method,
        embed_k=_expect_int(doc, "embedding", "k", 2),
        smacof_max_iter=_expect_int(doc, "embedding", "smacof_max_iter", 1),
        smacof_tol=_expect_num(doc, "embedding", "smacof_tol", 0.0),
        resolution=_expect_int(doc, "raster", "resolution", 2),
        bandwidth=_expect_num(doc, "raster", "bandwidth", 0.0),
        n_scenarios=_expect_int(doc, "scenarios", "total", 1),
        levels=_expect_int(doc, "scenarios", "levels", 1),
        n_holdout=_expect_int(doc, "scenarios", "holdout", 0),
        fault_branch=_check_fault_branch(doc["fault"]["branch"]),
        t_fault=_expect_num(doc, "fault", "t_fault", 0.0, inclusive=True),
        clearing_time=_expect_num(doc, "fault", "clearing_time", 0.0),
        h=_expect_num(doc, "simulation", "h", 0.0),
        horizon=_expect_num(doc, "simulation", "horizon", 0.0),
        clusters=clusters,
        m_max=_expect_int(doc, "gmm", "m_max", 1),
        coverage_threshold=_expect_num(doc, "coverage", "threshold", 0.0),
    )
    if cfg.horizon <= cfg.h:
        raise ConfigError("simulation.horizon must exceed simulation.h")
    return cfg


# --- shared loading helpers ------------------------------------------------

def _require_artifact(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{path} is missing; run '{hint}' first")
    return path


def _distance_matrix(net) -> np.ndarray:
    return electrical_distance(build_impedance_matrix(net))


def _base_embedding(net, cfg: PipelineConfig):
    D = _distance_matrix(net)
    if cfg.method == "classical":
        return classical_mds(D, cfg.embed_k)
    return metric_mds(D, cfg.embed_k, cfg.smacof())


def _fault_spec(net, cfg: PipelineConfig) -> FaultSpec:
    if cfg.fault_branch == "heaviest":
        pf = solve_power_flow(net)
        br = heaviest_loaded_branch(net, pf)
        return FaultSpec(from_bus=br.from_bus, to_bus=br.to_bus,
                         t_fault=cfg.t_fault,
                         clearing_time=cfg.clearing_time)
    a, b = (int(p) for p in cfg.fault_branch.split("-"))
    for br in net.branches:
        if {br.from_bus, br.to_bus} == {a, b} and br.in_service:
            return FaultSpec(from_bus=a, to_bus=b, t_fault=cfg.t_fault,
                             clearing_time=cfg.clearing_time)
    raise ConfigError(f"fault.branch: no in-service branch joins "
                      f"buses {a} and {b}")


def _load_scenarios(net, path: Path) -> list[ScenarioSample]:
    """Rebuild scenario samples (with fresh power flows) from overrides."""
    doc = json.loads(path.read_text())
    out = []
    for entry in doc["scenarios"]:
        ovr = DispatchOverrides.from_dict(entry["overrides"])
        pf = solve_power_flow(apply_overrides(net, ovr))
        out.append(ScenarioSample(
            id=int(entry["id"]),
            params=np.asarray(entry["params"], dtype=float),
            overrides=ovr, pf=pf,
            provenance=entry["provenance"],
            clipped=bool(entry["clipped"])))
    return out


def _aligned_tables(out: Path, idx_name: str, chars_name: str):
    ids_i, ixs = io.read_indices_csv(
        _require_artifact(out / idx_name, "simulate"))
    ids_c, chars = io.read_characteristics_csv(
        _require_artifact(out / chars_name, "simulate"))
    if ids_i != ids_c:
        raise LengthMismatch("index and characteristic scenario ids differ")
    return ids_i, ixs, chars


def _drop_constant(M: np.ndarray, names) -> tuple[np.ndarray, tuple]:
    keep = [j for j in range(M.shape[1]) if M[:, j].std() != 0.0]
    if not keep:
        raise ConstantColumn("all columns are constant")
    return M[:, keep], tuple(names[j] for j in keep)


# --- verb bodies -----------------------------------------------------------

def _run_embed(cfg: PipelineConfig) -> dict[str, Path]:
    net = load_network(cfg.network)
    out = cfg.output_dir
    D = _distance_matrix(net)
    emb = _base_embedding(net, cfg)
    artifacts = {"embedding.csv": io.write_embedding_csv(
        out / "embedding.csv", net, emb.X)}
    spectral = emb if cfg.method == "classical" else classical_mds(
        D, cfg.embed_k)
    rep = spectrum_report(spectral)
    artifacts["spectrum.csv"] = io.write_spectrum_csv(
        out / "spectrum.csv", rep)
    artifacts["spectrum.png"] = report.save_spectrum(
        out / "spectrum.png", rep)
    ks = list(range(2, min(11, len(net.buses) - 1) + 1))
    sweep = fidelity_sweep(D, ks, cfg.smacof())
    for name in ("classical", "metric"):
        artifacts[f"fidelity_{name}.csv"] = io.write_fidelity_csv(
            out / f"fidelity_{name}.csv", sweep["k"], sweep[name])
    artifacts["fidelity.png"] = report.save_fidelity_curve(
        out / "fidelity.png", sweep["k"],
        {"classical": sweep["classical"], "metric": sweep["metric"]})
    click.echo(f"embedded {len(net.buses)} buses at k={cfg.embed_k} "
               f"({cfg.method}); {rep.n_positive} positive eigenvalues")
    return artifacts


def _run_characterize(cfg: PipelineConfig) -> dict[str, Path]:
    net = load_network(cfg.network)
    out = cfg.output_dir
    pf = solve_power_flow(net)
    emb = _base_embedding(net, cfg)
    fields = raster_fields(net, pf, emb, cfg.raster())
    artifacts = {}
    for tag in FIELD_TAGS:
        name = f"heatmap_{tag}"
        artifacts[f"{name}.csv"] = io.write_heatmap_csv(
            out / f"{name}.csv", fields[tag])
        artifacts[f"{name}.png"] = report.save_heatmap(
            out / f"{name}.png", fields[tag])
    char = compute_characteristics(net, pf, emb, cfg.raster())
    artifacts["characteristics_base.csv"] = io.write_characteristics_csv(
        out / "characteristics_base.csv", [0], char.reshape(1, -1))
    click.echo(f"rasterized {len(FIELD_TAGS)} fields at "
               f"G={cfg.resolution} (base power flow "
               f"{'converged' if pf.converged else 'did not converge'})")
    return artifacts


def _run_sample(cfg: PipelineConfig, *, n_total: int, levels: int,
                seed: int, scen_name: str,
                ovr_name: str) -> dict[str, Path]:
    if cfg.uncertainty is None:
        raise ConfigError("uncertainty is required for scenario sampling")
    net = load_network(cfg.network)
    spec = load_spec(cfg.uncertainty)
    n_array = (orthogonal_parameters(spec, levels).shape[0]
               if levels >= 2 else 0)
    if n_total < n_array:
        raise ConfigError(f"scenarios.total={n_total} is below the "
                          f"orthogonal-array run count {n_array}")
    scenarios = generate_scenarios(spec, net, n_total - n_array,
                                   levels=levels, seed=seed)
    out = cfg.output_dir
    artifacts = {
        scen_name: io.write_scenarios_csv(
            out / scen_name, scenarios, spec, net),
        ovr_name: io.write_overrides_json(out / ovr_name, scenarios),
    }
    n_conv = sum(1 for s in scenarios if s.pf.converged)
    n_clip = sum(1 for s in scenarios if s.clipped)
    click.echo(f"sampled {len(scenarios)} scenarios "
               f"({n_array} orthogonal, {len(scenarios) - n_array} mixture; "
               f"{n_conv} converged, {n_clip} clipped)")
    return artifacts


def _run_simulate(cfg: PipelineConfig, *, ovr_name: str, idx_name: str,
                  chars_name: str) -> dict[str, Path]:
    net = load_network(cfg.network)
    out = cfg.output_dir
    scenarios = _load_scenarios(
        net, _require_artifact(out / ovr_name, "sample"))
    fault = _fault_spec(net, cfg)
    indices = run_batch(scenarios, net, fault, cfg.transient())
    emb = _base_embedding(net, cfg)
    chars = np.array([
        compute_characteristics(apply_overrides(net, s.overrides), s.pf,
                                emb, cfg.raster(),
                                allow_dispatch_fallback=True)
        for s in scenarios])
    ids = [s.id for s in scenarios]
    artifacts = {
        idx_name: io.write_indices_csv(out / idx_name, ids, indices),
        chars_name: io.write_characteristics_csv(
            out / chars_name, ids, chars),
    }
    labels = labels_from_indices(index_matrix(indices))
    counts = {lab: labels.count(lab) for lab in sorted(set(labels))}
    click.echo(f"simulated {len(scenarios)} scenarios, fault on branch "
               f"{fault.from_bus}-{fault.to_bus} cleared after "
               f"{fault.clearing_time} s; labels {counts}")
    return artifacts


def _run_cluster(cfg: PipelineConfig) -> dict[str, Path]:
    out = cfg.output_dir
    ids, ixs = io.read_indices_csv(
        _require_artifact(out / "indices.csv", "simulate"))
    cm = cluster_scenarios(index_matrix(ixs), cfg.clusters, seed=cfg.seed)
    doc = {"schema_version": CONFIG_SCHEMA_VERSION,
           "scenario_ids": [int(i) for i in ids],
           "model": cluster_to_dict(cm)}
    artifacts = {"clusters.json": io.write_json(out / "clusters.json", doc)}
    click.echo(f"clustered {len(ids)} scenarios into k={cm.k} "
               f"(silhouette {cm.silhouette:.3f})")
    return artifacts


def _run_typify(cfg: PipelineConfig, *, idx_name: str = "indices.csv",
                chars_name: str = "characteristics.csv") -> dict[str, Path]:
    out = cfg.output_dir
    ids, ixs, chars = _aligned_tables(out, idx_name, chars_name)
    X = index_matrix(ixs)
    ts = build_typical_set(X, chars, cfg.clusters, seed=cfg.seed,
                           threshold=cfg.coverage_threshold, m_max=cfg.m_max,
                           cfg=GmmFitConfig(seed=cfg.seed))
    artifacts = {"model.json": io.write_json(
        out / "model.json", json.loads(set_to_json(ts)))}
    artifacts["clusters.png"] = report.save_cluster_scatter(
        out / "clusters.png", X, ts)
    typical = [ids[i] for i in ts.typical_ids]
    cov = ", ".join(f"{c:.2f}" for c in ts.coverage)
    click.echo(f"k={ts.clusters.k} clusters "
               f"(silhouette {ts.clusters.silhouette:.3f}); typical "
               f"scenarios {typical}; coverage per cluster [{cov}]")
    return artifacts


def _run_predict(cfg: PipelineConfig, *, chars_name: str,
                 pred_name: str) -> dict[str, Path]:
    out = cfg.output_dir
    model_path = _require_artifact(out / "model.json", "typify")
    ts = set_from_dict(json.loads(model_path.read_text()))
    ids, chars = io.read_characteristics_csv(
        _require_artifact(out / chars_name, "simulate"))
    preds = predict_batch(chars, ts)
    artifacts = {pred_name: io.write_predictions_csv(
        out / pred_name, ids, preds)}
    counts = {}
    for p in preds:
        counts[p.label] = counts.get(p.label, 0) + 1
    click.echo(f"predicted {len(preds)} scenarios: {counts}")
    return artifacts


def _run_evaluate(cfg: PipelineConfig, *, pred_name: str,
                  idx_name: str) -> dict[str, Path]:
    out = cfg.output_dir
    header, rows = io.read_csv(_require_artifact(out / pred_name, "predict"))
    if tuple(header) != io.PREDICTIONS_HEADER:
        raise ConfigError(f"{pred_name} header does not match the "
                          "prediction schema")
    pred_ids = [int(r[0]) for r in rows]
    pred_labels = [r[2] for r in rows]
    truth_ids, ixs = io.read_indices_csv(
        _require_artifact(out / idx_name, "simulate"))
    truth_by_id = dict(zip(truth_ids,
                           labels_from_indices(index_matrix(ixs))))
    missing = [i for i in pred_ids if i not in truth_by_id]
    if missing:
        raise LengthMismatch(f"no index rows for scenarios {missing[:5]}")
    rep = evaluate_predictions(pred_labels,
                               [truth_by_id[i] for i in pred_ids])
    artifacts = {
        "report.csv": io.write_report_csv(out / "report.csv", rep),
        "report_summary.txt": out / "report_summary.txt",
        "report.png": report.save_label_bars(out / "report.png", rep),
    }
    (out / "report_summary.txt").write_text(rep.summary() + "\n")
    click.echo(rep.summary())
    return artifacts


def _run_correlate(cfg: PipelineConfig) -> dict[str, Path]:
    out = cfg.output_dir
    ids, ixs, chars = _aligned_tables(
        out, "indices.csv", "characteristics.csv")
    x, x_names = _drop_constant(chars, CHARACTERISTIC_COLUMNS)
    y, y_names = _drop_constant(index_matrix(ixs), INDEX_NAMES)
    pair = SampleMatrixPair(x=x, y=y, x_names=x_names, y_names=y_names)
    P = pearson_matrix(pair)
    K = kernel_correlation_matrix(pair)
    rho = cca(pair).rho
    kc = kcca(pair)
    artifacts = {
        "correlation_pearson.csv": io.write_matrix_csv(
            out / "correlation_pearson.csv", P, x_names, y_names),
        "correlation_cka.csv": io.write_matrix_csv(
            out / "correlation_cka.csv", K, x_names, y_names),
        "correlation_summary.csv": io.write_matrix_csv(
            out / "correlation_summary.csv", [[rho], [kc]],
            ["cca_rho", "kcca"], ["value"]),
        "correlation_pearson.png": report.save_matrix_heatmap(
            out / "correlation_pearson.png", P, x_names, y_names,
            "Pearson correlation"),
        "correlation_cka.png": report.save_matrix_heatmap(
            out / "correlation_cka.png", K, x_names, y_names,
            "kernel alignment"),
    }
    click.echo(f"correlated {x.shape[1]}x{y.shape[1]} columns over "
               f"{len(ids)} scenarios; cca_rho={rho:.4f} kcca={kc:.4f}")
    return artifacts


def _run_pipeline(cfg: PipelineConfig) -> dict[str, Path]:
    artifacts = {}
    artifacts.update(_run_embed(cfg))
    artifacts.update(_run_characterize(cfg))
    artifacts.update(_run_sample(
        cfg, n_total=cfg.n_scenarios, levels=cfg.levels, seed=cfg.seed,
        scen_name="scenarios.csv", ovr_name="scenario_overrides.json"))
    artifacts.update(_run_simulate(
        cfg, ovr_name="scenario_overrides.json", idx_name="indices.csv",
        chars_name="characteristics.csv"))
    artifacts.update(_run_correlate(cfg))
    artifacts.update(_run_typify(cfg))
    if cfg.n_holdout > 0:
        artifacts.update(_run_sample(
            cfg, n_total=cfg.n_holdout, levels=1,
            seed=cfg.seed + HOLDOUT_SEED_OFFSET,
            scen_name="holdout_scenarios.csv",
            ovr_name="holdout_overrides.json"))
        artifacts.update(_run_simulate(
            cfg, ovr_name="holdout_overrides.json",
            idx_name="holdout_indices.csv",
            chars_name="holdout_characteristics.csv"))
        artifacts.update(_run_predict(
            cfg, chars_name="holdout_characteristics.csv",
            pred_name="holdout_predictions.csv"))
        artifacts.update(_run_evaluate(
            cfg, pred_name="holdout_predictions.csv",
            idx_name="holdout_indices.csv"))
    return artifacts


# --- click wiring ----------------------------------------------------------

def _common_flags(fn):
    opts = [
        click.option("--network", default=None,
                     help="Network model JSON (bundled name or path)."),
        click.option("--output-dir", default=None,
                     help="Directory receiving all artifacts."),
        click.option("--seed", type=int, default=None,
                     help="Global RNG seed."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _finish(ctx, verb: str, flags: dict):
    cfg = load_config(ctx.obj.get("config_path"), flags)
    runner = _RUNNERS[verb]
    artifacts = runner(cfg)
    manifest = io.write_manifest(cfg.output_dir / f"manifest_{verb}.json",
                                 cfg.to_doc(), cfg.seed, artifacts)
    click.echo(f"{len(artifacts)} artifacts under {cfg.output_dir} "
               f"(manifest {manifest.name})")


_RUNNERS = {
    "embed": _run_embed,
    "characterize": _run_characterize,
    "sample": lambda cfg: _run_sample(
        cfg, n_total=cfg.n_scenarios, levels=cfg.levels, seed=cfg.seed,
        scen_name="scenarios.csv", ovr_name="scenario_overrides.json"),
    "simulate": lambda cfg: _run_simulate(
        cfg, ovr_name="scenario_overrides.json", idx_name="indices.csv",
        chars_name="characteristics.csv"),
    "cluster": _run_cluster,
    "typify": _run_typify,
    "predict": lambda cfg: _run_predict(
        cfg, chars_name="characteristics.csv", pred_name="predictions.csv"),
    "evaluate": lambda cfg: _run_evaluate(
        cfg, pred_name="predictions.csv", idx_name="indices.csv"),
    "correlate": _run_correlate,
    "pipeline": _run_pipeline,
}


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", default=None,
              help="JSON configuration file; flags override its fields.")
@click.pass_context
def cli(ctx, config_path):
    """Typical-scenario pipeline for power networks."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


@cli.command(help="Electrical-distance embedding, spectrum, and "
             "fidelity sweep.")
@_common_flags
@click.option("--method", type=click.Choice(["classical", "metric"]),
              default=None, help="MDS variant.")
@click.option("--k", type=int, default=None, help="Embedding dimension.")
@click.pass_context
def embed(ctx, **flags):
    _finish(ctx, "embed", flags)


@cli.command(help="Base-case heat maps and characteristic vector.")
@_common_flags
@click.option("--method", type=click.Choice(["classical", "metric"]),
              default=None, help="MDS variant.")
@click.option("--k", type=int, default=None, help="Embedding dimension.")
@click.option("--resolution", type=int, default=None, help="Raster cells.")
@click.option("--bandwidth", type=float, default=None,
              help="Kernel bandwidth factor.")
@click.pass_context
def characterize(ctx, **flags):
    _finish(ctx, "characterize", flags)


@cli.command(help="Draw the pooled mixture + orthogonal-array "
             "scenario set.")
@_common_flags
@click.option("--uncertainty", default=None,
              help="Uncertainty spec JSON (bundled name or path).")
@click.option("--total", type=int, default=None,
              help="Pooled scenario count.")
@click.option("--levels", type=int, default=None,
              help="Orthogonal-array levels (1 disables the array).")
@click.pass_context
def sample(ctx, **flags):
    _finish(ctx, "sample", flags)


@cli.command(help="Power flows, fault simulations, stability indices, "
             "and characteristics.")
@_common_flags
@click.option("--fault-branch", default=None,
              help="'heaviest' or FROM-TO bus pair.")
@click.option("--t-fault", type=float, default=None,
              help="Fault application time, s.")
@click.option("--clearing-time", type=float, default=None,
              help="Fault clearing delay, s.")
@click.option("--h", type=float, default=None, help="Integration step, s.")
@click.option("--horizon", type=float, default=None,
              help="Simulation horizon, s.")
@click.pass_context
def simulate(ctx, **flags):
    _finish(ctx, "simulate", flags)


@cli.command(help="Stability-aware clustering of the index table.")
@_common_flags
@click.option("--clusters", type=int, default=None,
              help="Cluster count (0 = automatic).")
@click.pass_context
def cluster(ctx, **flags):
    _finish(ctx, "cluster", flags)


@cli.command(help="Cluster, fit per-cluster mixtures, select typical "
             "scenarios, and score coverage.")
@_common_flags
@click.option("--clusters", type=int, default=None,
              help="Cluster count (0 = automatic).")
@click.option("--m-max", type=int, default=None,
              help="Mixture components searched per cluster.")
@click.option("--threshold", type=float, default=None,
              help="Coverage distance threshold.")
@click.pass_context
def typify(ctx, **flags):
    _finish(ctx, "typify", flags)


@cli.command(help="Assign scenarios to clusters via weighted "
             "Mahalanobis distance.")
@_common_flags
@click.pass_context
def predict(ctx, **flags):
    _finish(ctx, "predict", flags)


@cli.command(help="Score predictions against simulated labels.")
@_common_flags
@click.pass_context
def evaluate(ctx, **flags):
    _finish(ctx, "evaluate", flags)


@cli.command(help="Pearson, kernel-alignment, and canonical-correlation "
             "tables.")
@_common_flags
@click.pass_context
def correlate(ctx, **flags):
    _finish(ctx, "correlate", flags)


@cli.command(help="Run every stage end to end, including the held-out "
             "prediction check.")
@_common_flags
@click.option("--uncertainty", default=None,
              help="Uncertainty spec JSON (bundled name or path).")
@click.option("--total", type=int, default=None,
              help="Pooled scenario count.")
@click.option("--holdout", type=int, default=None,
              help="Held-out scenario count (0 disables).")
@click.option("--clusters", type=int, default=None,
              help="Cluster count (0 = automatic).")
@click.option("--clearing-time", type=float, default=None,
              help="Fault clearing delay, s.")
@click.pass_context
def pipeline(ctx, **flags):
    _finish(ctx, "pipeline", flags)


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except DATA_ERRORS as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
