"""Command-line driver: config handling, exit codes, artifact flows."""

import json

import numpy as np
import pytest

from gridscen import cli, io
from gridscen.errors import ConfigError
from gridscen.network import bundled_data_path


def run(*args):
    return cli.main(list(args))


@pytest.fixture()
def outdir(tmp_path):
    return tmp_path / "out"


@pytest.fixture()
def small_config(tmp_path, outdir):
    """Scaled-down run: short horizon, few scenarios, fast verbs."""
    doc = {
        "network": "case9",
        "uncertainty": "uncertainty9",
        "output_dir": str(outdir),
        "scenarios": {"total": 24, "holdout": 8},
        "simulation": {"h": 0.01, "horizon": 3.0},
        "seed": 0,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


# --- configuration ---------------------------------------------------------

class TestConfig:
    def test_defaults_need_network(self):
        with pytest.raises(ConfigError, match="network"):
            cli.load_config(None, {})

    def test_bundled_name_resolution(self):
        cfg = cli.load_config(None, {"network": "case9"})
        assert cfg.network == bundled_data_path("case9")
        cfg2 = cli.load_config(None, {"network": "case9.json"})
        assert cfg2.network == cfg.network

    def test_missing_network_named(self):
        with pytest.raises(ConfigError, match="no_such_case"):
            cli.load_config(None, {"network": "no_such_case"})

    def test_file_values_used(self, small_config):
        cfg = cli.load_config(str(small_config), {})
        assert cfg.n_scenarios == 24
        assert cfg.n_holdout == 8
        assert cfg.horizon == 3.0
        assert cfg.method == "classical"  # default survives partial file

    def test_flags_override_file(self, small_config):
        cfg = cli.load_config(str(small_config), {"total": 30, "seed": 5})
        assert cfg.n_scenarios == 30
        assert cfg.seed == 5

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"network": "case9", "bogus": 1}))
        with pytest.raises(ConfigError, match="bogus"):
            cli.load_config(str(path), {})

    def test_unknown_nested_key_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(
            {"network": "case9", "embedding": {"depth": 3}}))
        with pytest.raises(ConfigError, match="embedding.depth"):
            cli.load_config(str(path), {})

    def test_bounds_violation_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(
            {"network": "case9", "raster": {"resolution": 1}}))
        with pytest.raises(ConfigError, match="raster.resolution"):
            cli.load_config(str(path), {})

    def test_type_violation_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(
            {"network": "case9", "scenarios": {"total": 2.5}}))
        with pytest.raises(ConfigError, match="scenarios.total"):
            cli.load_config(str(path), {})

    def test_horizon_must_exceed_step(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(
            {"network": "case9", "simulation": {"h": 1.0, "horizon": 0.5}}))
        with pytest.raises(ConfigError, match="horizon"):
            cli.load_config(str(path), {})

    def test_bad_method_rejected(self):
        with pytest.raises(ConfigError, match="method"):
            cli.load_config(None, {"network": "case9", "method": "pca"})

    def test_clusters_zero_means_auto(self):
        cfg = cli.load_config(None, {"network": "case9", "clusters": 0})
        assert cfg.clusters is None
        cfg2 = cli.load_config(None, {"network": "case9", "clusters": 3})
        assert cfg2.clusters == 3

    def test_fault_branch_forms(self):
        cfg = cli.load_config(None,
                              {"network": "case9", "fault_branch": "5-7"})
        assert cfg.fault_branch == "5-7"
        with pytest.raises(ConfigError, match="fault.branch"):
            cli.load_config(None,
                            {"network": "case9", "fault_branch": "nearest"})

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            cli.load_config(str(path), {})

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"network": "case9",
                                    "schema_version": 99}))
        with pytest.raises(ConfigError, match="schema_version"):
            cli.load_config(str(path), {})

    def test_config_doc_roundtrip_groups(self, small_config):
        doc = cli.load_config(str(small_config), {}).to_doc()
        assert set(doc) == {"schema_version", "network", "output_dir",
                            "uncertainty", "seed", "embedding", "raster",
                            "scenarios", "fault", "simulation", "clustering",
                            "gmm", "coverage"}


# --- exit codes ------------------------------------------------------------

class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert run("no-such-verb") == 1
        capsys.readouterr()

    def test_config_error_is_one(self, capsys):
        assert run("embed") == 1  # no network anywhere
        assert "network" in capsys.readouterr().err

    def test_missing_upstream_is_one(self, outdir, capsys):
        code = run("cluster", "--network", "case9",
                   "--output-dir", str(outdir))
        assert code == 1
        assert "simulate" in capsys.readouterr().err

    def test_data_error_is_two(self, outdir, capsys):
        # embedding dimension beyond what nine buses support
        code = run("embed", "--network", "case9", "--k", "20",
                   "--output-dir", str(outdir))
        assert code == 2
        capsys.readouterr()

    def test_numerical_error_is_three(self, outdir, capsys):
        # a tampered model artifact with an asymmetric covariance
        outdir.mkdir(parents=True)
        rng = np.random.default_rng(0)
        chars = rng.normal(size=(4, 8))
        io.write_characteristics_csv(outdir / "characteristics.csv",
                                     list(range(4)), chars)
        from gridscen.pipeline import set_to_dict, typify
        idx = np.vstack([rng.normal(size=(10, 3)),
                         rng.normal(loc=5.0, size=(10, 3))])
        ts = typify(idx, rng.normal(size=(20, 8)), 2, seed=0)
        doc = set_to_dict(ts)
        cov = np.asarray(doc["gmms"][0]["covariances"][0], dtype=float)
        cov[0, 1] += 0.5
        doc["gmms"][0]["covariances"][0] = cov.tolist()
        (outdir / "model.json").write_text(json.dumps(doc))
        code = run("predict", "--network", "case9",
                   "--output-dir", str(outdir))
        assert code == 3
        capsys.readouterr()

    def test_version_flag(self, capsys):
        assert run("--version") == 0
        capsys.readouterr()

    def test_help_is_zero(self, capsys):
        assert run("--help") == 0
        out = capsys.readouterr().out
        for verb in ("embed", "characterize", "sample", "simulate",
                     "cluster", "typify", "predict", "evaluate",
                     "correlate", "pipeline"):
            assert verb in out


# --- verb flows ------------------------------------------------------------

@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """One sample->simulate run shared by the downstream verb tests."""
    tmp = tmp_path_factory.mktemp("chain")
    out = tmp / "out"
    doc = {
        "network": "case9",
        "uncertainty": "uncertainty9",
        "output_dir": str(out),
        "scenarios": {"total": 24, "holdout": 8},
        "simulation": {"h": 0.01, "horizon": 3.0},
    }
    config = tmp / "config.json"
    config.write_text(json.dumps(doc))
    assert cli.main(["--config", str(config), "sample"]) == 0
    assert cli.main(["--config", str(config), "simulate"]) == 0
    return config, out


class TestVerbFlow:

    def test_sample_artifacts(self, chain):
        _, out = chain
        header, rows = io.read_csv(out / "scenarios.csv")
        assert len(rows) == 24
        assert {r[1] for r in rows} == {"orthogonal", "gmm"}
        assert sum(1 for r in rows if r[1] == "orthogonal") == 9
        doc = json.loads((out / "scenario_overrides.json").read_text())
        assert len(doc["scenarios"]) == 24

    def test_simulate_artifacts(self, chain):
        _, out = chain
        ids, ixs = io.read_indices_csv(out / "indices.csv")
        assert ids == list(range(24))
        cids, chars = io.read_characteristics_csv(
            out / "characteristics.csv")
        assert cids == ids
        assert chars.shape == (24, 8)
        assert all(-1.0 <= ix.tsi <= 1.0 for ix in ixs)

    def test_cluster_verb(self, chain, capsys):
        config, out = chain
        assert cli.main(["--config", str(config), "cluster"]) == 0
        capsys.readouterr()
        doc = json.loads((out / "clusters.json").read_text())
        assert doc["model"]["k"] >= 2
        assert len(doc["model"]["assignments"]) == 24

    def test_typify_predict_evaluate(self, chain, capsys):
        config, out = chain
        assert cli.main(["--config", str(config), "typify"]) == 0
        assert cli.main(["--config", str(config), "predict"]) == 0
        assert cli.main(["--config", str(config), "evaluate"]) == 0
        summary = capsys.readouterr().out
        assert "precision" in summary and "recall" in summary
        model = json.loads((out / "model.json").read_text())
        assert model["typical_ids"] is not None
        header, rows = io.read_csv(out / "predictions.csv")
        assert tuple(header) == io.PREDICTIONS_HEADER
        assert len(rows) == 24
        assert (out / "report.csv").is_file()
        assert (out / "report_summary.txt").is_file()

    def test_correlate_verb(self, chain, capsys):
        config, out = chain
        assert cli.main(["--config", str(config), "correlate"]) == 0
        capsys.readouterr()
        header, rows = io.read_csv(out / "correlation_pearson.csv")
        assert header[0] == ""
        vals = np.array([[float(v) for v in r[1:]] for r in rows])
        assert np.all(np.abs(vals) <= 1.0 + 1e-12)
        _, srows = io.read_csv(out / "correlation_summary.csv")
        assert [r[0] for r in srows] == ["cca_rho", "kcca"]

    def test_manifests_written(self, chain):
        _, out = chain
        for verb in ("sample", "simulate", "cluster", "typify", "predict",
                     "evaluate", "correlate"):
            doc = json.loads((out / f"manifest_{verb}.json").read_text())
            assert doc["artifacts"], verb

    def test_inputs_not_mutated(self, chain):
        sha_net = io.sha256_of(bundled_data_path("case9"))
        sha_unc = io.sha256_of(bundled_data_path("uncertainty9"))
        assert sha_net == io.sha256_of(bundled_data_path("case9"))
        assert sha_unc == io.sha256_of(bundled_data_path("uncertainty9"))


class TestEmbedVerbs:
    def test_embed_artifacts(self, outdir, capsys):
        assert run("embed", "--network", "case9",
                   "--output-dir", str(outdir)) == 0
        capsys.readouterr()
        ids, X = io.read_embedding_csv(outdir / "embedding.csv")
        assert X.shape == (9, 2)
        header, rows = io.read_csv(outdir / "fidelity_classical.csv")
        assert header == ["k", "fidelity"]
        ks = [int(r[0]) for r in rows]
        assert ks == list(range(2, 9))
        fid = [float(r[1]) for r in rows]
        assert all(b >= a - 1e-12 for a, b in zip(fid, fid[1:]))
        assert (outdir / "spectrum.csv").is_file()
        assert (outdir / "fidelity.png").is_file()

    def test_characterize_artifacts(self, outdir, capsys):
        assert run("characterize", "--network", "case9",
                   "--output-dir", str(outdir), "--resolution", "16") == 0
        capsys.readouterr()
        field = io.read_heatmap_csv(outdir / "heatmap_P_G.csv")
        assert field.resolution == 16
        ids, chars = io.read_characteristics_csv(
            outdir / "characteristics_base.csv")
        assert ids == [0] and chars.shape == (1, 8)

    def test_manifest_checksums_stable(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("embed", "--network", "case9",
                       "--output-dir", str(out)) == 0
        capsys.readouterr()
        da = json.loads((a / "manifest_embed.json").read_text())
        db = json.loads((b / "manifest_embed.json").read_text())
        assert da["artifacts"] == db["artifacts"]
        assert da["versions"] == db["versions"]
