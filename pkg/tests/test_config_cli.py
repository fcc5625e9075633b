import json
import os
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from affclt.cli import main
from affclt.config import ExperimentConfig
from affclt.errors import ConfigError

DIAG_TOML = """
schema_version = 1
seed = 7

[model]
model_id = "m_dependent"
n = 100
[model.params]
M = 1
weights = [1.0, 1.0]

[affinity]
recipe = "m_ball"
M = 1

[diagnostics]
n_grid = [64, 96, 144, 216, 324]
# a3 is exactly zero for this model, so its measured magnitude is a noise
# floor ~ 1/sqrt(reps); growing reps with n makes the floor decay.
reps = [128, 192, 288, 432, 648]
"""


def write(tmp_path: Path, name: str, text: str) -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# --------------------------------------------------------------------- config


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="config root"):
        ExperimentConfig.from_dict({"seed": 1, "bogus": 2})
    with pytest.raises(ConfigError, match="model"):
        ExperimentConfig.from_dict(
            {"model": {"model_id": "m_dependent", "n": 4, "extra": 1}}
        )
    with pytest.raises(ConfigError, match="diagnostics"):
        ExperimentConfig.from_dict({"diagnostics": {"grid": [1]}})
    with pytest.raises(ConfigError, match="schema_version"):
        ExperimentConfig.from_dict({"schema_version": 99})
    with pytest.raises(ConfigError, match="seed"):
        ExperimentConfig.from_dict({"seed": -1})


def test_toml_and_json_hash_equivalence(tmp_path):
    data = {
        "seed": 3,
        "model": {"model_id": "m_dependent", "n": 8, "params": {"M": 0, "weights": [1.0]}},
    }
    json_path = tmp_path / "c.json"
    json_path.write_text(json.dumps(data))
    toml_path = tmp_path / "c.toml"
    toml_path.write_text(
        'seed = 3\n[model]\nmodel_id = "m_dependent"\nn = 8\n'
        "[model.params]\nM = 0\nweights = [1.0]\n"
    )
    a = ExperimentConfig.load(json_path)
    b = ExperimentConfig.load(toml_path)
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16


def test_config_builders(tmp_path):
    cfg = ExperimentConfig.from_dict(
        {
            "model": {
                "model_id": "m_dependent",
                "n": 10,
                "params": {"M": 1, "weights": [1.0, 1.0]},
            },
            "affinity": {"recipe": "m_ball", "M": 2},
        }
    )
    spec = cfg.model_spec()
    assert spec.n == 10
    spec50 = cfg.model_spec(50)
    assert spec50.n == 50
    aff = cfg.build_affinity(spec)
    assert aff.max_set_size == 5
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1}).model_spec()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1}).build_affinity(spec)


def test_inline_graph_follows_grid_n():
    cfg = ExperimentConfig.from_dict(
        {
            "model": {
                "model_id": "edge_shock_graph",
                "n": 30,
                "params": {"graph": {"kind": "gnp", "n": 30, "avg_degree": 4, "seed": 1}},
            }
        }
    )
    assert cfg.model_spec().params["graph"].n == 30
    assert cfg.model_spec(60).params["graph"].n == 60


def test_missing_required_sections():
    with pytest.raises(ConfigError, match="model_id"):
        ExperimentConfig.from_dict({"model": {"n": 4}})
    with pytest.raises(ConfigError, match="recipe"):
        ExperimentConfig.from_dict({"affinity": {"M": 1}})


# ------------------------------------------------------------------------ CLI


def test_cli_diagnose_pass_exit0(tmp_path):
    cfg = write(tmp_path, "diag.toml", DIAG_TOML)
    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["diagnose", "--config", cfg, "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert "a1: PASS" in result.output
    blob = json.loads((out / "diagnostics.json").read_text())
    assert blob["result"]["slopes"]["a1"]["verdict"] == "PASS"
    assert (out / "diagnostics.csv").exists()
    assert (out / "loglog_a3.csv").exists()
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["seed"] == 7


def test_cli_diagnose_reruns_byte_identical(tmp_path):
    cfg = write(tmp_path, "diag.toml", DIAG_TOML)
    outs = []
    for name in ("o1", "o2"):
        out = tmp_path / name
        result = CliRunner().invoke(
            main, ["diagnose", "--config", cfg, "--out", str(out)]
        )
        assert result.exit_code == 0
        outs.append((out / "diagnostics.json").read_bytes())
    assert outs[0] == outs[1]


def test_cli_seed_override_changes_results(tmp_path):
    cfg = write(tmp_path, "diag.toml", DIAG_TOML)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    r1 = CliRunner().invoke(
        main, ["diagnose", "--config", cfg, "--out", str(out1), "--seed", "1"]
    )
    r2 = CliRunner().invoke(
        main, ["diagnose", "--config", cfg, "--out", str(out2), "--seed", "2"]
    )
    assert r1.exit_code == 0 and r2.exit_code == 0
    a = json.loads((out1 / "diagnostics.json").read_text())
    b = json.loads((out2 / "diagnostics.json").read_text())
    assert a["result"]["points"][0]["a1"] != b["result"]["points"][0]["a1"]


def test_cli_malformed_config_exit1_no_outputs(tmp_path):
    bad = write(tmp_path, "bad.toml", "seed = [not toml")
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["diagnose", "--config", bad, "--out", str(out)])
    assert result.exit_code == 1
    assert "error:" in result.output
    assert not out.exists()


def test_cli_missing_config_exit1(tmp_path):
    result = CliRunner().invoke(
        main, ["diagnose", "--config", str(tmp_path / "nope.toml")]
    )
    assert result.exit_code == 1
    result2 = CliRunner().invoke(main, ["diagnose"])
    assert result2.exit_code == 1


def test_cli_unknown_key_exit1(tmp_path):
    cfg = write(tmp_path, "bad.toml", DIAG_TOML + "\n[diagnostics.extra]\nfoo = 1\n")
    result = CliRunner().invoke(main, ["diagnose", "--config", cfg])
    assert result.exit_code == 1


def test_cli_normality_pass(tmp_path):
    cfg = write(
        tmp_path,
        "norm.toml",
        """
seed = 5
[model]
model_id = "m_dependent"
n = 300
[model.params]
M = 1
weights = [1.0, 1.0]
[affinity]
recipe = "m_ball"
M = 1
[normality]
reps = 800
""",
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["normality", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    blob = json.loads((out / "normality.json").read_text())
    assert blob["result"]["passed"] is True
    assert (out / "qq_dim0.csv").exists()


def test_cli_normality_fail_exit2(tmp_path):
    # n = 2 with Rademacher innovations: visibly discrete, fails the gate
    cfg = write(
        tmp_path,
        "norm.toml",
        """
seed = 5
[model]
model_id = "m_dependent"
n = 2
[model.params]
M = 0
weights = [1.0]
innovation = "rademacher"
[affinity]
recipe = "singleton"
[normality]
reps = 3000
""",
    )
    result = CliRunner().invoke(main, ["normality", "--config", cfg, "--out", str(tmp_path / "o")])
    assert result.exit_code == 2


def test_cli_estimate_ht(tmp_path):
    cfg = write(
        tmp_path,
        "ht.toml",
        """
seed = 2
[estimate]
kind = "ht"
pi_t = 0.5
assignment = [1, 0, 0]
outcomes = [2.0, 1.0, 5.0]
levels = [1, 3]
[estimate.graph]
kind = "path"
n = 3
""",
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["estimate", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    blob = json.loads((out / "estimate_ht.json").read_text())
    assert blob["result"]["estimand"] == "tau(d1, d3)"


def test_cli_estimate_qhat_star(tmp_path):
    cfg = write(
        tmp_path,
        "q.toml",
        'seed = 1\n[estimate]\nkind = "qhat"\nmode = "star"\ninfected = 3\nleaves = 10\n',
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["estimate", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    blob = json.loads((out / "estimate_qhat.json").read_text())
    assert blob["result"]["value"] == pytest.approx(0.3)


def test_cli_estimate_qhat_mc_recovers_truth(tmp_path):
    # center-seeded star, T=1: moment curve root at infected_leaves/leaves
    leaves = 40
    outcomes = [1.0] + [1.0] * 12 + [0.0] * (leaves - 12)
    cfg = write(
        tmp_path,
        "q.toml",
        f"""
seed = 4
[estimate]
kind = "qhat"
outcomes = {outcomes}
seed_nodes = [0]
T = 1
reps = 4000
[estimate.graph]
kind = "star"
leaves = {leaves}
""",
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["estimate", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    blob = json.loads((out / "estimate_qhat.json").read_text())
    assert abs(blob["result"]["q_hat"] - 12 / 40) < 0.03


def test_cli_estimate_socio(tmp_path):
    cfg = write(
        tmp_path,
        "s.toml",
        """
seed = 1
[estimate]
kind = "socio"
locations = [[0.0], [1.0]]
group_labels = [0, 1]
interaction = [[1.0, 0.5], [0.5, 1.0]]
sigma2 = 2.0
""",
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["estimate", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    blob = json.loads((out / "estimate_socio.json").read_text())
    mat = blob["result"]["matrix"]
    assert mat[0][0] == pytest.approx(2.0)
    assert mat[0][1] == pytest.approx(2.0 * np.exp(-1.0) * 0.5)


def test_cli_estimate_unknown_kind_exit1(tmp_path):
    cfg = write(tmp_path, "e.toml", 'seed = 1\n[estimate]\nkind = "nope"\n')
    result = CliRunner().invoke(main, ["estimate", "--config", cfg])
    assert result.exit_code == 1


def test_cli_gen_writes_samples(tmp_path):
    cfg = write(
        tmp_path,
        "g.toml",
        """
seed = 6
[model]
model_id = "m_dependent"
n = 10
[model.params]
M = 0
weights = [1.0]
[gen]
reps = 3
""",
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["gen", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    files = sorted(p.name for p in out.glob("sample_*.csv"))
    assert files == ["sample_00000.csv", "sample_00001.csv", "sample_00002.csv"]
    from affclt.core import SampleArray

    arr = SampleArray.from_csv(out / "sample_00000.csv")
    assert arr.values.shape == (10, 1)


def test_cli_info():
    result = CliRunner().invoke(main, ["info"])
    assert result.exit_code == 0
    assert "affclt" in result.output
    assert "kernel backend:" in result.output
    assert "m_dependent" in result.output


def test_cli_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("AFFCLT_THREADS", "2")
    cfg = write(
        tmp_path,
        "g.toml",
        'seed = 1\n[model]\nmodel_id = "m_dependent"\nn = 4\n'
        "[model.params]\nM = 0\nweights = [1.0]\n",
    )
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["gen", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["threads"] == 2
    result2 = CliRunner().invoke(
        main, ["gen", "--config", cfg, "--out", str(out), "--threads", "-3"]
    )
    assert result2.exit_code == 1
