import json
import os

import numpy as np
import pytest

from parascope.cli import main
from parascope.ensemble import load_manifest
from parascope.siren import load_model


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """gen -> train -> fim, shared by the command tests below."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data")
    assert (
        main(
            [
                "gen", "--family", "viscosity-decay-toy", "--train", "8", "--test", "4",
                "--seed", "7", "--out", data, "--resolution", "4,8,8",
            ]
        )
        == 0
    )
    model_path = str(root / "model.bin")
    assert (
        main(
            [
                "train", "--data", f"{data}/train", "--out", model_path,
                "--steps", "120", "--batch", "256", "--lr", "1e-3",
                "--widths", "16,16", "--coord-scale", "2.0", "--param-scale", "2.0",
                "--seed", "1",
            ]
        )
        == 0
    )
    prior_path = str(root / "prior.bin")
    assert (
        main(
            [
                "fim", "--model", model_path, "--data", f"{data}/train",
                "--out", prior_path, "--samples", "128", "--seed", "2",
            ]
        )
        == 0
    )
    feature_path = str(root / "feat.json")
    with open(feature_path, "w") as fh:
        json.dump(
            {"center": [0.0, 0.0], "radius": 0.4, "time": 0.0, "z_ref": [0.0], "K": 8},
            fh,
        )
    return {
        "root": root,
        "data": data,
        "model": model_path,
        "fim": prior_path,
        "feature": feature_path,
    }


def hmc_small():
    return [
        "--chains", "12", "--burn-in", "4", "--post-steps", "10", "--emit-every", "5",
        "--step-size", "0.05",
    ]


def test_gen_outputs(artifacts):
    train = load_manifest(f"{artifacts['data']}/train")
    test = load_manifest(f"{artifacts['data']}/test")
    assert train.count == 8 and test.count == 4


def test_trained_model_loads(artifacts):
    model = load_model(artifacts["model"])
    assert model.space.dim == 1
    assert model.layer_widths == [4, 16, 16, 2]


def test_sample_outputs_csv_and_heatmaps(artifacts):
    out = str(artifacts["root"] / "run1")
    code = main(
        ["sample", "--model", artifacts["model"], "--fim", artifacts["fim"],
         "--feature", artifacts["feature"], "--out", out, "--seed", "3",
         "--resolution", "16", *hmc_small()]
    )
    assert code == 0
    lines = open(f"{out}/samples.csv").read().strip().splitlines()
    assert lines[0] == "chain,step,z0,log_post"
    assert len(lines) > 1
    first = lines[1].split(",")
    assert len(first) == 4
    int(first[0]); int(first[1]); float(first[2]); float(first[3])
    doc = json.load(open(f"{out}/heatmaps.json"))
    assert doc["count"] == len(lines) - 1
    assert len(doc["grids"]) == 1  # d=1 -> single histogram
    assert doc["grids"][0]["resolution"] == 16
    assert sum(doc["grids"][0]["counts"]) == doc["count"]


def test_sample_is_reproducible_given_seed(artifacts, tmp_path):
    args = ["sample", "--model", artifacts["model"], "--fim", artifacts["fim"],
            "--feature", artifacts["feature"], "--seed", "9", *hmc_small()]
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(args + ["--out", a]) == 0
    assert main(args + ["--out", b]) == 0
    assert open(f"{a}/samples.csv").read() == open(f"{b}/samples.csv").read()


def test_config_file_overrides_flags(artifacts, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"post-steps": 5, "emit-every": 5}))
    out = str(tmp_path / "run")
    code = main(
        ["sample", "--model", artifacts["model"], "--fim", artifacts["fim"],
         "--feature", artifacts["feature"], "--out", out, "--seed", "3",
         *hmc_small(), "--config", str(cfg)]
    )
    assert code == 0
    steps = {line.split(",")[1] for line in
             open(f"{out}/samples.csv").read().strip().splitlines()[1:]}
    assert steps == {"9"}  # burn-in 4 + one emission at post step 5


def test_diagnose_psnr_hist(artifacts, tmp_path):
    out = str(tmp_path / "psnr")
    code = main(
        ["diagnose", "psnr-hist", "--model", artifacts["model"],
         "--data", f"{artifacts['data']}/test", "--out", out]
    )
    assert code == 0
    doc = json.load(open(f"{out}.json"))
    assert doc["kind"] == "psnr-hist"
    assert np.isfinite(doc["mean_psnr"])
    assert os.path.exists(f"{out}.csv")


def test_diagnose_sparsify_both_scorers(artifacts, tmp_path):
    for scorer in ("fim-kde", "kde"):
        out = str(tmp_path / scorer)
        code = main(
            ["diagnose", "sparsify", "--model", artifacts["model"],
             "--data", f"{artifacts['data']}/test", "--fim", artifacts["fim"],
             "--scorer", scorer, "--fractions", "0.0,0.5", "--out", out]
        )
        assert code == 0
        doc = json.load(open(f"{out}.json"))
        assert doc["scorer"] == scorer
        assert len(doc["fractions"]) == 2


def test_diagnose_sparsify_needs_prior(artifacts, tmp_path):
    code = main(
        ["diagnose", "sparsify", "--model", artifacts["model"],
         "--data", f"{artifacts['data']}/test", "--scorer", "kde",
         "--out", str(tmp_path / "x")]
    )
    assert code == 1


def test_diagnose_rhat(artifacts, tmp_path):
    out = str(tmp_path / "rhat")
    code = main(
        ["diagnose", "rhat", "--model", artifacts["model"], "--fim", artifacts["fim"],
         "--data", f"{artifacts['data']}/test", "--features", "2", "--out", out,
         "--chains", "8", "--burn-in", "4", "--post-steps", "20",
         "--emit-every", "5", "--step-size", "0.05"]
    )
    assert code == 0
    doc = json.load(open(f"{out}.json"))
    assert len(doc["values"]) > 0


def test_diagnose_mmd(artifacts, tmp_path):
    out = str(tmp_path / "mmd")
    code = main(
        ["diagnose", "mmd", "--model", artifacts["model"], "--fim", artifacts["fim"],
         "--feature", artifacts["feature"], "--steps", "5,10",
         "--reference-steps", "20", "--out", out, "--chains", "12",
         "--burn-in", "4", "--emit-every", "5", "--step-size", "0.05"]
    )
    assert code == 0
    doc = json.load(open(f"{out}.json"))
    assert [p["post_steps"] for p in doc["points"]] == [5, 10]
    assert all(p["mmd"] >= 0 for p in doc["points"])


def test_diagnose_nll(artifacts, tmp_path):
    out = str(tmp_path / "nll")
    code = main(
        ["diagnose", "nll", "--model", artifacts["model"], "--fim", artifacts["fim"],
         "--data", f"{artifacts['data']}/train", "--feature", artifacts["feature"],
         "--out", out, *hmc_small()]
    )
    assert code == 0
    doc = json.load(open(f"{out}.json"))
    assert doc["median"] >= 0
    assert doc["baseline_median"] >= 0


def test_unknown_subcommand_exits_one(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exits_one(capsys):
    assert main(["gen", "--family", "viscosity-decay-toy", "--out", "x", "--bogus"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["sample", "--help"]) == 0
    capsys.readouterr()


def test_validation_error_exit_code(artifacts, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(
        {"center": [-5.0, 0.0], "radius": 0.1, "time": 0.0, "z_ref": [0.0]}
    ))
    code = main(
        ["sample", "--model", artifacts["model"], "--fim", artifacts["fim"],
         "--feature", str(bad), "--out", str(tmp_path / "o"), *hmc_small()]
    )
    assert code == 1


def test_missing_artifact_exit_code(artifacts, tmp_path):
    code = main(
        ["sample", "--model", str(tmp_path / "none.bin"), "--fim", artifacts["fim"],
         "--feature", artifacts["feature"], "--out", str(tmp_path / "o")]
    )
    assert code in (1, 2)  # missing file: not-found validation or io failure


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_exit_code(artifacts, tmp_path, capsys):
    # infinite learning rate drives the weights non-finite on step one
    code = main(
        ["train", "--data", f"{artifacts['data']}/train",
         "--out", str(tmp_path / "m.bin"), "--steps", "50", "--batch", "64",
         "--lr", "inf", "--widths", "8,8", "--seed", "0"]
    )
    assert code == 2
    assert "error" in capsys.readouterr().err.lower()
