"""CLI subcommands: file operations, configs, JSON output, exit codes."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from downbench import cli, datatools, imagecore, probes
from downbench.datatools import Manifest, ManifestRow

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture()
def probe_png(tmp_path):
    path = tmp_path / "in.png"
    imagecore.write_image(probes.probe_image(0, size=64), path)
    return path


@pytest.fixture()
def uniform_manifest(tmp_path):
    rows = [
        ManifestRow(f"r{i:04d}", f"r{i:04d}.png", *cell)
        for i, cell in enumerate(datatools.all_cells())
    ]
    path = tmp_path / "m.csv"
    datatools.write_manifest(Manifest(tuple(rows)), path)
    return path


def _run_config(tmp_path, manifest, cap=2, n_q=1, extra="") -> str:
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'[dataset]\nmanifest = "{manifest}"\ncap = {cap}\n\n'
        "[downscale]\nmethod = \"bicubic\"\nfactor = 4\n\n"
        "[upscale]\nkind = \"perturbed\"\ntau = 0.02\n\n"
        f"[score]\nn_q = {n_q}\nseed = 3\n" + extra
    )
    return str(cfg)


# --- file subcommands ---------------------------------------------------

def test_downscale_file(probe_png, tmp_path, capsys):
    out = tmp_path / "lr.png"
    rc = cli.main(
        ["downscale", "--method", "bicubic", "--factor", "4", str(probe_png), str(out)]
    )
    assert rc == 0
    assert imagecore.read_image(out).shape == (16, 16, 3)
    assert "16x16x3" in capsys.readouterr().out


def test_downscale_json(probe_png, tmp_path, capsys):
    out = tmp_path / "lr.png"
    rc = cli.main(
        ["downscale", "--json", "--factor", "8", str(probe_png), str(out)]
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["shape"] == [8, 8, 3]
    assert payload["method"] == "bicubic"


def test_degrade_file(probe_png, tmp_path):
    out = tmp_path / "deg.png"
    rc = cli.main(
        ["degrade", "--kind", "gauss_noise", "--sigma", "0.1",
         str(probe_png), str(out)]
    )
    assert rc == 0
    a = imagecore.read_image(probe_png)
    b = imagecore.read_image(out)
    assert b.shape == a.shape
    assert not np.array_equal(a.data, b.data)


def test_degrade_quantize(probe_png, tmp_path):
    out = tmp_path / "q.png"
    rc = cli.main(
        ["degrade", "--kind", "quantize_otsu", "--levels", "3",
         str(probe_png), str(out)]
    )
    assert rc == 0
    img = imagecore.read_image(out)
    assert len(np.unique(img.data)) <= 3 * (3 + 1)  # per channel <= levels+1


def test_upscale_file(probe_png, tmp_path):
    out = tmp_path / "up.png"
    rc = cli.main(["upscale", "--factor", "2", str(probe_png), str(out)])
    assert rc == 0
    assert imagecore.read_image(out).shape == (128, 128, 3)


def test_upscale_stochastic_samples_differ(probe_png, tmp_path):
    outs = []
    for sample in ("1", "2"):
        out = tmp_path / f"s{sample}.png"
        rc = cli.main(
            ["upscale", "--factor", "2", "--tau", "0.05", "--sample", sample,
             str(probe_png), str(out)]
        )
        assert rc == 0
        outs.append(imagecore.read_image(out))
    assert not np.array_equal(outs[0].data, outs[1].data)


# --- scoring subcommands ------------------------------------------------

def test_score_json_and_report_verify(small_manifest, tmp_path, capsys):
    config = _run_config(tmp_path, small_manifest)
    out_dir = tmp_path / "run"
    rc = cli.main(["score", "--config", config, "--out", str(out_dir), "--json"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert 0.0 < payload["score"] < 1.0
    assert payload["n_images"] == 2
    assert payload["metadata"]["seed"] == 3

    rc = cli.main(["report", str(out_dir)])
    assert rc == 0
    assert "consistent" in capsys.readouterr().out


def test_report_flags_tampering(small_manifest, tmp_path, capsys):
    config = _run_config(tmp_path, small_manifest)
    out_dir = tmp_path / "run"
    assert cli.main(["score", "--config", config, "--out", str(out_dir)]) == 0
    csv_path = out_dir / "samples.csv"
    lines = csv_path.read_text().splitlines()
    parts = lines[1].split(",")
    lines[1] = f"{parts[0]},{parts[1]},0.123456"
    csv_path.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert cli.main(["report", str(out_dir)]) == 1
    assert "INCONSISTENT" in capsys.readouterr().out


def test_seed_override_changes_score(small_manifest, tmp_path, capsys):
    config = _run_config(tmp_path, small_manifest)
    scores = {}
    for seed in ("3", "4"):
        rc = cli.main(["score", "--config", config, "--seed", seed, "--json"])
        assert rc == 0
        scores[seed] = json.loads(capsys.readouterr().out)["score"]
    assert scores["3"] != scores["4"]


def test_sweep_from_table(small_manifest, tmp_path, capsys):
    config = _run_config(
        tmp_path,
        small_manifest,
        extra='\n[sweep]\nfamily = "gauss_noise"\nlevels = [0.05, 0.2]\n',
    )
    rc = cli.main(["sweep", "--config", config, "--json"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["rho"] == 1.0
    assert payload["parameter"] == "sigma"
    assert len(payload["scores"]) == 2


def test_scale_sweep_flags(small_manifest, tmp_path, capsys):
    config = _run_config(tmp_path, small_manifest, cap=2)
    rc = cli.main(["scale-sweep", "--config", config, "--factors", "2", "4", "--json"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["kind"] == "scale"
    assert payload["scores"][0] < payload["scores"][1]


# --- dataset subcommands ------------------------------------------------

def test_balance_writes_subset(uniform_manifest, tmp_path, capsys):
    out = tmp_path / "subset.csv"
    rc = cli.main(
        ["balance", "--manifest", str(uniform_manifest), "--n", "12",
         "--out", str(out), "--json"]
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["selected"] == 12
    assert len(datatools.read_manifest(out)) == 12
    assert (tmp_path / "subset.csv.meta.json").exists()


def test_entropy_prints_bits(uniform_manifest, capsys):
    rc = cli.main(["entropy", "--manifest", str(uniform_manifest)])
    assert rc == 0
    assert "4.5850 bits over 24 rows" in capsys.readouterr().out


def test_entropy_json_golden(uniform_manifest, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(uniform_manifest.parent)
    rc = cli.main(["entropy", "--json", "--manifest", "m.csv"])
    assert rc == 0
    got = capsys.readouterr().out
    want = (GOLDEN / "entropy.json").read_text()
    assert got == want
    assert json.loads(got)["joint_entropy"] == pytest.approx(math.log2(24))


# --- error handling -----------------------------------------------------

def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        cli.main(["downscale", "in.png", "out.png"])  # missing --factor
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        cli.main(["frobnicate"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        cli.main([])
    assert err.value.code == 2


def test_operation_failure_exits_1_with_json(capsys):
    rc = cli.main(["downscale", "--factor", "4", "missing.png", "out.png"])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "FileNotFoundError"


def test_score_without_config_exits_1(capsys):
    rc = cli.main(["score"])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "ConfigError"


def test_bad_toml_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[dataset\nmanifest = ")
    rc = cli.main(["score", "--config", str(bad)])
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"]["type"] == "ConfigError"


def test_invalid_scale_error_payload(probe_png, tmp_path, capsys):
    rc = cli.main(
        ["downscale", "--factor", "1000", str(probe_png), str(tmp_path / "o.png")]
    )
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"]["type"] == "InvalidScaleError"
