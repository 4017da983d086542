import json

import numpy as np
import pytest
from click.testing import CliRunner

from motionweave import checkpoint as C
from motionweave import corpus, embedding
from motionweave import pipeline as P
from motionweave import vae as V
from motionweave.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, small_corpus, tiny_models):
    root = tmp_path_factory.mktemp("cli_models")
    corpus.save_corpus(small_corpus, root / "corpus.jsonl")
    C.save_space(root / "embedder.ckpt", tiny_models.space)
    for level in "mas":
        C.save_vae(root / f"vae_{level}.ckpt", tiny_models.vaes[level])
    C.save_denoisers(root / "diffusion.ckpt", tiny_models.denoisers)
    return root


def test_gen_corpus_deterministic(runner, tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    for path in (a, b):
        result = runner.invoke(main, ["gen-corpus", "--seed", "5", "--size",
                                      "12", "--out", str(path)])
        assert result.exit_code == 0, result.output
    assert a.read_bytes() == b.read_bytes()


def test_usage_error_exit_code(runner):
    result = runner.invoke(main, ["gen-corpus", "--size", "4"])
    assert result.exit_code == 2
    result = runner.invoke(main, ["train", "nonsense", "--corpus", "x",
                                  "--out", "y"])
    assert result.exit_code == 2


def test_runtime_error_exit_code(runner, tmp_path):
    missing = tmp_path / "nope.jsonl"
    result = runner.invoke(main, ["--json", "train", "embedder", "--corpus",
                                  str(missing), "--out", str(tmp_path)])
    assert result.exit_code == 2  # click validates the path itself
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    result = runner.invoke(main, ["--json", "train", "embedder", "--corpus",
                                  str(bad), "--out", str(tmp_path / "m")])
    assert result.exit_code == 1
    payload = json.loads(result.output.strip().splitlines()[-1])
    assert "error" in payload


def test_parse_command(runner):
    result = runner.invoke(main, ["parse", "--text",
                                  "a person walks forward"])
    assert result.exit_code == 0
    payload = json.loads(result.output)
    kinds = [n["kind"] for n in payload["nodes"]]
    assert kinds.count("action") == 1
    assert payload["local_actions"] == ["a person walks forward"]
    result = runner.invoke(main, ["parse", "--text", "nothing here"])
    assert result.exit_code == 1


def test_generate_byte_identical(runner, model_dir, tmp_path):
    args = ["generate", "--text", "a person walks forward and jumps",
            "--models", str(model_dir), "--corpus",
            str(model_dir / "corpus.jsonl"), "--steps", "5,5,5",
            "--seed", "3"]
    out1 = tmp_path / "m1.json"
    out2 = tmp_path / "m2.json"
    r1 = runner.invoke(main, args + ["--out", str(out1)])
    assert r1.exit_code == 0, r1.output
    r2 = runner.invoke(main, args + ["--out", str(out2)])
    assert r2.exit_code == 0
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["diagnostics"]["lambdas"]
    assert payload["motion"]["n_frames"] == len(payload["features"])


def test_generate_weights_and_rho(runner, model_dir, tmp_path):
    base = ["generate", "--text", "a person walks forward and jumps",
            "--models", str(model_dir), "--corpus",
            str(model_dir / "corpus.jsonl"), "--steps", "4,4,4", "--seed",
            "1"]
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    r = runner.invoke(main, base + ["--rho", "0.0", "--out", str(out_a)])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, base + ["--weights", "0=0.0,1=0.0", "--out",
                                    str(out_b)])
    assert r.exit_code == 0
    fa = json.loads(out_a.read_text())["features"]
    fb = json.loads(out_b.read_text())["features"]
    assert fa == fb
    r = runner.invoke(main, base + ["--weights", "7=1.0"])
    assert r.exit_code == 1


def test_sample_action_command(runner, model_dir, tmp_path):
    out = tmp_path / "cands.json"
    result = runner.invoke(main, ["sample-action", "--text",
                                  "a person jumps", "--seeds", "2",
                                  "--models", str(model_dir), "--steps",
                                  "4,4", "--length", "24", "--out", str(out)])
    assert result.exit_code == 0, result.output
    payload = json.loads(out.read_text())
    assert len(payload["candidates"]) == 2
    latent = np.asarray(payload["candidates"][0]["latent"])
    assert latent.shape == (4, 32)
    assert payload["candidates"][0]["motion"]["n_frames"] == 24


def test_evaluate_command(runner, model_dir, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(main, ["--json", "evaluate", "--corpus",
                                  str(model_dir / "corpus.jsonl"),
                                  "--models", str(model_dir),
                                  "--repeats", "2", "--eval-size", "32",
                                  "--steps", "3,3,3", "--out", str(out)])
    assert result.exit_code == 0, result.output
    payload = json.loads(out.read_text())
    for key in ("r_precision_top1", "fid", "mm_dist", "diversity",
                "multimodality"):
        assert key in payload
        assert "ci95" in payload[key]
        assert len(payload[key]["values"]) == 2
