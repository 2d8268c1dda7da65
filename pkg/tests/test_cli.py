"""CLI surface: every documented subcommand against a file-backed toy corpus."""

import json

import numpy as np
import pytest

from lrtts.cli import main
from lrtts.corpus import read_mel_cache
from lrtts.pipeline import PipelineConfig
from lrtts.toydata import write_toy_corpus_files


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_corpus")
    manifest, sidecar = write_toy_corpus_files(
        root, counts={"tgt": 3, "sup": 3}, seed=0, use_wav=False)
    return root, manifest, sidecar


@pytest.fixture(scope="module")
def run_config(corpus_dir, tmp_path_factory):
    root, manifest, sidecar = corpus_dir
    run_dir = tmp_path_factory.mktemp("run")
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps({
        "target_speaker": "tgt",
        "manifest": str(manifest),
        "speakers": str(sidecar),
        "run_dir": str(run_dir),
        "stage2_steps": 25, "stage3_steps": 6, "stage4_steps": 6,
        "batch_size": 4, "vc_multi_steps": 15, "vc_target_epochs": 2,
        "vc_batch_size": 4, "duration_steps": 50,
        "warmup_steps": 20, "decay_end_steps": 2000,
        "kl_start": 5, "kl_end": 20, "seed": 0,
    }))
    return cfg_path, run_dir


def test_eval_gap_prints_percent(capsys):
    assert main(["eval", "gap", "--recordings", "82.30", "--baseline", "58.73",
                 "--candidate", "64.22"]) == 0
    assert capsys.readouterr().out.strip() == "23.3%"


def test_eval_gap_undefined(capsys):
    assert main(["eval", "gap", "--recordings", "50", "--baseline", "60",
                 "--candidate", "55"]) == 1
    assert "error" in capsys.readouterr().err


def test_vc_train_and_augment(corpus_dir, tmp_path):
    root, manifest, sidecar = corpus_dir
    ckpt = tmp_path / "vc_ckpt"
    assert main(["vc", "train", "--manifest", str(manifest), "--speakers",
                 str(sidecar), "--target-speaker", "tgt", "--config",
                 str(_small_vc_cfg(root, manifest, sidecar)), "--out",
                 str(ckpt)]) == 0
    out_manifest = tmp_path / "aug" / "synthetic.jsonl"
    assert main(["vc", "augment", "--manifest", str(manifest), "--speakers",
                 str(sidecar), "--config", str(_small_vc_cfg(root, manifest, sidecar)),
                 "--model", str(ckpt), "--source-speaker", "sup",
                 "--target-speaker", "tgt", "--out", str(out_manifest)]) == 0
    rows = [json.loads(l) for l in out_manifest.read_text().splitlines()]
    assert len(rows) == 3
    assert all(r["synthetic"] and r["speaker"] == "tgt" for r in rows)
    mel = read_mel_cache(out_manifest.parent / rows[0]["audio"])
    assert mel.n_frames > 0


def _small_vc_cfg(root, manifest, sidecar):
    path = root / "vc_cfg.json"
    if not path.exists():
        path.write_text(json.dumps({
            "target_speaker": "tgt", "manifest": str(manifest),
            "speakers": str(sidecar), "vc_multi_steps": 10,
            "vc_target_epochs": 1, "vc_batch_size": 4, "seed": 0}))
    return path


def test_full_pipeline_synth_eval(run_config, corpus_dir, tmp_path, capsys):
    cfg_path, run_dir = run_config
    root, manifest, sidecar = corpus_dir
    for stage in (1, 2, 3, 4):
        assert main(["pipeline", "run", "--stage", str(stage), "--config",
                     str(cfg_path)]) == 0
    bundle = run_dir / "stage4"
    assert (bundle / "meta.json").exists()

    # duration predict from the bundle
    assert main(["duration", "predict", "--bundle", str(bundle),
                 "--text-phonemes", "p0 p1 p2", "--speaker", "tgt"]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert len(payload["frames"]) == 3
    assert all(f >= 1 for f in payload["frames"])

    # synth to mel and wav
    mel_out = tmp_path / "out.mel"
    assert main(["synth", "--phonemes", "p0 p1 p2 p3", "--speaker", "tgt",
                 "--bundle", str(bundle), "--out", str(mel_out)]) == 0
    mel = read_mel_cache(mel_out)
    wav_out = tmp_path / "out.wav"
    assert main(["synth", "--phonemes", "p0 p1 p2 p3", "--speaker", "tgt",
                 "--bundle", str(bundle), "--out", str(wav_out),
                 "--iterations", "8"]) == 0
    from scipy.io import wavfile
    rate, data = wavfile.read(wav_out)
    assert data.dtype == np.int16

    # eval over directories
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir(), gt_dir.mkdir()
    from lrtts.corpus import write_mel_cache
    write_mel_cache(pred_dir / "u.mel", mel)
    write_mel_cache(gt_dir / "u.mel", mel)
    report = tmp_path / "report.json"
    assert main(["eval", "--pred-dir", str(pred_dir), "--gt-dir", str(gt_dir),
                 "--report", str(report)]) == 0
    parsed = json.loads(report.read_text())
    assert parsed["schema_version"] == 1
    assert parsed["aggregate"]["count"] == 1


def test_duration_train_cli(corpus_dir, tmp_path):
    root, manifest, sidecar = corpus_dir
    cfg = root / "dur_cfg.json"
    if not cfg.exists():
        cfg.write_text(json.dumps({
            "target_speaker": "tgt", "manifest": str(manifest),
            "speakers": str(sidecar), "duration_steps": 30, "seed": 0}))
    out = tmp_path / "dur_ckpt"
    assert main(["duration", "train", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "meta.json").exists()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["component"] == "duration"


def test_missing_data_is_reported(capsys):
    assert main(["pipeline", "run", "--stage", "1", "--target-speaker", "x"]) == 1
    assert "manifest" in capsys.readouterr().err
