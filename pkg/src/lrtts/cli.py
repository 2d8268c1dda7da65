"""Command-line interface.

Subcommands:
  vc train / vc augment       -- step-1 voice conversion and augmentation
  duration train / predict    -- the external duration model
  pipeline run --stage N      -- one pipeline stage under a run directory
  synth                       -- text(phonemes) -> mel or wav from a bundle
  eval / eval gap             -- objective metrics and gap-closure arithmetic
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import vc as vcmod
from .corpus import (MelConfig, load_corpus, load_speaker_embeddings,
                     write_mel_cache)
from .duration import (DurationModel, predict_durations, quantize_durations,
                       train_duration_model)
from .errors import LrttsError
from .pipeline import (PipelineConfig, load_checkpoint, make_pipeline_state,
                       run_pipeline_stage, save_checkpoint)
from .synth import (SynthesisRequest, emit_report, evaluate_directories,
                    gap_closure, load_bundle, mel_invert, synthesize, write_wav)


def _mel_config(cfg: PipelineConfig) -> MelConfig:
    if cfg.profile == "paper":
        return MelConfig(n_bins=cfg.mel_bins)
    return MelConfig(n_bins=cfg.mel_bins, win_length=512, hop_length=128)


def _load_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_file(args.config, profile=args.profile)
    else:
        maker = (PipelineConfig.paper if args.profile == "paper"
                 else PipelineConfig.desk)
        if not getattr(args, "target_speaker", None):
            raise LrttsError("--target-speaker is required without --config")
        cfg = maker(args.target_speaker)
    for field in ("manifest", "speakers", "run_dir"):
        if getattr(args, field, None):
            cfg = cfg.__class__(**{**cfg.to_dict(), field: str(getattr(args, field))})
    return cfg


def _load_data(cfg: PipelineConfig):
    if not cfg.manifest or not cfg.speakers:
        raise LrttsError("a manifest and a speaker sidecar are required "
                         "(--manifest/--speakers or config fields)")
    corpus = load_corpus(cfg.manifest, mel_config=_mel_config(cfg))
    speakers = load_speaker_embeddings(cfg.speakers)
    return corpus, speakers


# ---------------------------------------------------------------------------
# vc

def cmd_vc_train(args) -> int:
    cfg = _load_config(args)
    corpus, speakers = _load_data(cfg)
    model, log = vcmod.vc_train(corpus.records, speakers, cfg.target_speaker,
                                cfg.vc_config(len(corpus.vocabulary)),
                                cfg.vc_settings())
    out = Path(args.out)
    save_checkpoint(out, component="vc", stage=1, step=len(log.losses),
                    params=model.state(), cfg_hash=cfg.hash())
    (out / "vocabulary.json").write_text(
        json.dumps(list(corpus.vocabulary.symbols)))
    print(f"vc: trained {len(log.losses)} steps, final loss {log.final_loss:.4f}, "
          f"saved to {out}")
    return 0


def cmd_vc_augment(args) -> int:
    cfg = _load_config(args)
    corpus, speakers = _load_data(cfg)
    ckpt = load_checkpoint(args.model, expected_hash=cfg.hash(), force=args.force)
    model = vcmod.VcModel(cfg.vc_config(len(corpus.vocabulary)))
    model.load_state(ckpt.params)
    model.eval()
    sources = [r for r in corpus.records
               if r.speaker_id == args.source_speaker and not r.synthetic]
    if not sources:
        raise LrttsError(f"no records for source speaker '{args.source_speaker}'")
    synthetic = vcmod.augment_corpus(model, sources, speakers[args.target_speaker],
                                     speakers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in synthetic:
        symbols = corpus.vocabulary.decode(rec.phonemes)
        write_mel_cache(out.parent / f"{rec.id}.mel", rec.mel)
        (out.parent / f"{rec.id}.json").write_text(json.dumps(
            [{"phoneme": s, "frames": int(d)}
             for s, d in zip(symbols, rec.durations.frames)]))
        lines.append(json.dumps({
            "id": rec.id, "audio": f"{rec.id}.mel", "speaker": rec.speaker_id,
            "phonemes": symbols, "alignment": f"{rec.id}.json",
            "synthetic": True}, sort_keys=True))
    out.write_text("\n".join(lines) + "\n")
    print(f"vc: wrote {len(synthetic)} synthetic records to {out}")
    return 0


# ---------------------------------------------------------------------------
# duration

def cmd_duration_train(args) -> int:
    cfg = _load_config(args)
    corpus, speakers = _load_data(cfg)
    model, losses = train_duration_model(
        corpus.records, speakers, cfg.duration_config(len(corpus.vocabulary)),
        cfg.duration_settings())
    out = Path(args.out)
    save_checkpoint(out, component="duration", stage=2, step=losses.size,
                    params=model.state(), cfg_hash=cfg.hash(),
                    extra={"mode": model.mode})
    (out / "vocabulary.json").write_text(json.dumps(list(corpus.vocabulary.symbols)))
    print(f"duration: trained {losses.size} steps, final log-MSE {losses[-1]:.6f}, "
          f"saved to {out}")
    return 0


def cmd_duration_predict(args) -> int:
    bundle = load_bundle(args.bundle, force=args.force)
    phonemes = bundle.vocabulary.encode(args.text_phonemes.split())
    if args.speaker not in bundle.speakers:
        raise LrttsError(f"unknown speaker '{args.speaker}'")
    raw = predict_durations(phonemes, bundle.speakers[args.speaker],
                            bundle.duration)
    quantized = quantize_durations(raw)
    print(json.dumps({"raw": [round(float(x), 4) for x in raw],
                      "frames": quantized.frames.tolist()}))
    return 0


# ---------------------------------------------------------------------------
# pipeline / synth / eval

def cmd_pipeline_run(args) -> int:
    cfg = _load_config(args)
    corpus, speakers = _load_data(cfg)
    state = make_pipeline_state(corpus, speakers, cfg, cfg.run_dir)
    run_pipeline_stage(state, args.stage)
    print(f"pipeline: stage {args.stage} complete; artifacts in "
          f"{Path(cfg.run_dir) / f'stage{args.stage}'}")
    return 0


def cmd_synth(args) -> int:
    bundle = load_bundle(args.bundle, force=args.force)
    request = SynthesisRequest(
        phonemes=bundle.vocabulary.encode(args.phonemes.split()),
        speaker_id=args.speaker)
    mel = synthesize(request, bundle)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".mel":
        write_mel_cache(out, mel)
    elif out.suffix == ".wav":
        wav = mel_invert(mel, bundle.mel_config, iterations=args.iterations)
        write_wav(out, wav, bundle.mel_config.sample_rate)
    else:
        raise LrttsError(f"--out must end in .wav or .mel, got '{out.suffix}'")
    print(f"synth: {mel.n_frames} frames -> {out}")
    return 0


def cmd_eval_dirs(args) -> int:
    metrics = evaluate_directories(args.pred_dir, args.gt_dir)
    metrics["metadata"] = {"pred_dir": str(args.pred_dir),
                           "gt_dir": str(args.gt_dir)}
    emit_report(metrics, args.report)
    print(f"eval: {metrics['aggregate']['count']} utterances, "
          f"mel L1 mean {metrics['aggregate']['mel_l1_mean']:.4f} -> {args.report}")
    return 0


def cmd_eval_gap(args) -> int:
    pct = gap_closure(args.recordings, args.baseline, args.candidate)
    print(f"{pct:.1f}%")
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def _add_data_args(p, need_target=True):
    p.add_argument("--config", default=None, help="JSON config overriding the profile")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--manifest", default=None, help="corpus manifest (JSON-lines)")
    p.add_argument("--speakers", default=None, help="speaker-embedding sidecar JSON")
    if need_target:
        p.add_argument("--target-speaker", dest="target_speaker", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrtts",
                                     description="Low-resource expressive TTS pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    vc = sub.add_parser("vc", help="voice conversion").add_subparsers(
        dest="vc_command", required=True)
    p = vc.add_parser("train")
    _add_data_args(p)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_vc_train)
    p = vc.add_parser("augment")
    _add_data_args(p, need_target=False)
    p.add_argument("--model", required=True, help="vc checkpoint directory")
    p.add_argument("--source-speaker", required=True)
    p.add_argument("--target-speaker", dest="target_speaker", required=True)
    p.add_argument("--out", required=True, help="output manifest.jsonl")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_vc_augment)

    duration = sub.add_parser("duration", help="duration model").add_subparsers(
        dest="duration_command", required=True)
    p = duration.add_parser("train")
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_duration_train)
    p = duration.add_parser("predict")
    p.add_argument("--bundle", required=True, help="stage checkpoint directory")
    p.add_argument("--text-phonemes", required=True,
                   help="space-separated phoneme symbols")
    p.add_argument("--speaker", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_duration_predict)

    pipe = sub.add_parser("pipeline", help="staged training")
    pipe_sub = pipe.add_subparsers(dest="pipeline_command", required=True)
    p = pipe_sub.add_parser("run")
    p.add_argument("--stage", type=int, choices=(1, 2, 3, 4), required=True)
    _add_data_args(p)
    p.add_argument("--run-dir", dest="run_dir", default=None)
    p.set_defaults(func=cmd_pipeline_run)

    p = sub.add_parser("synth", help="synthesize a mel or wav")
    p.add_argument("--phonemes", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="path ending in .wav or .mel")
    p.add_argument("--iterations", type=int, default=60)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "eval":
        return _eval_main(argv[1:])
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LrttsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _eval_main(argv) -> int:
    if argv and argv[0] == "gap":
        p = argparse.ArgumentParser(prog="lrtts eval gap")
        p.add_argument("--recordings", type=float, required=True)
        p.add_argument("--baseline", type=float, required=True)
        p.add_argument("--candidate", type=float, required=True)
        args = p.parse_args(argv[1:])
        fn = cmd_eval_gap
    else:
        p = argparse.ArgumentParser(prog="lrtts eval")
        p.add_argument("--pred-dir", required=True)
        p.add_argument("--gt-dir", required=True)
        p.add_argument("--report", required=True)
        args = p.parse_args(argv)
        fn = cmd_eval_dirs
    try:
        return fn(args)
    except LrttsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
