"""Stage orchestration: data filters, training loops, checkpoints, metrics.

Stages (each checkpointed under ``run_dir/stageN/``, and each requiring the
previous stage's checkpoint):

1. voice-conversion training + corpus augmentation (synthetic manifest)
2. acoustic + separate duration model on all speakers' real + synthetic data
3. acoustic fine-tuning on target-speaker ground truth
4. conditional-GAN fine-tuning with all VAE weights frozen
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import acoustic as ac
from .. import adversarial as adv
from .. import duration as dur
from .. import vc as vcmod
from ..corpus import (Corpus, SpeakerEmbedding, UtteranceRecord, load_alignment,
                      load_manifest, read_mel_cache, write_mel_cache)
from ..errors import CheckpointError, ConfigError, ValidationError
from ..nn import Adam, Tensor, concat as t_concat, gather_frames
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PipelineConfig
from .plan import LOSS_GAN, LOSS_L1_KL, LOSS_VC, TrainingPlan, plan_for_stage
from .schedule import lr_at


def adam_step(optimizer: Adam, lr: float, frozen: frozenset = frozenset()) -> None:
    """One optimizer update; parameters named in ``frozen`` stay untouched."""
    optimizer.step(lr=lr, frozen=frozen)


@dataclass
class PipelineState:
    """Everything one training process owns: models, optimizers, data, audits."""

    config: PipelineConfig
    corpus: Corpus
    speakers: dict[str, SpeakerEmbedding]
    run_dir: Path
    vc_model: vcmod.VcModel | None = None
    acoustic_model: ac.AcousticModel | None = None
    duration_model: dur.DurationModel | None = None
    discriminator: adv.Discriminator | None = None
    acoustic_opt: Adam | None = None
    discriminator_opt: Adam | None = None
    acoustic_step: int = 0
    completed: set = field(default_factory=set)
    sampled_ids: dict = field(default_factory=dict)   # stage -> set of record ids

    def records(self) -> list[UtteranceRecord]:
        return self.corpus.records


class MetricsLog:
    """Append-only JSON-lines step log."""

    FIELDS = ("step", "stage", "l1", "dkl", "gamma", "lg", "ld", "lr")

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, **row) -> None:
        record = {k: row.get(k) for k in self.FIELDS}
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def make_pipeline_state(corpus: Corpus, speakers: dict[str, SpeakerEmbedding],
                        config: PipelineConfig, run_dir) -> PipelineState:
    if config.target_speaker not in {r.speaker_id for r in corpus.records}:
        raise ValidationError(
            f"target speaker '{config.target_speaker}' not in corpus")
    for rec in corpus.records:
        if rec.speaker_id not in speakers:
            raise ValidationError(f"no embedding for speaker '{rec.speaker_id}'")
    if speakers[config.target_speaker].dim != config.speaker_dim:
        raise ValidationError(
            f"sidecar dimension {speakers[config.target_speaker].dim} != "
            f"configured speaker_dim {config.speaker_dim}")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    return PipelineState(config=config, corpus=corpus, speakers=speakers,
                         run_dir=run_dir)


# ---------------------------------------------------------------------------
# batching

def make_acoustic_batch(records: list[UtteranceRecord],
                        speakers: dict[str, SpeakerEmbedding]):
    B = len(records)
    n_max = max(len(r.phonemes) for r in records)
    t_max = max(r.mel.n_frames for r in records)
    bins = records[0].mel.n_bins
    ids = np.zeros((B, n_max), dtype=np.int64)
    durs = np.zeros((B, n_max), dtype=np.int64)
    mel = np.zeros((B, t_max, bins))
    spk = np.zeros((B, speakers[records[0].speaker_id].dim))
    synth = np.zeros(B, dtype=bool)
    phon_lengths = np.zeros(B, dtype=np.int64)
    for i, r in enumerate(records):
        n = len(r.phonemes)
        ids[i, :n] = r.phonemes.ids
        durs[i, :n] = r.durations.frames
        mel[i, :r.mel.n_frames] = r.mel.data
        spk[i] = speakers[r.speaker_id].vector
        synth[i] = r.synthetic
        phon_lengths[i] = n
    return ids, phon_lengths, durs, mel, spk, synth


def masked_l1_t(pred: Tensor, target: np.ndarray, frame_lengths: np.ndarray) -> Tensor:
    """Per-utterance mean |err| over valid cells, then batch mean."""
    t_max, bins = target.shape[1], target.shape[2]
    valid = (np.arange(t_max)[None, :] < frame_lengths[:, None]).astype(np.float64)
    diff = (pred - Tensor(target)).abs() * Tensor(valid[:, :, None])
    per_utt = diff.sum(axis=(1, 2)) * Tensor(1.0 / (frame_lengths * bins))
    return per_utt.mean()


# ---------------------------------------------------------------------------
# generator forward (stages 2-4 share it)

def acoustic_training_forward(model: ac.AcousticModel, batch, eps: np.ndarray):
    """Teacher-forced forward pass; only ground-truth durations reach the upsampler.

    Returns (pred, mu, log_sigma, z, x_tilde, frame_map, frame_lengths).
    """
    ids, phon_lengths, durs, mel, spk, synth = batch
    x_tilde = model.encode_batch(ids, phon_lengths)
    frame_lengths_in = durs.sum(axis=1)
    mu, log_sigma = model.vae_posterior_batch(mel[:, :int(frame_lengths_in.max()), :],
                                              frame_lengths_in)
    z = mu + log_sigma.exp() * Tensor(eps)
    cond, frame_lengths, frame_map = ac.build_conditioning_batch(
        x_tilde, z, spk, synth, durs, model.config.pos_width)
    pred = model.decode_batch(cond, frame_lengths)
    return pred, mu, log_sigma, z, x_tilde, frame_map, frame_lengths


# ---------------------------------------------------------------------------
# stage loops

def _sample_batch(plan: TrainingPlan, records, rng) -> list[UtteranceRecord]:
    pool = [r for r in records if plan.admits(r)]
    if not pool:
        raise ValidationError(f"stage {plan.stage}: no records pass the data filter")
    take = rng.choice(len(pool), size=min(plan.batch_size, len(pool)),
                      replace=len(pool) < plan.batch_size)
    return [pool[i] for i in take]


def _stage_dir(state: PipelineState, stage: int) -> Path:
    return state.run_dir / f"stage{stage}"


def _require_previous_stage(state: PipelineState, stage: int) -> None:
    if stage == 1:
        return
    prev = _stage_dir(state, stage - 1)
    if not (prev / "meta.json").exists():
        raise CheckpointError(
            f"stage {stage} requires the stage {stage - 1} checkpoint at {prev}")


def _ensure_models(state: PipelineState) -> None:
    cfg = state.config
    vocab_size = len(state.corpus.vocabulary)
    if state.acoustic_model is None:
        state.acoustic_model = ac.AcousticModel(
            cfg.acoustic_config(vocab_size),
            rng=np.random.default_rng(cfg.seed + 11))
        state.acoustic_opt = Adam(state.acoustic_model.parameters(),
                                  clip_norm=cfg.grad_clip)
    if state.discriminator is None:
        state.discriminator = adv.Discriminator(
            cfg.discriminator_config(vocab_size),
            rng=np.random.default_rng(cfg.seed + 13))
        state.discriminator_opt = Adam(state.discriminator.parameters(),
                                       clip_norm=cfg.grad_clip)


def _load_acoustic_from(state: PipelineState, stage: int) -> None:
    ckpt = load_checkpoint(_stage_dir(state, stage), state.config.hash())
    _ensure_models(state)
    state.acoustic_model.load_state(
        {k[len("acoustic."):]: v for k, v in ckpt.params.items()
         if k.startswith("acoustic.")})
    if ckpt.optimizer is not None:
        state.acoustic_opt.load_state(ckpt.optimizer)
    state.acoustic_step = ckpt.step
    dur_params = {k[len("duration."):]: v for k, v in ckpt.params.items()
                  if k.startswith("duration.")}
    if dur_params:
        vocab_size = len(state.corpus.vocabulary)
        state.duration_model = dur.DurationModel(
            state.config.duration_config(vocab_size))
        state.duration_model.load_state(dur_params)
        state.duration_model.eval()


def load_synthetic_records(stage1_dir, corpus: Corpus) -> list[UtteranceRecord]:
    """Read the augmentation manifest written by stage 1."""
    manifest = Path(stage1_dir) / "synthetic" / "manifest.jsonl"
    if not manifest.exists():
        raise CheckpointError(f"stage-1 checkpoint lacks {manifest}")
    out = []
    base = manifest.parent
    for entry in load_manifest(manifest):
        mel = read_mel_cache(base / entry.audio)
        durations = load_alignment(base / entry.alignment, entry.phonemes)
        out.append(UtteranceRecord(
            id=entry.id, speaker_id=entry.speaker,
            phonemes=corpus.vocabulary.encode(entry.phonemes),
            mel=mel, durations=durations, synthetic=True))
    return out


def _write_synthetic(stage_dir: Path, records: list[UtteranceRecord],
                     corpus: Corpus) -> None:
    syn_dir = stage_dir / "synthetic"
    syn_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in records:
        symbols = corpus.vocabulary.decode(rec.phonemes)
        write_mel_cache(syn_dir / f"{rec.id}.mel", rec.mel)
        (syn_dir / f"{rec.id}.json").write_text(json.dumps(
            [{"phoneme": s, "frames": int(d)}
             for s, d in zip(symbols, rec.durations.frames)]))
        lines.append(json.dumps({
            "id": rec.id, "audio": f"{rec.id}.mel", "speaker": rec.speaker_id,
            "phonemes": symbols, "alignment": f"{rec.id}.json", "synthetic": True,
        }, sort_keys=True))
    (syn_dir / "manifest.jsonl").write_text("\n".join(lines) + "\n")


def _pick_source_speaker(state: PipelineState) -> str:
    cfg = state.config
    if cfg.vc_source_speaker:
        return cfg.vc_source_speaker
    totals: dict[str, float] = {}
    for rec in state.records():
        if rec.speaker_id != cfg.target_speaker and not rec.synthetic:
            totals[rec.speaker_id] = totals.get(rec.speaker_id, 0.0) + rec.duration_s
    if not totals:
        raise ValidationError("augmentation needs at least one supporting speaker")
    return max(sorted(totals), key=lambda s: totals[s])


def _run_stage1(state: PipelineState, plan: TrainingPlan, log: MetricsLog) -> None:
    cfg = state.config
    vocab_size = len(state.corpus.vocabulary)
    real = [r for r in state.records() if not r.synthetic]
    model, train_log = vcmod.vc_train(real, state.speakers, cfg.target_speaker,
                                      cfg.vc_config(vocab_size), cfg.vc_settings())
    state.vc_model = model
    for i, loss in enumerate(train_log.losses):
        log.append(step=i, stage=1, l1=float(loss), lr=cfg.vc_lr)
    source = _pick_source_speaker(state)
    sources = [r for r in real if r.speaker_id == source]
    synthetic = vcmod.augment_corpus(model, sources,
                                     state.speakers[cfg.target_speaker],
                                     state.speakers)
    state.corpus.records.extend(synthetic)
    state.sampled_ids.setdefault(1, set()).update(r.id for r in real)
    stage_dir = _stage_dir(state, 1)
    save_checkpoint(stage_dir, component="vc", stage=1,
                    step=len(train_log.losses),
                    params={f"vc.{k}": v for k, v in model.state().items()},
                    cfg_hash=cfg.hash(),
                    extra={"source_speaker": source,
                           "synthetic_count": len(synthetic)})
    _write_synthetic(stage_dir, synthetic, state.corpus)


def _acoustic_param_state(state: PipelineState) -> dict:
    params = {f"acoustic.{k}": v for k, v in state.acoustic_model.state().items()}
    if state.duration_model is not None:
        params.update({f"duration.{k}": v
                       for k, v in state.duration_model.state().items()})
    return params


def _save_acoustic_stage(state: PipelineState, stage: int,
                         include_disc: bool = False, extra: dict | None = None):
    stage_dir = _stage_dir(state, stage)
    meta = {"vae_frozen": stage == 4}
    meta.update(extra or {})
    save_checkpoint(stage_dir, component="acoustic", stage=stage,
                    step=state.acoustic_step,
                    params=_acoustic_param_state(state),
                    optimizer=state.acoustic_opt.state(),
                    cfg_hash=state.config.hash(), extra=meta)
    if include_disc and state.discriminator is not None:
        # discriminator weights live apart: inference bundles never read them
        save_checkpoint(stage_dir / "discriminator", component="discriminator",
                        stage=stage, step=state.acoustic_step,
                        params=state.discriminator.state(),
                        cfg_hash=state.config.hash())
    # inference bundle pieces: latent centroid, phoneme inventory, configs
    target_gt = [r for r in state.records()
                 if r.speaker_id == state.config.target_speaker and not r.synthetic]
    state.acoustic_model.eval()
    centroid = ac.vae_centroid(state.acoustic_model, target_gt)
    np.save(stage_dir / "centroid.npy", centroid)
    (stage_dir / "vocabulary.json").write_text(
        json.dumps(list(state.corpus.vocabulary.symbols)))
    (stage_dir / "speakers.json").write_text(json.dumps(
        {sid: emb.vector.tolist() for sid, emb in sorted(state.speakers.items())},
        sort_keys=True))
    (stage_dir / "mel_config.json").write_text(
        json.dumps(state.corpus.mel_config.to_dict(), sort_keys=True))
    state.config.save(stage_dir / "config.json")


def _run_l1_kl_stage(state: PipelineState, plan: TrainingPlan, log: MetricsLog) -> None:
    cfg = state.config
    _ensure_models(state)
    model = state.acoustic_model
    model.train(True)
    data_rng = np.random.default_rng(cfg.seed + 100 * plan.stage)
    eps_rng = np.random.default_rng(cfg.seed + 100 * plan.stage + 1)
    sampled = state.sampled_ids.setdefault(plan.stage, set())
    lr_sched = cfg.lr_schedule()
    kl_sched = cfg.kl_schedule()
    joint_head = None
    if cfg.joint_duration and plan.stage == 2:
        joint_head = dur.DurationModel(
            cfg.duration_config(len(state.corpus.vocabulary)),
            rng=np.random.default_rng(cfg.seed + 17))
        state.duration_model = joint_head
        state.acoustic_opt = Adam({**model.parameters(),
                                   **{f"joint.{k}": p for k, p in
                                      joint_head.parameters().items()}},
                                  clip_norm=cfg.grad_clip)

    for _ in range(plan.steps):
        batch_records = _sample_batch(plan, state.records(), data_rng)
        sampled.update(r.id for r in batch_records)
        batch = make_acoustic_batch(batch_records, state.speakers)
        eps = eps_rng.standard_normal((len(batch_records), model.config.vae_latent))
        pred, mu, log_sigma, z, x_tilde, _, frame_lengths = \
            acoustic_training_forward(model, batch, eps)
        l1 = masked_l1_t(pred, batch[3], frame_lengths)
        dkl = ac.kl_divergence_t(mu, log_sigma).mean()
        gamma = ac.kl_anneal_weight(state.acoustic_step, kl_sched)
        loss = l1 + dkl * gamma
        if joint_head is not None:
            phon_mask = (np.arange(batch[0].shape[1])[None, :]
                         < batch[1][:, None])
            dur_pred = joint_head.joint_forward(x_tilde, z)
            loss = loss + dur.joint_aux_loss_t(dur_pred, batch[2], phon_mask)
        model.zero_grad()
        if joint_head is not None:
            joint_head.zero_grad()
        loss.backward()
        lr = cfg.base_lr * lr_at(state.acoustic_step, lr_sched)
        adam_step(state.acoustic_opt, lr, plan.frozen)
        state.acoustic_step += 1
        log.append(step=state.acoustic_step, stage=plan.stage,
                   l1=float(l1.data), dkl=float(dkl.data), gamma=gamma, lr=lr)

    model.eval()
    if plan.stage == 2 and not cfg.joint_duration:
        duration_model, _ = dur.train_duration_model(
            [r for r in state.records() if plan.admits(r)], state.speakers,
            cfg.duration_config(len(state.corpus.vocabulary)),
            cfg.duration_settings(),
            lr_multiplier=lambda s: lr_at(s, lr_sched))
        state.duration_model = duration_model
    _save_acoustic_stage(state, plan.stage)


def _run_gan_stage(state: PipelineState, plan: TrainingPlan, log: MetricsLog) -> None:
    cfg = state.config
    _ensure_models(state)
    model = state.acoustic_model
    disc = state.discriminator
    model.train(True)
    disc.train(True)
    if not model.vae_parameter_names() <= set(plan.frozen):
        raise ConfigError("stage-4 plan must freeze every VAE parameter")
    data_rng = np.random.default_rng(cfg.seed + 400)
    eps_rng = np.random.default_rng(cfg.seed + 401)
    crop_rng = np.random.default_rng(cfg.seed + 402)
    sampled = state.sampled_ids.setdefault(4, set())
    lr_sched = cfg.lr_schedule()

    for _ in range(plan.steps):
        batch_records = _sample_batch(plan, state.records(), data_rng)
        sampled.update(r.id for r in batch_records)
        batch = make_acoustic_batch(batch_records, state.speakers)
        eps = eps_rng.standard_normal((len(batch_records), model.config.vae_latent))
        pred, mu, log_sigma, z, x_tilde, frame_map, frame_lengths = \
            acoustic_training_forward(model, batch, eps)
        l1 = masked_l1_t(pred, batch[3], frame_lengths)

        emb_frames = gather_frames(x_tilde, frame_map)
        fake_chunks, real_chunks, emb_chunks, z_rows = [], [], [], []
        for b, t_i in enumerate(frame_lengths):
            start = adv.sample_crop_start(int(t_i), crop_rng, cfg.crop_frames)
            if start is None:
                continue  # too short for a crop; utterance still trains via L1
            fake_b, emb_b = adv.crop_tensors(pred[b], emb_frames[b], start,
                                             cfg.crop_frames)
            real_b = Tensor(batch[3][b, start:start + cfg.crop_frames])
            fake_chunks.append(fake_b.reshape(1, cfg.crop_frames, -1))
            real_chunks.append(real_b.reshape(1, cfg.crop_frames, -1))
            emb_chunks.append(emb_b.reshape(1, cfg.crop_frames, -1))
            z_rows.append(z[b].reshape(1, -1))

        lg_val = ld_val = None
        if fake_chunks:
            fake = t_concat(fake_chunks, axis=0)
            real = t_concat(real_chunks, axis=0)
            emb = t_concat(emb_chunks, axis=0)
            z_cond = t_concat(z_rows, axis=0)
            score_real = disc.score_batch(real, emb, z_cond)
            score_fake = disc.score_batch(fake, emb, z_cond)
            ld = adv.loss_discriminator_t(score_real, score_fake)
            lg = adv.loss_generator_t(score_real, score_fake)
            total = l1 + lg * cfg.alpha
            model.zero_grad()
            disc.zero_grad()
            ld.backward(free_graph=False)
            lr = cfg.base_lr * lr_at(state.acoustic_step, lr_sched)
            adam_step(state.discriminator_opt, lr)
            model.zero_grad()
            disc.zero_grad()
            total.backward()
            adam_step(state.acoustic_opt, lr, plan.frozen)
            lg_val, ld_val = float(lg.data), float(ld.data)
        else:
            model.zero_grad()
            l1.backward()
            lr = cfg.base_lr * lr_at(state.acoustic_step, lr_sched)
            adam_step(state.acoustic_opt, lr, plan.frozen)
        state.acoustic_step += 1
        log.append(step=state.acoustic_step, stage=4, l1=float(l1.data),
                   lg=lg_val, ld=ld_val, lr=lr)

    model.eval()
    disc.eval()
    _save_acoustic_stage(state, 4, include_disc=True)


def run_stage(plan: TrainingPlan, state: PipelineState) -> PipelineState:
    """Run one stage end to end, appending metrics and writing its checkpoint.

    Raises:
        CheckpointError: the previous stage's checkpoint is missing.
        ConfigError: plan/loss inconsistencies (e.g. unfrozen VAE in stage 4).
    """
    _require_previous_stage(state, plan.stage)
    log = MetricsLog(state.run_dir / "metrics.jsonl")
    if plan.stage == 2 and not state.completed and plan.loss == LOSS_L1_KL:
        # fresh process resuming from disk: pull in stage-1 synthetic data
        have = {r.id for r in state.records()}
        for rec in load_synthetic_records(_stage_dir(state, 1), state.corpus):
            if rec.id not in have:
                state.corpus.records.append(rec)
    if plan.stage in (3, 4) and state.acoustic_model is None:
        _load_acoustic_from(state, plan.stage - 1)
    if plan.loss == LOSS_VC:
        _run_stage1(state, plan, log)
    elif plan.loss == LOSS_L1_KL:
        _run_l1_kl_stage(state, plan, log)
    elif plan.loss == LOSS_GAN:
        _run_gan_stage(state, plan, log)
    else:
        raise ConfigError(f"unknown loss spec {plan.loss!r}")
    state.completed.add(plan.stage)
    return state


def run_pipeline_stage(state: PipelineState, stage: int) -> PipelineState:
    """Build the stage's plan from the config and run it."""
    _require_previous_stage(state, stage)
    if stage in (3, 4) and state.acoustic_model is None:
        _load_acoustic_from(state, stage - 1)
    vae = frozenset()
    if stage == 4:
        vae = frozenset(state.acoustic_model.vae_parameter_names())
    plan = plan_for_stage(stage, state.config, vae)
    return run_stage(plan, state)
