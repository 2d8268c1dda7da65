"""Inference and objective evaluation.

Synthesis follows the inference topology: predict durations, quantize,
upsample with the pre-computed latent centroid, decode.  Mel inversion uses
a pseudo-inverse filterbank plus Griffin-Lim phase estimation (the neural
vocoder is out of scope; the interface is pluggable).  Evaluation covers
mel distances, duration errors, gap-closure arithmetic, and deterministic
report files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.optimize import nnls

from . import acoustic as ac
from .corpus import (DurationSequence, MelConfig, MelSpectrogram,
                     PhonemeSequence, SpeakerEmbedding, Vocabulary,
                     hann_window, mel_filterbank, read_mel_cache,
                     stft_magnitude)
from .duration import DurationModel, predict_durations, quantize_durations
from .errors import CheckpointError, ValidationError
from .pipeline.checkpoint import load_checkpoint
from .pipeline.config import PipelineConfig

REPORT_SCHEMA_VERSION = 1


@dataclass
class SynthesisRequest:
    phonemes: PhonemeSequence
    speaker_id: str
    durations: DurationSequence | None = None   # override; skips the duration model
    z: np.ndarray | None = None                 # override; skips the centroid


@dataclass
class SynthBundle:
    """Everything inference needs; discriminator weights are never loaded."""

    acoustic: ac.AcousticModel
    duration: DurationModel
    centroid: np.ndarray
    vocabulary: Vocabulary
    speakers: dict[str, SpeakerEmbedding]
    mel_config: MelConfig
    config: PipelineConfig
    loaded_files: list = field(default_factory=list)


def load_bundle(stage_dir, force: bool = False) -> SynthBundle:
    """Load an inference bundle from a stage checkpoint directory.

    Raises:
        CheckpointError: missing pieces or (without ``force``) a checkpoint
            whose config hash disagrees with the stored config.
    """
    stage_dir = Path(stage_dir)
    loaded: list = []

    def read_json(name):
        path = stage_dir / name
        if not path.exists():
            raise CheckpointError(f"bundle is missing {path}")
        loaded.append(str(path))
        return json.loads(path.read_text())

    cfg_dict = read_json("config.json")
    config = PipelineConfig(**cfg_dict)
    ckpt = load_checkpoint(stage_dir, expected_hash=config.hash(), force=force)
    loaded += [str(stage_dir / "meta.json"), str(stage_dir / "params.npz")]
    vocabulary = Vocabulary(read_json("vocabulary.json"))
    mel_config = MelConfig(**read_json("mel_config.json"))
    speakers = {sid: SpeakerEmbedding(sid, np.asarray(vec))
                for sid, vec in read_json("speakers.json").items()}
    centroid_path = stage_dir / "centroid.npy"
    if not centroid_path.exists():
        raise CheckpointError(f"bundle is missing {centroid_path}")
    centroid = np.load(centroid_path)
    loaded.append(str(centroid_path))

    acoustic_model = ac.AcousticModel(config.acoustic_config(len(vocabulary)))
    acoustic_model.load_state({k[len("acoustic."):]: v for k, v in ckpt.params.items()
                               if k.startswith("acoustic.")})
    acoustic_model.eval()
    dur_params = {k[len("duration."):]: v for k, v in ckpt.params.items()
                  if k.startswith("duration.")}
    if not dur_params:
        raise CheckpointError(f"{stage_dir}: checkpoint has no duration model "
                              "(run stage 2 first)")
    duration_model = DurationModel(config.duration_config(len(vocabulary)))
    duration_model.load_state(dur_params)
    duration_model.eval()
    return SynthBundle(acoustic=acoustic_model, duration=duration_model,
                       centroid=centroid, vocabulary=vocabulary,
                       speakers=speakers, mel_config=mel_config, config=config,
                       loaded_files=loaded)


def synthesize(request: SynthesisRequest, bundle: SynthBundle) -> MelSpectrogram:
    """Deterministic inference: quantized predicted durations, centroid latent."""
    if request.speaker_id not in bundle.speakers:
        raise ValidationError(f"unknown speaker '{request.speaker_id}'")
    speaker = bundle.speakers[request.speaker_id]
    if request.durations is not None:
        durations = request.durations
        if len(durations) != len(request.phonemes):
            raise ValidationError("override durations must match the phoneme count")
    else:
        raw = predict_durations(request.phonemes, speaker, bundle.duration)
        durations = quantize_durations(raw)
    z = bundle.centroid if request.z is None else np.asarray(request.z)
    if z.shape != bundle.centroid.shape:
        raise ValidationError(f"z override has shape {z.shape}, "
                              f"expected {bundle.centroid.shape}")
    x_tilde = ac.encode_phonemes(bundle.acoustic, request.phonemes)
    cond = ac.upsample_and_condition(x_tilde, z, speaker, synthetic=False,
                                     durations=durations,
                                     pos_width=bundle.acoustic.config.pos_width)
    pred = ac.decode(bundle.acoustic, cond)
    cfg = bundle.mel_config
    data = np.maximum(pred, cfg.log_floor)
    return MelSpectrogram(data, frame_hop_s=cfg.frame_hop_s,
                          sample_rate=cfg.sample_rate, log_floor=cfg.log_floor)


# ---------------------------------------------------------------------------
# mel inversion (Griffin-Lim)

def _istft(frames_complex: np.ndarray, config: MelConfig) -> np.ndarray:
    """Overlap-add inverse of the no-padding STFT used by extract_mel."""
    t = frames_complex.shape[0]
    w, h = config.win_length, config.hop_length
    win = hann_window(w)
    n = w + (t - 1) * h
    out = np.zeros(n)
    norm = np.zeros(n)
    frames = np.fft.irfft(frames_complex, n=w, axis=1)
    for i in range(t):
        lo = i * h
        out[lo:lo + w] += frames[i] * win
        norm[lo:lo + w] += win ** 2
    return out / np.maximum(norm, 1e-8)


def mel_invert(mel: MelSpectrogram, config: MelConfig, iterations: int = 60,
               magnitude_power: float = 1.0, momentum: float = 0.9,
               edge_pad_frames: int = 4) -> np.ndarray:
    """Invert a log-mel to a waveform in [-1, 1] of exactly (T-1)*hop + win samples.

    The filterbank is inverted per frame by non-negative least squares (the
    projection back to mel is then exact); phase comes from momentum-
    accelerated Griffin-Lim run on an edge-padded spectrogram so boundary
    frames reconstruct as well as interior ones.  ``magnitude_power`` > 1
    sharpens peaks relative to the spectral maximum (a perceptual option; it
    trades off round-trip fidelity).

    Raises:
        ValidationError: fewer than one iteration, or a mel that does not
            match the feature configuration.
    """
    if iterations < 1:
        raise ValidationError("Griffin-Lim needs at least one iteration")
    if mel.n_bins != config.n_bins or mel.sample_rate != config.sample_rate:
        raise ValidationError(
            f"mel ({mel.n_bins} bins @ {mel.sample_rate} Hz) does not match the "
            f"config ({config.n_bins} bins @ {config.sample_rate} Hz)")
    fb = mel_filterbank(config)                      # (B, F)
    mel_power = np.exp(mel.data)                     # undo the log
    spec_power = np.stack([nnls(fb, mel_power[i])[0]
                           for i in range(mel.n_frames)])
    magnitude = spec_power ** 0.5
    peak = magnitude.max()
    if peak > 0 and magnitude_power != 1.0:
        # sharpen relative to the peak so absolute levels survive the power
        magnitude = peak * (magnitude / peak) ** magnitude_power
    pad = max(int(edge_pad_frames), 0)
    magnitude = np.pad(magnitude, ((pad, pad), (0, 0)), mode="edge")
    w, h = config.win_length, config.hop_length
    win = hann_window(w)
    signal = _istft(magnitude.astype(complex), config)
    previous = None
    for _ in range(iterations):
        frames = np.lib.stride_tricks.sliding_window_view(signal, w)[::h]
        spectrum = np.fft.rfft(frames[:magnitude.shape[0]] * win, axis=1)
        stepped = spectrum if previous is None else \
            spectrum + momentum * (spectrum - previous)
        previous = spectrum
        phase = stepped / np.maximum(np.abs(stepped), 1e-12)
        signal = _istft(magnitude * phase, config)
    signal = signal[pad * h: pad * h + w + (mel.n_frames - 1) * h]
    peak = np.max(np.abs(signal))
    if peak > 1.0:
        signal = signal / peak
    return signal


def write_wav(path, waveform: np.ndarray, sample_rate: int) -> None:
    """16-bit PCM output."""
    pcm = np.clip(waveform, -1.0, 1.0)
    wavfile.write(path, sample_rate, (pcm * 32767.0).astype(np.int16))


# ---------------------------------------------------------------------------
# evaluation

def eval_mel_distance(pred: MelSpectrogram | np.ndarray,
                      gt: MelSpectrogram | np.ndarray) -> dict:
    """Mean |err| over the overlapping frames plus the frame-count delta."""
    a = pred.data if isinstance(pred, MelSpectrogram) else np.asarray(pred)
    b = gt.data if isinstance(gt, MelSpectrogram) else np.asarray(gt)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"bin mismatch: {a.shape[1]} vs {b.shape[1]}")
    t = min(a.shape[0], b.shape[0])
    return {"l1": float(np.mean(np.abs(a[:t] - b[:t]))),
            "frame_count_delta": int(a.shape[0] - b.shape[0])}


def duration_rmse(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError("duration RMSE needs equal lengths")
    return float(np.sqrt(np.mean((pred - gt) ** 2)))


def gap_closure(recordings: float, baseline: float, candidate: float) -> float:
    """Percent of the recordings-baseline gap closed by the candidate.

    Raises:
        ValidationError: recordings <= baseline (gap undefined).
    """
    if recordings <= baseline:
        raise ValidationError("gap undefined: recordings must score above baseline")
    return 100.0 * (candidate - baseline) / (recordings - baseline)


def emit_report(metrics: dict, path) -> dict:
    """Write a deterministic (sorted keys, fixed schema) evaluation report."""
    report = {"schema_version": REPORT_SCHEMA_VERSION}
    report.update(metrics)
    text = json.dumps(report, sort_keys=True, indent=1)
    json.loads(text)  # guarantee the payload is valid JSON before writing
    Path(path).write_text(text, encoding="utf-8")
    return report


def evaluate_directories(pred_dir, gt_dir) -> dict:
    """Pair ``*.mel`` caches by stem and aggregate mel distances."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_files = {p.stem: p for p in sorted(pred_dir.glob("*.mel"))}
    gt_files = {p.stem: p for p in sorted(gt_dir.glob("*.mel"))}
    common = sorted(set(pred_files) & set(gt_files))
    if not common:
        raise ValidationError(f"no matching .mel stems between {pred_dir} and {gt_dir}")
    per_utterance = {}
    for stem in common:
        per_utterance[stem] = eval_mel_distance(read_mel_cache(pred_files[stem]),
                                                read_mel_cache(gt_files[stem]))
    l1s = [m["l1"] for m in per_utterance.values()]
    deltas = [abs(m["frame_count_delta"]) for m in per_utterance.values()]
    return {
        "per_utterance": per_utterance,
        "aggregate": {"mel_l1_mean": float(np.mean(l1s)),
                      "mel_l1_max": float(np.max(l1s)),
                      "frame_delta_mean": float(np.mean(deltas)),
                      "count": len(common)},
    }
