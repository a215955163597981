"""Experiment harness: stratified split, multi-condition training set, accuracy/confusion, noise sweep."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dsp import AudioClip, DspConfig, MelSpectrogram, mfe_spectrogram, mix_background
from .formats import read_wav
from .model import ModelSpec, Weights, predict_proba
from .synth import NOISE_KINDS, DatasetManifest, gen_background, label_code

DEFAULT_RATIOS = (0.0, 0.25, 0.5, 1.0)
DEFAULT_NOISE_SEED = 10_000

Classifier = Callable[[Sequence[MelSpectrogram]], Sequence[int]]


def split_dataset(manifest: DatasetManifest, test_fraction: float = 0.25, seed: int = 0):
    """Stratified train/test split: round(n * fraction) test items, each class contributing in proportion."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    by_label: dict[int, list[int]] = {}
    for i, item in enumerate(manifest.items):
        by_label.setdefault(label_code(item.label), []).append(i)
    if set(by_label) != {0, 1}:
        raise ValueError("manifest must contain both slam and normal items")
    # round(n * fraction) test items overall, shared out per class by largest remainder
    quotas = {label: len(by_label[label]) * test_fraction for label in (0, 1)}
    n_test = {label: int(q) for label, q in quotas.items()}
    spare = int(round(len(manifest.items) * test_fraction)) - sum(n_test.values())
    for label in sorted(quotas, key=lambda k: (-(quotas[k] - n_test[k]), k))[:spare]:
        n_test[label] += 1
    rng = np.random.default_rng(seed)
    test_idx: list[int] = []
    for label in (0, 1):
        members = np.array(by_label[label])
        test_idx += rng.permutation(members)[: n_test[label]].tolist()
    test_set = set(test_idx)
    train = [item for i, item in enumerate(manifest.items) if i not in test_set]
    test = [item for i, item in enumerate(manifest.items) if i in test_set]
    return train, test


def load_clips(manifest: DatasetManifest, items) -> list[tuple[AudioClip, int]]:
    return [(read_wav(manifest.resolve(item.clip_path)), label_code(item.label)) for item in items]


@dataclass(frozen=True)
class AugmentConfig:
    """Multi-condition training: each clip is kept clean and also mixed with noisy_copies
    backgrounds of random kind at ratios drawn uniformly from [0, max_ratio]."""

    noisy_copies: int = 1
    max_ratio: float = 1.0
    kinds: tuple = NOISE_KINDS

    def __post_init__(self):
        if self.noisy_copies < 0 or not self.max_ratio >= 0:
            raise ValueError("noisy_copies and max_ratio must be non-negative")
        for kind in self.kinds:
            if kind not in NOISE_KINDS:
                raise ValueError(f"unknown noise kind {kind!r}")


def build_training_set(
    clips: Sequence[tuple[AudioClip, int]],
    dsp_cfg: DspConfig = DspConfig(),
    augment: AugmentConfig | None = AugmentConfig(),
    seed: int = 0,
) -> list[tuple[MelSpectrogram, int]]:
    rng = np.random.default_rng([seed, 0xA06])
    out = []
    for clip, label in clips:
        out.append((mfe_spectrogram(clip, dsp_cfg), label))
        if augment is None:
            continue
        for _ in range(augment.noisy_copies):
            kind = augment.kinds[int(rng.integers(len(augment.kinds)))]
            noise = gen_background(kind, int(rng.integers(2**31)), clip.duration_s, clip.sample_rate_hz)
            ratio = float(rng.uniform(0.0, augment.max_ratio))
            out.append((mfe_spectrogram(mix_background(clip, noise, ratio), dsp_cfg), label))
    return out


@dataclass(frozen=True)
class Confusion:
    """Counts with slam as the positive class."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> Fraction:
        if self.n == 0:
            raise ValueError("accuracy of an empty confusion matrix is undefined")
        return Fraction(self.tp + self.tn, self.n)

    @classmethod
    def from_labels(cls, truth: Sequence[int], predicted: Sequence[int]) -> "Confusion":
        counts = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
        for y, p in zip(truth, predicted):
            key = ("t" if y == p else "f") + ("p" if p == 1 else "n")
            counts[key] += 1
        return cls(**counts)


def format_accuracy(acc: Fraction) -> str:
    return f"{float(acc):.4f}"


@dataclass(frozen=True)
class EvalRow:
    noise_ratio: float
    confusion: Confusion

    @property
    def n_test(self) -> int:
        return self.confusion.n

    @property
    def accuracy(self) -> float:
        return float(self.confusion.accuracy)

    def to_dict(self) -> dict:
        c = self.confusion
        return {
            "noise_ratio": self.noise_ratio,
            "accuracy": self.accuracy,
            "confusion": {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn},
            "n_test": self.n_test,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRow":
        row = cls(float(d["noise_ratio"]), Confusion(**d["confusion"]))
        if row.n_test != d["n_test"] or row.accuracy != d["accuracy"]:
            raise ValueError("inconsistent eval row: accuracy/n_test do not match the confusion counts")
        return row


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    split_seed: int | None = None
    noise_seed: int = DEFAULT_NOISE_SEED
    model_ref: str | None = None
    extra: dict = field(default_factory=dict)

    def row(self, ratio: float) -> EvalRow:
        for r in self.rows:
            if r.noise_ratio == ratio:
                return r
        raise KeyError(ratio)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": [r.to_dict() for r in self.rows],
                "split_seed": self.split_seed,
                "noise_seed": self.noise_seed,
                "model_ref": self.model_ref,
                "extra": self.extra,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        rows = tuple(EvalRow.from_dict(r) for r in obj["rows"])
        return cls(rows, obj.get("split_seed"), obj.get("noise_seed", DEFAULT_NOISE_SEED), obj.get("model_ref"), obj.get("extra", {}))

    def to_csv(self) -> str:
        lines = ["ratio,accuracy,tp,tn,fp,fn"]
        for r in self.rows:
            c = r.confusion
            lines.append(f"{r.noise_ratio},{format_accuracy(c.accuracy)},{c.tp},{c.tn},{c.fp},{c.fn}")
        return "\n".join(lines) + "\n"


def model_classifier(spec: ModelSpec, weights: Weights) -> Classifier:
    def classify(spectrograms):
        probs = predict_proba(spec, weights, list(spectrograms))
        return (probs[:, 1] > probs[:, 0]).astype(int).tolist()

    return classify


def mixed_test_spectrograms(
    test_set: Sequence[tuple[AudioClip, int]],
    noise_ratio: float,
    noise_kinds: Sequence[str] = NOISE_KINDS,
    dsp_cfg: DspConfig = DspConfig(),
    seed: int = DEFAULT_NOISE_SEED,
) -> list[MelSpectrogram]:
    """Featurize each test clip after mixing in background kind noise_kinds[i % k], seeded seed + i."""
    out = []
    for i, (clip, _) in enumerate(test_set):
        noise = gen_background(noise_kinds[i % len(noise_kinds)], seed + i, clip.duration_s, clip.sample_rate_hz)
        out.append(mfe_spectrogram(mix_background(clip, noise, noise_ratio), dsp_cfg))
    return out


def evaluate_classifier(
    classify: Classifier,
    test_set: Sequence[tuple[AudioClip, int]],
    noise_ratio: float,
    noise_kinds: Sequence[str] = NOISE_KINDS,
    dsp_cfg: DspConfig = DspConfig(),
    seed: int = DEFAULT_NOISE_SEED,
) -> EvalRow:
    if not test_set:
        raise ValueError("test set is empty")
    spectrograms = mixed_test_spectrograms(test_set, noise_ratio, noise_kinds, dsp_cfg, seed)
    predicted = list(classify(spectrograms))
    return EvalRow(float(noise_ratio), Confusion.from_labels([label for _, label in test_set], predicted))


def evaluate(
    spec: ModelSpec,
    weights: Weights,
    test_set: Sequence[tuple[AudioClip, int]],
    noise_ratio: float = 0.0,
    noise_kinds: Sequence[str] = NOISE_KINDS,
    dsp_cfg: DspConfig = DspConfig(),
    seed: int = DEFAULT_NOISE_SEED,
) -> EvalRow:
    return evaluate_classifier(model_classifier(spec, weights), test_set, noise_ratio, noise_kinds, dsp_cfg, seed)


def noise_sweep(
    spec: ModelSpec,
    weights: Weights,
    test_set: Sequence[tuple[AudioClip, int]],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    noise_kinds: Sequence[str] = NOISE_KINDS,
    dsp_cfg: DspConfig = DspConfig(),
    seed: int = DEFAULT_NOISE_SEED,
    split_seed: int | None = None,
    model_ref: str | None = None,
) -> EvalReport:
    rows = tuple(evaluate(spec, weights, test_set, r, noise_kinds, dsp_cfg, seed) for r in ratios)
    return EvalReport(rows, split_seed, seed, model_ref)
