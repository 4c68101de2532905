"""Synthetic labeled corpora for training and evaluation.

Two flavors:

* ``SyntheticEmotionCorpus`` — a labeled Gaussian mixture in d dimensions.
  One designated baseline label ("Neutral analog") has its conditional law
  defined as the full mixture, so its Bayes posterior is constant and its
  conditional score equals the unconditional score exactly.
* ``SyntheticUtteranceCorpus`` — toy TTS data: utterances are built by
  expanding known per-token mel patterns with known durations, shifting by a
  per-emotion offset, and adding Gaussian noise. Ground-truth durations come
  for free, so no alignment search is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .rng import make_rng
from .score_model import EMOTIONS, SPEAKER_DIM, AnalyticScoreField

__all__ = [
    "LabeledComponent",
    "SyntheticEmotionCorpus",
    "SpeakerBank",
    "Utterance",
    "SyntheticUtteranceCorpus",
    "standard_sweep_corpus",
    "tight_training_corpus",
    "separated_corpus",
    "demo_utterance_corpus",
]


@dataclass(frozen=True)
class LabeledComponent:
    label: str
    weight: float
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "var", np.asarray(self.var, dtype=float))


class SpeakerBank:
    """Fixed synthetic identity embeddings, one 512-dim vector per speaker."""

    def __init__(self, n_speakers: int, seed: int = 0):
        if n_speakers < 1:
            raise InputError("need at least one speaker")
        rng = make_rng(seed, 0x5BA)
        self.vectors = rng.standard_normal((n_speakers, SPEAKER_DIM))

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, idx: int) -> np.ndarray:
        return self.vectors[idx]


class SyntheticEmotionCorpus:
    """Labeled Gaussian mixture with an exactly-marginal baseline label.

    ``components`` carry the non-baseline labels. Label priors are the
    component weights plus ``baseline_weight`` for the baseline label, all
    renormalized. The data marginal is the renormalized non-baseline mixture;
    drawing the baseline label draws from that marginal.
    """

    def __init__(
        self,
        components: list[LabeledComponent],
        baseline_label: str = "Neutral",
        baseline_weight: float = 0.2,
        n_speakers: int = 2,
        seed: int = 0,
    ):
        if not components:
            raise InputError("corpus needs at least one labeled component")
        if baseline_weight < 0:
            raise InputError("baseline weight must be non-negative")
        dims = {c.mean.shape for c in components}
        if len(dims) != 1:
            raise InputError(f"component dimensions disagree: {dims}")
        for c in components:
            if c.label not in EMOTIONS:
                raise InputError(f"label {c.label!r} not in the emotion inventory {EMOTIONS}")
            if c.label == baseline_label:
                raise InputError(f"baseline label {baseline_label!r} cannot own components")
            if c.weight <= 0:
                raise InputError("component weights must be positive")
            if c.var.shape != c.mean.shape or np.any(c.var <= 0):
                raise InputError(f"bad variance for component {c.label!r}")
        if baseline_label not in EMOTIONS:
            raise InputError(f"baseline label {baseline_label!r} not in the emotion inventory")
        self.components = list(components)
        self.baseline_label = baseline_label
        self.baseline_weight = float(baseline_weight)
        total = sum(c.weight for c in components) + self.baseline_weight
        self._label_priors = {c.label: 0.0 for c in components}
        for c in components:
            self._label_priors[c.label] += c.weight / total
        if self.baseline_weight > 0:
            self._label_priors[baseline_label] = self.baseline_weight / total
        # marginal = renormalized non-baseline mixture
        nb_total = sum(c.weight for c in components)
        self._marginal_weights = np.array([c.weight / nb_total for c in components])
        self.speakers = SpeakerBank(n_speakers, seed=seed)

    @property
    def dimension(self) -> int:
        return self.components[0].mean.shape[0]

    @property
    def labels(self) -> list[str]:
        return sorted(self._label_priors)

    def label_prior(self, label: str) -> float:
        try:
            return self._label_priors[label]
        except KeyError:
            raise InputError(
                f"label {label!r} not in corpus (labels: {self.labels})"
            ) from None

    def component_mean(self, label: str) -> np.ndarray:
        """Mean of a non-baseline label's conditional law."""
        parts = [c for c in self.components if c.label == label]
        if not parts:
            raise InputError(f"label {label!r} owns no component")
        w = np.array([c.weight for c in parts])
        w = w / w.sum()
        return np.sum([wi * c.mean for wi, c in zip(w, parts)], axis=0)

    def _component_index(self, label: str | None, rng: np.random.Generator, n: int):
        if label is None or label == self.baseline_label:
            return rng.choice(len(self.components), size=n, p=self._marginal_weights)
        idx = [i for i, c in enumerate(self.components) if c.label == label]
        if not idx:
            raise InputError(f"label {label!r} owns no component")
        w = np.array([self.components[i].weight for i in idx])
        return rng.choice(idx, size=n, p=w / w.sum())

    def draw(
        self, n: int, rng: np.random.Generator, label: str | None = None
    ) -> np.ndarray:
        """Draw ``n`` points from a label's conditional law (None = marginal)."""
        comp = self._component_index(label, rng, n)
        means = np.stack([self.components[i].mean for i in comp])
        stds = np.sqrt(np.stack([self.components[i].var for i in comp]))
        return means + stds * rng.standard_normal((n, self.dimension))

    def draw_labeled(self, n: int, rng: np.random.Generator):
        """Draw ``(points, labels)`` from the joint law, baseline included."""
        labels = self.labels
        priors = np.array([self._label_priors[lab] for lab in labels])
        picks = rng.choice(len(labels), size=n, p=priors)
        points = np.empty((n, self.dimension))
        out_labels = []
        for i, pick in enumerate(picks):
            lab = labels[pick]
            points[i] = self.draw(1, rng, lab)[0]
            out_labels.append(lab)
        return points, out_labels

    def to_score_field(self) -> AnalyticScoreField:
        """Exact score oracle of the data marginal, with label tags."""
        return AnalyticScoreField(
            weights=self._marginal_weights,
            means=np.stack([c.mean for c in self.components]),
            var_diags=np.stack([c.var for c in self.components]),
            labels=tuple(c.label for c in self.components),
            baseline_label=self.baseline_label,
        )

    def log_density(self, x: np.ndarray, label: str | None = None) -> np.ndarray:
        """Per-row log density of a conditional law (None = marginal)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if label is None or label == self.baseline_label:
            idx = list(range(len(self.components)))
            w = self._marginal_weights
        else:
            idx = [i for i, c in enumerate(self.components) if c.label == label]
            if not idx:
                raise InputError(f"label {label!r} owns no component")
            w = np.array([self.components[i].weight for i in idx])
            w = w / w.sum()
        terms = np.empty((x.shape[0], len(idx)))
        for j, i in enumerate(idx):
            c = self.components[i]
            diff = x - c.mean
            terms[:, j] = (
                np.log(w[j])
                - 0.5 * np.sum(np.log(2.0 * np.pi * c.var))
                - 0.5 * np.sum(diff * diff / c.var, axis=1)
            )
        peak = terms.max(axis=1)
        return peak + np.log(np.exp(terms - peak[:, None]).sum(axis=1))


# ---------------------------------------------------------------------------
# Toy TTS corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Utterance:
    tokens: np.ndarray
    durations: np.ndarray
    mel: np.ndarray
    label: str | None
    speaker: int


class SyntheticUtteranceCorpus:
    """Utterances = expand(token patterns, durations) + emotion offset + noise."""

    def __init__(
        self,
        vocab: str = "abcdefgh",
        labels: tuple = ("Anger", "Happy", "Neutral"),
        mel_channels: int = 128,
        n_speakers: int = 2,
        noise_std: float = 0.1,
        offset_scale: float = 1.0,
        min_tokens: int = 2,
        max_tokens: int = 6,
        seed: int = 0,
    ):
        if len(set(vocab)) != len(vocab):
            raise InputError("vocabulary characters must be unique")
        if not 1 <= len(vocab) <= 64:
            raise InputError("vocabulary must have 1..64 symbols")
        for lab in labels:
            if lab not in EMOTIONS:
                raise InputError(f"label {lab!r} not in the emotion inventory")
        self.vocab = vocab
        self.labels = tuple(labels)
        self.mel_channels = mel_channels
        self.noise_std = float(noise_std)
        self.min_tokens = min_tokens
        self.max_tokens = max_tokens
        rng = make_rng(seed, 0x77)
        self.token_patterns = rng.standard_normal((len(vocab), mel_channels))
        self.token_durations = rng.integers(1, 5, size=len(vocab))
        # per-emotion additive offsets; "Neutral" stays at zero
        self.emotion_offsets = {
            lab: (
                np.zeros(mel_channels)
                if lab == "Neutral"
                else offset_scale * rng.standard_normal(mel_channels)
            )
            for lab in labels
        }
        self.speakers = SpeakerBank(n_speakers, seed=seed)

    def tokens_from_text(self, text: str) -> np.ndarray:
        try:
            return np.array([self.vocab.index(ch) for ch in text], dtype=int)
        except ValueError:
            bad = sorted(set(ch for ch in text if ch not in self.vocab))
            raise InputError(
                f"character(s) {bad} not in vocabulary {self.vocab!r}"
            ) from None

    def true_frame_mu(self, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        durations = self.token_durations[tokens]
        frame_mu = np.repeat(self.token_patterns[tokens], durations, axis=0)
        return frame_mu, durations

    def draw_utterance(self, rng: np.random.Generator) -> Utterance:
        n_tok = int(rng.integers(self.min_tokens, self.max_tokens + 1))
        tokens = rng.integers(0, len(self.vocab), size=n_tok)
        label = self.labels[int(rng.integers(0, len(self.labels)))]
        speaker = int(rng.integers(0, len(self.speakers)))
        frame_mu, durations = self.true_frame_mu(tokens)
        mel = (
            frame_mu
            + self.emotion_offsets[label]
            + self.noise_std * rng.standard_normal(frame_mu.shape)
        )
        return Utterance(tokens, durations, mel, label, speaker)


# ---------------------------------------------------------------------------
# Reference corpora used by tests, the acceptance suite and CLI defaults
# ---------------------------------------------------------------------------


def standard_sweep_corpus(seed: int = 0) -> SyntheticEmotionCorpus:
    """Two overlapping labels at +-e1 plus a Neutral baseline.

    Component std 1 with means 2 apart leaves real label confusion at
    intensity 1, so the intensity sweep has headroom to show its effect.
    """
    return SyntheticEmotionCorpus(
        components=[
            LabeledComponent("Anger", 0.4, [1.0, 0.0], [1.0, 1.0]),
            LabeledComponent("Happy", 0.4, [-1.0, 0.0], [1.0, 1.0]),
        ],
        baseline_label="Neutral",
        baseline_weight=0.2,
        seed=seed,
    )


def tight_training_corpus(seed: int = 0) -> SyntheticEmotionCorpus:
    """The 2-component 2D training task: well-separated, variance 0.25."""
    return SyntheticEmotionCorpus(
        components=[
            LabeledComponent("Anger", 0.5, [1.0, 0.0], [0.25, 0.25]),
            LabeledComponent("Happy", 0.5, [-1.0, 0.0], [0.25, 0.25]),
        ],
        baseline_label="Neutral",
        baseline_weight=0.0,
        seed=seed,
    )


def separated_corpus(separation: float = 6.0, seed: int = 0) -> SyntheticEmotionCorpus:
    """Labels ``separation`` component-stds apart (for near-oracle classifiers)."""
    half = separation / 2.0
    return SyntheticEmotionCorpus(
        components=[
            LabeledComponent("Anger", 0.5, [half, 0.0], [1.0, 1.0]),
            LabeledComponent("Sad", 0.5, [-half, 0.0], [1.0, 1.0]),
        ],
        baseline_label="Neutral",
        baseline_weight=0.0,
        seed=seed,
    )


def demo_utterance_corpus(seed: int = 0) -> SyntheticUtteranceCorpus:
    return SyntheticUtteranceCorpus(seed=seed)
