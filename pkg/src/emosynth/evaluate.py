"""Intensity-sweep evaluation: Bayes oracle, toy classifier, reports.

The Bayes oracle scores generated samples with the exact posterior label
probability under the synthetic corpus. Because the baseline label's
conditional law equals the marginal, its posterior is constant (= its prior)
for every input, so its sweep curve is flat by construction while
non-baseline labels gain probability with intensity.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field

import numpy as np

from .corpus import SyntheticEmotionCorpus
from .errors import InputError
from .rng import make_rng
from .sampler import SamplerConfig, sample
from .schedule import NoiseSchedule, PriorField
from .score_model import ConditioningContext, EmotionEmbedding, Param, ScoreField
from .training import Adam

__all__ = [
    "bayes_probability",
    "bayes_posteriors",
    "ToyClassifier",
    "ClassifierConfig",
    "train_toy_classifier",
    "SweepConfig",
    "SweepRow",
    "SweepReport",
    "intensity_sweep",
    "AccuracyReport",
    "accuracy_report",
]


def bayes_posteriors(corpus: SyntheticEmotionCorpus, x: np.ndarray) -> dict[str, np.ndarray]:
    """Exact posterior P(label | x) per corpus label, for each row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = corpus.labels
    log_joint = np.stack(
        [corpus.log_density(x, lab) + np.log(corpus.label_prior(lab)) for lab in labels]
    )
    log_joint -= log_joint.max(axis=0, keepdims=True)
    post = np.exp(log_joint)
    post /= post.sum(axis=0, keepdims=True)
    return {lab: post[i] for i, lab in enumerate(labels)}


def bayes_probability(corpus: SyntheticEmotionCorpus, x: np.ndarray, label: str):
    """Posterior probability of ``label`` for each row of ``x``.

    Scalar for a single point, array for a batch.
    """
    if label not in corpus.labels:
        raise InputError(f"label {label!r} not in corpus (labels: {corpus.labels})")
    post = bayes_posteriors(corpus, x)[label]
    x = np.asarray(x)
    return float(post[0]) if x.ndim == 1 else post


# ---------------------------------------------------------------------------
# Toy classifier (multinomial logistic, trained with the engine's Adam)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierConfig:
    n_train: int = 4000
    n_test: int = 1000
    iterations: int = 400
    batch_size: int = 128
    learning_rate: float = 0.05
    seed: int = 0


class ToyClassifier:
    def __init__(self, dim: int, labels: list[str], rng: np.random.Generator):
        self.labels = list(labels)
        self.w = Param(0.01 * rng.standard_normal((dim, len(labels))))
        self.b = Param(np.zeros(len(labels)))

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.w.value + self.b.value

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, x: np.ndarray) -> list[str]:
        return [self.labels[i] for i in self.predict_proba(x).argmax(axis=1)]

    def accuracy(self, x: np.ndarray, labels: list[str]) -> float:
        pred = self.predict(x)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))

    def label_probability(self, x: np.ndarray, label: str) -> np.ndarray:
        if label not in self.labels:
            raise InputError(f"label {label!r} unknown to classifier ({self.labels})")
        return self.predict_proba(x)[:, self.labels.index(label)]


def train_toy_classifier(
    corpus: SyntheticEmotionCorpus, config: ClassifierConfig = ClassifierConfig()
) -> tuple[ToyClassifier, float]:
    """Fit a multinomial logistic model on corpus draws.

    Returns the classifier and its held-out accuracy. Requires at least two
    labels.
    """
    if len(corpus.labels) < 2:
        raise InputError("classifier training needs a corpus with >= 2 labels")
    rng = make_rng(config.seed, 0xC1F)
    x_train, y_train = corpus.draw_labeled(config.n_train, rng)
    x_test, y_test = corpus.draw_labeled(config.n_test, rng)
    clf = ToyClassifier(corpus.dimension, corpus.labels, rng)
    y_idx = np.array([clf.labels.index(lab) for lab in y_train])
    opt = Adam({"clf.w": clf.w, "clf.b": clf.b})
    n = len(x_train)
    for it in range(config.iterations):
        take = rng.integers(0, n, size=config.batch_size)
        xb, yb = x_train[take], y_idx[take]
        proba = clf.predict_proba(xb)
        grad_z = proba.copy()
        grad_z[np.arange(len(yb)), yb] -= 1.0
        grad_z /= len(yb)
        opt.zero_grad()
        clf.w.grad += xb.T @ grad_z
        clf.b.grad += grad_z.sum(axis=0)
        opt.step(config.learning_rate)
    return clf, clf.accuracy(x_test, y_test)


# ---------------------------------------------------------------------------
# Intensity sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    n_samples: int = 2000
    steps: int = 200
    solver: str = "ode"
    temperature: float = 1.0
    seed: int = 0
    scorer: str = "bayes"  # "bayes" | "classifier"
    speaker: int = 0


@dataclass(frozen=True)
class SweepRow:
    label: str
    w: float
    mean_prob: float
    stderr: float
    n: int
    scorer: str


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (r.label, r.w))

    def curve(self, label: str, scorer: str | None = None) -> list:
        return [
            r
            for r in self.sorted_rows()
            if r.label == label and (scorer is None or r.scorer == scorer)
        ]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "w", "meanProb", "stderr", "n", "scorer"])
            for r in self.sorted_rows():
                writer.writerow(
                    [r.label, f"{r.w:g}", f"{r.mean_prob:.6f}", f"{r.stderr:.6f}", r.n, r.scorer]
                )


def intensity_sweep(
    score_field: ScoreField,
    corpus: SyntheticEmotionCorpus,
    labels: list[str],
    w_list: list[float],
    config: SweepConfig = SweepConfig(),
    emo_table: EmotionEmbedding | None = None,
    classifier: ToyClassifier | None = None,
    schedule: NoiseSchedule | None = None,
) -> SweepReport:
    """Sample per (label, intensity) cell and score the target label.

    Samples are drawn in one batched reverse pass per cell (rows are
    independent), scored with the Bayes oracle or a trained toy classifier,
    and aggregated to mean and standard error.
    """
    if not w_list:
        raise InputError("intensity list must be non-empty")
    if any(w < 0 for w in w_list):
        raise InputError("intensities must be non-negative")
    if config.scorer not in ("bayes", "classifier"):
        raise InputError(f"unknown scorer {config.scorer!r}")
    if config.scorer == "classifier" and classifier is None:
        raise InputError("classifier scorer requested but no classifier given")
    if schedule is None:
        schedule = NoiseSchedule()
    if emo_table is None:
        emo_table = EmotionEmbedding(make_rng(config.seed, 0xE0))
    report = SweepReport()
    prior = PriorField.standard(config.n_samples, corpus.dimension)
    for label in labels:
        if label not in corpus.labels:
            raise InputError(f"label {label!r} not in corpus (labels: {corpus.labels})")
        ctx = ConditioningContext(corpus.speakers[config.speaker], label, emo_table)
        for cell_index, w in enumerate(w_list):
            cfg = SamplerConfig(
                solver=config.solver,
                steps=config.steps,
                intensity=float(w),
                temperature=config.temperature,
                seed=make_rng(config.seed, zlib.crc32(label.encode()), cell_index).integers(2**63),
            )
            x, _ = sample(score_field, prior, ctx, cfg, schedule)
            if config.scorer == "bayes":
                probs = bayes_probability(corpus, x, label)
            else:
                probs = classifier.label_probability(x, label)
            report.rows.append(
                SweepRow(
                    label=label,
                    w=float(w),
                    mean_prob=float(np.mean(probs)),
                    stderr=float(np.std(probs, ddof=1) / np.sqrt(len(probs))),
                    n=len(probs),
                    scorer=config.scorer,
                )
            )
    return report


# ---------------------------------------------------------------------------
# Accuracy / confusion reporting
# ---------------------------------------------------------------------------


@dataclass
class AccuracyReport:
    labels: list
    accuracy: float
    confusion: np.ndarray  # rows: intended, cols: predicted

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["intended\\predicted"] + self.labels + ["accuracy"])
            for i, lab in enumerate(self.labels):
                writer.writerow(
                    [lab] + [int(c) for c in self.confusion[i]] + [f"{self.accuracy:.6f}"]
                )


def accuracy_report(
    classifier: ToyClassifier, x: np.ndarray, intended_labels: list[str]
) -> AccuracyReport:
    """Accuracy and confusion counts of a classifier on generated samples."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != len(intended_labels):
        raise InputError("sample count does not match intended label count")
    shared = sorted(set(intended_labels) & set(classifier.labels))
    if not shared:
        raise InputError(
            f"no overlap between intended labels {sorted(set(intended_labels))} "
            f"and classifier labels {classifier.labels}"
        )
    labels = classifier.labels
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    predictions = classifier.predict(x)
    hits = 0
    for intended, predicted in zip(intended_labels, predictions):
        if intended not in classifier.labels:
            raise InputError(f"intended label {intended!r} unknown to classifier")
        confusion[labels.index(intended), labels.index(predicted)] += 1
        hits += intended == predicted
    return AccuracyReport(labels, hits / len(intended_labels), confusion)
