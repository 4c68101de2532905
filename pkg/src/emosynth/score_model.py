"""Score estimators: the exact Gaussian-mixture oracle and a trainable net.

Both expose ``score(x, mu, t, ctx)`` returning the (estimated) gradient of
the log-density of the diffused state at time ``t``, conditioned on the
emotion label carried by ``ctx`` (``None`` = unconditional). States are
``frames x channels`` matrices; rows are treated as independent draws from
the same law, which also makes a batch of samples just another state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError
from .schedule import NoiseSchedule, PriorField

__all__ = [
    "EMOTIONS",
    "NULL_ROW",
    "SPEAKER_DIM",
    "EMOTION_DIM",
    "TIME_DIM",
    "Param",
    "EmotionEmbedding",
    "ConditioningContext",
    "ScoreField",
    "AnalyticScoreField",
    "BoundAnalyticField",
    "ToyScoreNet",
    "analytic_score",
    "time_embedding",
]

EMOTIONS = ("Anger", "Disgust", "Fear", "Happy", "Neutral", "Sad", "Surprise")
NULL_ROW = len(EMOTIONS)  # dedicated row for the null token
SPEAKER_DIM = 512
EMOTION_DIM = 128
TIME_DIM = 64

_EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}


def emotion_index(label: Optional[str]) -> int:
    """Embedding-table row for a label; ``None`` selects the null row."""
    if label is None:
        return NULL_ROW
    try:
        return _EMOTION_INDEX[label]
    except KeyError:
        raise InputError(
            f"unknown emotion label {label!r}; valid labels: {', '.join(EMOTIONS)}"
        ) from None


class Param:
    """A trainable array paired with its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)


def time_embedding(t: float, dim: int = TIME_DIM) -> np.ndarray:
    """Sinusoidal embedding of a diffusion time.

    ``dim/2`` frequencies geometric from 1 to 1e4; output interleaves
    ``sin(t w_k), cos(t w_k)`` so t=0 maps to (0, 1, 0, 1, ...).
    """
    t = float(t)
    if not np.isfinite(t) or t < 0.0:
        raise InputError(f"time {t} outside embedding domain")
    if dim % 2 != 0:
        raise InputError("embedding dimension must be even")
    half = dim // 2
    omega = 10.0 ** (4.0 * np.arange(half) / (half - 1))
    emb = np.empty(dim)
    emb[0::2] = np.sin(t * omega)
    emb[1::2] = np.cos(t * omega)
    return emb


class EmotionEmbedding:
    """Learned 8 x 128 table: one row per emotion plus a null row.

    The null token is a learned embedding (row 7), not a zero shortcut.
    """

    def __init__(self, rng: np.random.Generator, dim: int = EMOTION_DIM):
        self.dim = dim
        self.table = Param(rng.standard_normal((len(EMOTIONS) + 1, dim)) * 0.02)

    def lookup(self, label: Optional[str]) -> np.ndarray:
        return self.table.value[emotion_index(label)]

    def accumulate_grad(self, label: Optional[str], grad: np.ndarray):
        self.table.grad[emotion_index(label)] += grad

    def parameters(self) -> dict[str, Param]:
        return {"emo_table": self.table}


@dataclass(frozen=True)
class ConditioningContext:
    """Speaker embedding plus emotion label (or null) and their table."""

    spk_emb: np.ndarray
    emo_label: Optional[str]
    emo_table: EmotionEmbedding

    def __post_init__(self):
        spk = np.asarray(self.spk_emb, dtype=float)
        if spk.shape != (SPEAKER_DIM,):
            raise InputError(f"speaker embedding must have shape ({SPEAKER_DIM},), got {spk.shape}")
        if self.emo_label is not None:
            emotion_index(self.emo_label)
        object.__setattr__(self, "spk_emb", spk)

    def with_label(self, label: Optional[str]) -> "ConditioningContext":
        """Same speaker and table, different emotion label."""
        return ConditioningContext(self.spk_emb, label, self.emo_table)

    def emo_emb(self) -> np.ndarray:
        return self.emo_table.lookup(self.emo_label)


class ScoreField:
    """Behavioral contract: ``score`` output has the input state's shape."""

    def score(
        self, x: np.ndarray, mu: np.ndarray, t: float, ctx: ConditioningContext
    ) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Analytic oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticScoreField:
    """Gaussian-mixture data law with exact diffused scores.

    ``weights, means, var_diags`` describe the mixture; ``labels`` optionally
    tags each component with an emotion. ``baseline_label`` names a label
    whose conditional law is defined as the full mixture, so conditioning on
    it is exactly equivalent to the unconditional law.
    """

    weights: np.ndarray
    means: np.ndarray
    var_diags: np.ndarray
    labels: Optional[tuple] = None
    baseline_label: Optional[str] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.var_diags, dtype=float)
        if m.ndim != 2 or v.shape != m.shape or w.shape != (m.shape[0],):
            raise InputError(
                f"inconsistent mixture shapes: weights {w.shape}, means {m.shape}, vars {v.shape}"
            )
        if abs(w.sum() - 1.0) > 1e-12:
            raise InputError(f"mixture weights sum to {w.sum()!r}, expected 1")
        if np.any(w <= 0):
            raise InputError("mixture weights must be strictly positive")
        if np.any(v <= 0):
            raise InputError("component variances must be strictly positive")
        if self.labels is not None and len(self.labels) != m.shape[0]:
            raise InputError("labels length does not match component count")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "var_diags", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_mask(self, label: Optional[str]) -> np.ndarray:
        """Boolean mask of components selected by a label (None = all)."""
        if label is None or label == self.baseline_label:
            return np.ones(len(self.weights), dtype=bool)
        if self.labels is None:
            raise InputError(f"mixture has no labels; cannot condition on {label!r}")
        mask = np.array([lab == label for lab in self.labels])
        if not mask.any():
            raise InputError(
                f"label {label!r} selects no mixture component "
                f"(available: {sorted(set(filter(None, self.labels)))})"
            )
        return mask

    def diffused_components(
        self, schedule: NoiseSchedule, prior: PriorField, t: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-component mean/variance of the mixture pushed to time ``t``.

        Written as ``sigma + (v0 - sigma) * exp(-B/sigma)`` so a component
        equal to the terminal prior stays bitwise stationary.
        """
        big_b = schedule.cum_beta(t)
        sigma = prior.sigma_diag
        mu0 = prior.mu[0]
        decay = np.exp(-big_b / (2.0 * sigma))
        m_t = mu0 + (self.means - mu0) * decay
        v_t = sigma + (self.var_diags - sigma) * np.exp(-big_b / sigma)
        return m_t, v_t

    def bound(self, schedule: NoiseSchedule, prior: PriorField) -> "BoundAnalyticField":
        return BoundAnalyticField(self, schedule, prior)


def _mixture_log_terms(
    x: np.ndarray, w: np.ndarray, m_t: np.ndarray, v_t: np.ndarray
) -> np.ndarray:
    # x: (F, d); m_t, v_t: (K, d) -> log w_k + log N(x_f; m_k, v_k): (F, K)
    diff = x[:, None, :] - m_t[None, :, :]
    log_norm = -0.5 * np.sum(np.log(2.0 * np.pi * v_t), axis=1)
    return np.log(w)[None, :] + log_norm[None, :] - 0.5 * np.sum(diff * diff / v_t, axis=2)


def analytic_score(
    field: AnalyticScoreField,
    schedule: NoiseSchedule,
    prior: PriorField,
    x: np.ndarray,
    t: float,
    label: Optional[str] = None,
) -> np.ndarray:
    """Exact ``grad_x log p_t(x | label)`` of the diffused mixture.

    Each row of ``x`` is scored independently. ``label=None`` (or the
    baseline label) uses the full mixture, i.e. the true unconditional score.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != field.dim:
        raise InputError(f"state shape {x.shape} does not match mixture dimension {field.dim}")
    if prior.frames > 1 and not np.all(prior.mu == prior.mu[0]):
        raise InputError("mixture scoring requires a row-constant prior mean")
    mask = field.component_mask(label)
    m_t, v_t = field.diffused_components(schedule, prior, t)
    m_t, v_t = m_t[mask], v_t[mask]
    w = field.weights[mask]
    log_terms = _mixture_log_terms(x, w, m_t, v_t)
    log_terms -= log_terms.max(axis=1, keepdims=True)
    resp = np.exp(log_terms)
    resp /= resp.sum(axis=1, keepdims=True)
    per_comp = -(x[:, None, :] - m_t[None, :, :]) / v_t[None, :, :]
    return np.einsum("fk,fkd->fd", resp, per_comp)


def analytic_log_density(
    field: AnalyticScoreField,
    schedule: NoiseSchedule,
    prior: PriorField,
    x: np.ndarray,
    t: float,
    label: Optional[str] = None,
) -> np.ndarray:
    """Per-row ``log p_t(x | label)`` of the diffused mixture."""
    x = np.asarray(x, dtype=float)
    mask = field.component_mask(label)
    m_t, v_t = field.diffused_components(schedule, prior, t)
    w = field.weights[mask]
    log_terms = _mixture_log_terms(x, w / w.sum(), m_t[mask], v_t[mask])
    peak = log_terms.max(axis=1)
    return peak + np.log(np.exp(log_terms - peak[:, None]).sum(axis=1))


def label_posteriors(
    field: AnalyticScoreField,
    schedule: NoiseSchedule,
    prior: PriorField,
    x: np.ndarray,
    t: float,
) -> dict[str, np.ndarray]:
    """Diffused posterior P(label | x, t) for every component label."""
    if field.labels is None:
        raise InputError("mixture has no labels")
    x = np.asarray(x, dtype=float)
    m_t, v_t = field.diffused_components(schedule, prior, t)
    log_terms = _mixture_log_terms(x, field.weights, m_t, v_t)
    log_terms -= log_terms.max(axis=1, keepdims=True)
    resp = np.exp(log_terms)
    resp /= resp.sum(axis=1, keepdims=True)
    out = {}
    for label in sorted(set(filter(None, field.labels))):
        mask = np.array([lab == label for lab in field.labels])
        out[label] = resp[:, mask].sum(axis=1)
    return out


class BoundAnalyticField(ScoreField):
    """Analytic mixture bound to a schedule and prior for sampler use."""

    def __init__(self, field: AnalyticScoreField, schedule: NoiseSchedule, prior: PriorField):
        self.field = field
        self.schedule = schedule
        self.prior = prior

    def score(self, x, mu, t, ctx):
        return analytic_score(self.field, self.schedule, self.prior, x, t, ctx.emo_label)


# ---------------------------------------------------------------------------
# Trainable toy network
# ---------------------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class ToyScoreNet(ScoreField):
    """Dense score estimator with hand-rolled reverse-mode gradients.

    Per state row the input is ``[x, mu, time_emb(t), spk_emb, emo_emb]``;
    two tanh hidden layers of width ``hidden`` map it to a ``state_dim``
    score. ``forward``/``backward`` operate on pre-assembled row batches so
    training can mix rows with different times, speakers and labels.
    """

    def __init__(
        self,
        state_dim: int,
        hidden: int = 128,
        rng: Optional[np.random.Generator] = None,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        self.state_dim = state_dim
        self.hidden = hidden
        self.input_dim = 2 * state_dim + TIME_DIM + SPEAKER_DIM + EMOTION_DIM
        self.w1 = Param(glorot_uniform(rng, self.input_dim, hidden))
        self.b1 = Param(np.zeros(hidden))
        self.w2 = Param(glorot_uniform(rng, hidden, hidden))
        self.b2 = Param(np.zeros(hidden))
        self.w3 = Param(glorot_uniform(rng, hidden, state_dim))
        self.b3 = Param(np.zeros(state_dim))

    def parameters(self) -> dict[str, Param]:
        return {
            "score_net.w1": self.w1,
            "score_net.b1": self.b1,
            "score_net.w2": self.w2,
            "score_net.b2": self.b2,
            "score_net.w3": self.w3,
            "score_net.b3": self.b3,
        }

    def _assemble(self, x, mu, t_emb, spk, emo) -> np.ndarray:
        parts = (x, mu, t_emb, spk, emo)
        dims = (self.state_dim, self.state_dim, TIME_DIM, SPEAKER_DIM, EMOTION_DIM)
        rows = x.shape[0]
        for arr, dim in zip(parts, dims):
            if arr.shape != (rows, dim):
                raise InputError(
                    f"net input block shape {arr.shape} does not match ({rows}, {dim})"
                )
        return np.concatenate(parts, axis=1)

    def forward(self, x, mu, t_emb, spk, emo):
        """Row-batched forward pass; returns (scores, cache-for-backward)."""
        inp = self._assemble(
            np.asarray(x, float),
            np.asarray(mu, float),
            np.asarray(t_emb, float),
            np.asarray(spk, float),
            np.asarray(emo, float),
        )
        h1 = np.tanh(inp @ self.w1.value + self.b1.value)
        h2 = np.tanh(h1 @ self.w2.value + self.b2.value)
        out = h2 @ self.w3.value + self.b3.value
        return out, (inp, h1, h2)

    def backward(self, cache, d_out) -> np.ndarray:
        """Accumulate parameter grads; returns grad w.r.t. the emotion block."""
        inp, h1, h2 = cache
        self.w3.grad += h2.T @ d_out
        self.b3.grad += d_out.sum(axis=0)
        dh2 = d_out @ self.w3.value.T
        dz2 = (1.0 - h2 * h2) * dh2
        self.w2.grad += h1.T @ dz2
        self.b2.grad += dz2.sum(axis=0)
        dh1 = dz2 @ self.w2.value.T
        dz1 = (1.0 - h1 * h1) * dh1
        self.w1.grad += inp.T @ dz1
        self.b1.grad += dz1.sum(axis=0)
        d_inp = dz1 @ self.w1.value.T
        emo_start = self.input_dim - EMOTION_DIM
        return d_inp[:, emo_start:]

    def score(self, x, mu, t, ctx: ConditioningContext) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if x.shape != mu.shape:
            raise InputError(f"state shape {x.shape} does not match prior mean {mu.shape}")
        rows = x.shape[0]
        t_emb = np.tile(time_embedding(t), (rows, 1))
        spk = np.tile(ctx.spk_emb, (rows, 1))
        emo = np.tile(ctx.emo_emb(), (rows, 1))
        out, _ = self.forward(x, mu, t_emb, spk, emo)
        return out
