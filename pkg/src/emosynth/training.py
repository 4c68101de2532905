"""Denoising-score-matching training with emotion-null conditioning dropout.

The score target is exact: given a clean state ``x0`` and a draw
``x_t ~ N(mean_t, var_t)`` from the forward marginal, the conditional score
is ``-(x_t - mean_t) / var_t``. The loss is the variance-weighted square
error ``mean(var_t * (s_net - target)^2)``, whose expectation for a zero
network is 1 per dimension regardless of the data law.

With probability ``null_dropout_prob`` a batch element's emotion label is
replaced by the null token (the speaker embedding is never dropped), so one
network serves both guidance branches. An optional unlabeled corpus mix
forces the null context outright, mirroring two-phase labeled/unlabeled
training.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .corpus import SyntheticEmotionCorpus, SyntheticUtteranceCorpus
from .errors import InputError, NumericsError
from .rng import make_rng
from .schedule import NoiseSchedule, PriorField, forward_marginal
from .score_model import (
    ConditioningContext,
    EmotionEmbedding,
    Param,
    ToyScoreNet,
    emotion_index,
    time_embedding,
)
from .text_prior import (
    TextPriorNet,
    duration_loss_grad,
    expand,
    prior_loss_grad,
)

__all__ = [
    "LossWeights",
    "TrainConfig",
    "Adam",
    "apply_null_dropout",
    "dsm_loss",
    "SpeakerFeatureNet",
    "speaker_feature_loss",
    "MixtureModel",
    "TTSModel",
    "TrainResult",
    "train_loop",
]


@dataclass(frozen=True)
class LossWeights:
    diffusion: float = 1.0
    prior: float = 1.0
    duration: float = 0.1
    speaker: float = 0.1

    def __post_init__(self):
        for name in ("diffusion", "prior", "duration", "speaker"):
            if getattr(self, name) < 0:
                raise InputError(f"loss weight {name} must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    iterations: int = 2000
    null_dropout_prob: float = 0.10
    loss_weights: LossWeights = field(default_factory=LossWeights)
    unlabeled_mix: float = 0.0
    seed: int = 0
    t_floor: float = 1e-5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.null_dropout_prob <= 1.0:
            raise InputError(f"null dropout prob {self.null_dropout_prob} outside [0, 1]")
        if not 0.0 <= self.unlabeled_mix <= 1.0:
            raise InputError(f"unlabeled mix {self.unlabeled_mix} outside [0, 1]")
        if self.batch_size < 1 or self.iterations < 1:
            raise InputError("batch size and iterations must be >= 1")


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected)."""

    def __init__(self, params: dict[str, Param], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.step_count = 0

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float):
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"non-finite gradient in parameter group {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def apply_null_dropout(
    ctx: ConditioningContext, prob: float, rng: np.random.Generator
) -> ConditioningContext:
    """Replace the emotion label with the null token with probability ``prob``."""
    if not 0.0 <= prob <= 1.0:
        raise InputError(f"dropout probability {prob} outside [0, 1]")
    if prob > 0.0 and rng.uniform() < prob:
        return ctx.with_label(None)
    return ctx


def draw_dsm_sample(
    schedule: NoiseSchedule,
    prior: PriorField,
    x0: np.ndarray,
    rng: np.random.Generator,
    t_floor: float = 1e-5,
):
    """Draw ``(t, x_t, target, var)`` for one denoising-score-matching term."""
    t = float(rng.uniform(t_floor, schedule.horizon))
    mean, var = forward_marginal(schedule, prior, x0, t)
    z = rng.standard_normal(mean.shape)
    x_t = mean + np.sqrt(var) * z
    target = -(x_t - mean) / var
    return t, x_t, target, var


def dsm_loss(
    net: ToyScoreNet,
    schedule: NoiseSchedule,
    prior: PriorField,
    x0: np.ndarray,
    ctx: ConditioningContext,
    rng: np.random.Generator,
    t_floor: float = 1e-5,
    accumulate_grads: bool = True,
) -> float:
    """Single-element DSM loss; optionally backpropagates into net and table."""
    t, x_t, target, var = draw_dsm_sample(schedule, prior, x0, rng, t_floor)
    rows = x_t.shape[0]
    t_emb = np.tile(time_embedding(t), (rows, 1))
    spk = np.tile(ctx.spk_emb, (rows, 1))
    emo = np.tile(ctx.emo_emb(), (rows, 1))
    s, cache = net.forward(x_t, prior.mu, t_emb, spk, emo)
    resid = s - target
    loss = float(np.mean(var * resid * resid))
    if accumulate_grads:
        d_s = 2.0 * var * resid / resid.size
        d_emo = net.backward(cache, d_s)
        ctx.emo_table.accumulate_grad(ctx.emo_label, d_emo.sum(axis=0))
    return loss


class SpeakerFeatureNet:
    """Frozen 2-layer random projection used by the perceptual speaker loss."""

    def __init__(self, channels: int, hidden: int = 64, out: int = 32, seed: int = 0):
        rng = make_rng(seed, 0xFEA)
        self.p1 = rng.standard_normal((channels, hidden)) / np.sqrt(channels)
        self.p2 = rng.standard_normal((hidden, out)) / np.sqrt(hidden)

    def features(self, mel: np.ndarray) -> np.ndarray:
        return np.tanh(np.asarray(mel, float) @ self.p1) @ self.p2

    def features_with_cache(self, mel):
        h = np.tanh(np.asarray(mel, float) @ self.p1)
        return h @ self.p2, h

    def backward_to_input(self, h, d_feat) -> np.ndarray:
        dz = (1.0 - h * h) * (d_feat @ self.p2.T)
        return dz @ self.p1.T


def speaker_feature_loss(
    gen_mel: np.ndarray, gt_mel: np.ndarray, feature_net: SpeakerFeatureNet
) -> float:
    """Mean absolute distance between frozen projections of the two mels."""
    loss, _ = speaker_feature_loss_grad(gen_mel, gt_mel, feature_net)
    return loss


def speaker_feature_loss_grad(gen_mel, gt_mel, feature_net):
    gen_mel = np.asarray(gen_mel, dtype=float)
    gt_mel = np.asarray(gt_mel, dtype=float)
    if gen_mel.shape != gt_mel.shape:
        raise InputError(
            f"mel shapes differ: generated {gen_mel.shape}, reference {gt_mel.shape}"
        )
    f_gen, h = feature_net.features_with_cache(gen_mel)
    f_gt = feature_net.features(gt_mel)
    diff = f_gen - f_gt
    loss = float(np.mean(np.abs(diff)))
    d_gen = feature_net.backward_to_input(h, np.sign(diff) / diff.size)
    return loss, d_gen


# ---------------------------------------------------------------------------
# Model bundles and the training loop
# ---------------------------------------------------------------------------


@dataclass
class MixtureModel:
    """Trainables for the labeled-mixture task."""

    score_net: ToyScoreNet
    emo_table: EmotionEmbedding
    corpus: SyntheticEmotionCorpus
    schedule: NoiseSchedule

    @staticmethod
    def new(corpus: SyntheticEmotionCorpus, seed: int = 0, hidden: int = 128):
        rng = make_rng(seed, 0x11)
        return MixtureModel(
            score_net=ToyScoreNet(corpus.dimension, hidden=hidden, rng=rng),
            emo_table=EmotionEmbedding(rng),
            corpus=corpus,
            schedule=NoiseSchedule(),
        )

    def parameters(self) -> dict[str, Param]:
        return {**self.score_net.parameters(), **self.emo_table.parameters()}

    def context(self, speaker: int, label) -> ConditioningContext:
        return ConditioningContext(self.corpus.speakers[speaker], label, self.emo_table)


@dataclass
class TTSModel:
    """Trainables for the toy text-to-mel task."""

    score_net: ToyScoreNet
    emo_table: EmotionEmbedding
    text_net: TextPriorNet
    feature_net: SpeakerFeatureNet
    corpus: SyntheticUtteranceCorpus
    schedule: NoiseSchedule

    @staticmethod
    def new(corpus: SyntheticUtteranceCorpus, seed: int = 0, hidden: int = 128):
        rng = make_rng(seed, 0x22)
        return TTSModel(
            score_net=ToyScoreNet(corpus.mel_channels, hidden=hidden, rng=rng),
            emo_table=EmotionEmbedding(rng),
            text_net=TextPriorNet(len(corpus.vocab), rng=rng),
            feature_net=SpeakerFeatureNet(corpus.mel_channels, seed=seed),
            corpus=corpus,
            schedule=NoiseSchedule(),
        )

    def parameters(self) -> dict[str, Param]:
        return {
            **self.score_net.parameters(),
            **self.emo_table.parameters(),
            **self.text_net.parameters(),
        }

    def context(self, speaker: int, label) -> ConditioningContext:
        return ConditioningContext(self.corpus.speakers[speaker], label, self.emo_table)


@dataclass
class HistoryRow:
    iteration: int
    dsm: float
    prior: float
    duration: float
    speaker: float
    total: float
    null_fraction: float


@dataclass
class TrainResult:
    history: list

    def losses(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.history])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "dsm", "prior", "duration", "speaker", "total", "null_fraction"]
            )
            for row in self.history:
                writer.writerow(
                    [
                        row.iteration,
                        f"{row.dsm:.8g}",
                        f"{row.prior:.8g}",
                        f"{row.duration:.8g}",
                        f"{row.speaker:.8g}",
                        f"{row.total:.8g}",
                        f"{row.null_fraction:.6g}",
                    ]
                )


def train_loop(model, config: TrainConfig, progress=None) -> TrainResult:
    """Train a model bundle on its corpus; deterministic given ``config.seed``.

    Aborts with ``NumericsError`` (naming the iteration) if the total loss
    leaves the finite range.
    """
    if isinstance(model, MixtureModel):
        step_fn = _mixture_iteration
    elif isinstance(model, TTSModel):
        step_fn = _tts_iteration
    else:
        raise InputError(f"unsupported model bundle {type(model).__name__}")
    opt = Adam(model.parameters())
    history = []
    for it in range(config.iterations):
        opt.zero_grad()
        row = step_fn(model, config, it)
        if not np.isfinite(row.total):
            raise NumericsError(f"training diverged at iteration {it}: loss={row.total}")
        opt.step(config.learning_rate)
        history.append(row)
        if progress is not None:
            progress(row)
    return TrainResult(history)


def _element_label(corpus: SyntheticEmotionCorpus, rng) -> str:
    labels = corpus.labels
    priors = np.array([corpus.label_prior(lab) for lab in labels])
    return labels[int(rng.choice(len(labels), p=priors))]


def _mixture_iteration(model: MixtureModel, config: TrainConfig, it: int) -> HistoryRow:
    net, corpus = model.score_net, model.corpus
    d = corpus.dimension
    b = config.batch_size
    prior = PriorField.standard(1, d)
    x_t = np.empty((b, d))
    mu = np.zeros((b, d))
    targets = np.empty((b, d))
    variances = np.empty((b, d))
    t_embs = np.empty((b, time_embedding(0.0).size))
    spks = np.empty((b, model.corpus.speakers.vectors.shape[1]))
    emos = np.empty((b, model.emo_table.dim))
    rows_label = []
    nulls = 0
    for e in range(b):
        rng = make_rng(config.seed, it, e)
        forced_null = config.unlabeled_mix > 0.0 and rng.uniform() < config.unlabeled_mix
        if forced_null:
            label = None
            x0 = corpus.draw(1, rng, None)
        else:
            label = _element_label(corpus, rng)
            x0 = corpus.draw(1, rng, label)
        speaker = int(rng.integers(0, len(corpus.speakers)))
        ctx = model.context(speaker, label)
        if not forced_null:
            ctx = apply_null_dropout(ctx, config.null_dropout_prob, rng)
        if ctx.emo_label is None:
            nulls += 1
        t, xt_e, target_e, var_e = draw_dsm_sample(
            model.schedule, prior, x0, rng, config.t_floor
        )
        x_t[e] = xt_e[0]
        targets[e] = target_e[0]
        variances[e] = var_e
        t_embs[e] = time_embedding(t)
        spks[e] = ctx.spk_emb
        emos[e] = ctx.emo_emb()
        rows_label.append(ctx.emo_label)
    s, cache = net.forward(x_t, mu, t_embs, spks, emos)
    resid = s - targets
    per_element = np.mean(variances * resid * resid, axis=1)
    dsm = float(per_element.mean())
    d_s = config.loss_weights.diffusion * 2.0 * variances * resid / (d * b)
    d_emo = net.backward(cache, d_s)
    table_rows = np.array([emotion_index(lab) for lab in rows_label])
    np.add.at(model.emo_table.table.grad, table_rows, d_emo)
    total = config.loss_weights.diffusion * dsm
    return HistoryRow(it, dsm, 0.0, 0.0, 0.0, total, nulls / b)


def _one_step_denoised(x_t, mu, s, var, gamma):
    # invert the forward-marginal mean: mean_t = mu + (x0 - mu) * gamma and
    # mean_t = x_t + var * score for the exact conditional score
    return mu + (x_t + var * s - mu) / gamma


def _tts_iteration(model: TTSModel, config: TrainConfig, it: int) -> HistoryRow:
    net, corpus, text = model.score_net, model.corpus, model.text_net
    w = config.loss_weights
    b = config.batch_size
    elements = []
    nulls = 0
    total_rows = 0
    for e in range(b):
        rng = make_rng(config.seed, it, e)
        forced_null = config.unlabeled_mix > 0.0 and rng.uniform() < config.unlabeled_mix
        utt = corpus.draw_utterance(rng)
        label = None if forced_null else utt.label
        ctx = model.context(utt.speaker, label)
        if not forced_null:
            ctx = apply_null_dropout(ctx, config.null_dropout_prob, rng)
        if ctx.emo_label is None:
            nulls += 1
        elements.append((rng, utt, ctx))
        total_rows += utt.mel.shape[0]

    c = corpus.mel_channels
    x_t = np.empty((total_rows, c))
    mus = np.empty((total_rows, c))
    targets = np.empty((total_rows, c))
    variances = np.empty((total_rows, c))
    gammas = np.empty(total_rows)
    t_embs = np.empty((total_rows, time_embedding(0.0).size))
    spks = np.empty((total_rows, corpus.speakers.vectors.shape[1]))
    emos = np.empty((total_rows, model.emo_table.dim))
    table_rows = np.empty(total_rows, dtype=int)
    slices = []
    prior_total = 0.0
    duration_total = 0.0
    start = 0
    for rng, utt, ctx in elements:
        (token_mu, log_dur), t_cache = text.encode_with_cache(utt.tokens)
        frame_mu = expand(token_mu, utt.durations)
        p_loss, d_frame_mu = prior_loss_grad(frame_mu, utt.mel)
        dur_loss, d_log_dur = duration_loss_grad(log_dur, utt.durations)
        prior_total += p_loss
        duration_total += dur_loss
        # prior/duration gradients flow through the text net only; the
        # diffusion input mu is treated as given for the score net
        d_token_mu = np.zeros_like(token_mu)
        offsets = np.concatenate([[0], np.cumsum(utt.durations)])
        for i in range(len(utt.tokens)):
            d_token_mu[i] = d_frame_mu[offsets[i] : offsets[i + 1]].sum(axis=0)
        text.backward(
            t_cache,
            (w.prior / b) * d_token_mu,
            (w.duration / b) * d_log_dur,
        )

        frames = utt.mel.shape[0]
        prior_field = PriorField(frame_mu, np.ones(c))
        t, xt_e, target_e, var_e = draw_dsm_sample(
            model.schedule, prior_field, utt.mel, rng, config.t_floor
        )
        stop = start + frames
        x_t[start:stop] = xt_e
        mus[start:stop] = frame_mu
        targets[start:stop] = target_e
        variances[start:stop] = var_e
        gammas[start:stop] = np.exp(-model.schedule.cum_beta(t) / 2.0)
        t_embs[start:stop] = time_embedding(t)
        spks[start:stop] = ctx.spk_emb
        emos[start:stop] = ctx.emo_emb()
        table_rows[start:stop] = emotion_index(ctx.emo_label)
        slices.append((start, stop, utt, frames))
        start = stop

    s, cache = net.forward(x_t, mus, t_embs, spks, emos)
    resid = s - targets
    dsm = 0.0
    speaker_total = 0.0
    d_s = np.zeros_like(s)
    for start, stop, utt, frames in slices:
        size = frames * c
        sl = slice(start, stop)
        dsm_e = float(np.mean(variances[sl] * resid[sl] * resid[sl]))
        dsm += dsm_e
        d_s[sl] += w.diffusion * 2.0 * variances[sl] * resid[sl] / (size * b)
        if w.speaker > 0.0:
            x0_hat = _one_step_denoised(
                x_t[sl], mus[sl], s[sl], variances[sl], gammas[sl][:, None]
            )
            sp_loss, d_x0_hat = speaker_feature_loss_grad(x0_hat, utt.mel, model.feature_net)
            speaker_total += sp_loss
            d_s[sl] += (w.speaker / b) * d_x0_hat * variances[sl] / gammas[sl][:, None]
    dsm /= b
    speaker_total /= b
    prior_total /= b
    duration_total /= b
    d_emo = net.backward(cache, d_s)
    np.add.at(model.emo_table.table.grad, table_rows, d_emo)
    total = (
        w.diffusion * dsm
        + w.prior * prior_total
        + w.duration * duration_total
        + w.speaker * speaker_total
    )
    return HistoryRow(it, dsm, prior_total, duration_total, speaker_total, total, nulls / b)
