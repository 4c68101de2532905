"""Toy text encoder: token sequences to frame-level prior means.

Each token independently produces a 128-dim mel-frame mean and a log-domain
duration; ``expand`` repeats token means by their (integer) durations to get
the frame-level prior mean the diffusion engine conditions on. There is no
cross-token mixing and no alignment search: synthetic corpora come with
ground-truth durations.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .score_model import Param, glorot_uniform

__all__ = [
    "TextPriorNet",
    "expand",
    "prior_loss",
    "duration_loss",
    "durations_from_log",
]

MEL_CHANNELS = 128
TOKEN_EMB_DIM = 128
MAX_VOCAB = 64


class TextPriorNet:
    """Per-token embedding -> (mel-frame mean, log duration)."""

    def __init__(self, vocab_size: int, rng: np.random.Generator | None = None):
        if not 1 <= vocab_size <= MAX_VOCAB:
            raise InputError(f"vocab size must be in [1, {MAX_VOCAB}], got {vocab_size}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.emb = Param(rng.standard_normal((vocab_size, TOKEN_EMB_DIM)) * 0.02)
        self.w_mu = Param(glorot_uniform(rng, TOKEN_EMB_DIM, MEL_CHANNELS))
        self.b_mu = Param(np.zeros(MEL_CHANNELS))
        self.w_dur = Param(glorot_uniform(rng, TOKEN_EMB_DIM, 1))
        self.b_dur = Param(np.zeros(1))

    def parameters(self) -> dict[str, Param]:
        return {
            "text_prior.emb": self.emb,
            "text_prior.w_mu": self.w_mu,
            "text_prior.b_mu": self.b_mu,
            "text_prior.w_dur": self.w_dur,
            "text_prior.b_dur": self.b_dur,
        }

    def _check_tokens(self, tokens) -> np.ndarray:
        tokens = np.asarray(tokens)
        if tokens.ndim != 1 or tokens.size == 0:
            raise InputError("token sequence must be a non-empty 1-d array")
        if tokens.dtype.kind not in "iu":
            raise InputError("token ids must be integers")
        if np.any(tokens < 0) or np.any(tokens >= self.vocab_size):
            bad = tokens[(tokens < 0) | (tokens >= self.vocab_size)]
            raise InputError(
                f"token id(s) {sorted(set(bad.tolist()))} outside vocabulary "
                f"[0, {self.vocab_size})"
            )
        return tokens

    def encode(self, tokens) -> tuple[np.ndarray, np.ndarray]:
        """Token means (n x 128) and per-token log durations (n,)."""
        out, _ = self.encode_with_cache(tokens)
        return out

    def encode_with_cache(self, tokens):
        tokens = self._check_tokens(tokens)
        e = self.emb.value[tokens]
        token_mu = e @ self.w_mu.value + self.b_mu.value
        log_dur = e @ self.w_dur.value[:, 0] + self.b_dur.value[0]
        return (token_mu, log_dur), (tokens, e)

    def backward(self, cache, d_token_mu, d_log_dur):
        """Accumulate gradients of the encode outputs into the parameters."""
        tokens, e = cache
        d_token_mu = np.asarray(d_token_mu, dtype=float)
        d_log_dur = np.asarray(d_log_dur, dtype=float)
        self.w_mu.grad += e.T @ d_token_mu
        self.b_mu.grad += d_token_mu.sum(axis=0)
        self.w_dur.grad[:, 0] += e.T @ d_log_dur
        self.b_dur.grad[0] += d_log_dur.sum()
        d_e = d_token_mu @ self.w_mu.value.T + np.outer(d_log_dur, self.w_dur.value[:, 0])
        np.add.at(self.emb.grad, tokens, d_e)


def expand(token_mu: np.ndarray, durations) -> np.ndarray:
    """Repeat row ``i`` of ``token_mu`` ``durations[i]`` times, in order."""
    token_mu = np.asarray(token_mu, dtype=float)
    durations = np.asarray(durations)
    if durations.ndim != 1 or durations.shape[0] != token_mu.shape[0]:
        raise InputError(
            f"durations shape {durations.shape} does not match {token_mu.shape[0]} tokens"
        )
    if durations.dtype.kind not in "iu":
        raise InputError("durations must be integers")
    if np.any(durations < 1):
        raise InputError("durations must be >= 1 frame each")
    return np.repeat(token_mu, durations, axis=0)


def durations_from_log(log_dur: np.ndarray) -> np.ndarray:
    """Inference-time rounding: ``max(1, round-half-up(exp(log_dur)))``."""
    frames = np.floor(np.exp(np.asarray(log_dur, dtype=float)) + 0.5)
    return np.maximum(1, frames).astype(int)


def prior_loss(frame_mu: np.ndarray, target_mel: np.ndarray) -> float:
    """Gaussian-NLL-style fit of the prior mean: mean of (target - mu)^2 / 2."""
    loss, _ = prior_loss_grad(frame_mu, target_mel)
    return loss


def prior_loss_grad(frame_mu, target_mel) -> tuple[float, np.ndarray]:
    frame_mu = np.asarray(frame_mu, dtype=float)
    target_mel = np.asarray(target_mel, dtype=float)
    if frame_mu.shape != target_mel.shape:
        raise InputError(
            f"frame count/channel mismatch: prior {frame_mu.shape}, target {target_mel.shape}"
        )
    diff = frame_mu - target_mel
    loss = 0.5 * float(np.mean(diff * diff))
    return loss, diff / diff.size


def duration_loss(log_dur, target_durations) -> float:
    """MSE between predicted log durations and log of the true durations."""
    loss, _ = duration_loss_grad(log_dur, target_durations)
    return loss


def duration_loss_grad(log_dur, target_durations) -> tuple[float, np.ndarray]:
    log_dur = np.asarray(log_dur, dtype=float)
    target = np.asarray(target_durations)
    if target.shape != log_dur.shape:
        raise InputError(
            f"duration length mismatch: predicted {log_dur.shape}, target {target.shape}"
        )
    if np.any(target < 1):
        raise InputError("target durations must be positive integers")
    diff = log_dur - np.log(target.astype(float))
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size
