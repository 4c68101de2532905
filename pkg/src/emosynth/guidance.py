"""Classifier-free guidance: intensity-weighted score combination.

The guided score is the linear combination

    w * S(x, mu, t, spk, emo) - (w - 1) * S(x, mu, t, spk, null)

where ``w`` is the emotion intensity: 0 gives emotion-agnostic output, 1 the
plain conditional, and values above 1 amplify the labeled emotion. The
speaker embedding is never nulled; only the emotion channel switches to the
null token.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError
from .score_model import ConditioningContext, ScoreField

__all__ = ["combine_scores", "guided_score", "validate_intensity"]

# Beyond this intensity the source system reports audible degradation; the
# library stays unbounded and the CLI warns.
INTENSITY_WARN_THRESHOLD = 30.0


def validate_intensity(w: float) -> float:
    w = float(w)
    if math.isnan(w) or math.isinf(w) or w < 0.0:
        raise InputError(f"intensity must be a finite non-negative real, got {w}")
    return w


def combine_scores(s_cond: np.ndarray, s_uncond: np.ndarray, w: float) -> np.ndarray:
    """``w * s_cond - (w - 1) * s_uncond``, elementwise."""
    w = validate_intensity(w)
    s_cond = np.asarray(s_cond, dtype=float)
    s_uncond = np.asarray(s_uncond, dtype=float)
    if s_cond.shape != s_uncond.shape:
        raise InputError(
            f"score shapes differ: conditional {s_cond.shape}, unconditional {s_uncond.shape}"
        )
    return w * s_cond - (w - 1.0) * s_uncond


def guided_score(
    field: ScoreField,
    x: np.ndarray,
    mu: np.ndarray,
    t: float,
    ctx: ConditioningContext,
    w: float,
) -> np.ndarray:
    """Intensity-guided score at ``(x, t)``.

    Evaluates the field once when ``w`` is exactly 0 (null branch only) or 1
    (conditional branch only), twice otherwise — with the same speaker
    embedding in both branches.
    """
    w = validate_intensity(w)
    if w == 0.0:
        return field.score(x, mu, t, ctx.with_label(None))
    if w == 1.0:
        return field.score(x, mu, t, ctx)
    if ctx.emo_label is None:
        raise InputError("guidance with w not in {0, 1} needs a real emotion label")
    s_cond = field.score(x, mu, t, ctx)
    s_uncond = field.score(x, mu, t, ctx.with_label(None))
    return combine_scores(s_cond, s_uncond, w)
