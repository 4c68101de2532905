"""Save/restore trained model bundles through the checkpoint container.

The JSON header records topology, dimensions, the emotion inventory, the
corpus recipe, and that the null-token embedding is a learned row; the
payload holds every parameter group (and the fixed speaker bank) as float64
in declaration order.
"""

from __future__ import annotations

import numpy as np

from .corpus import (
    LabeledComponent,
    SyntheticEmotionCorpus,
    SyntheticUtteranceCorpus,
)
from .errors import InputError
from .schedule import NoiseSchedule
from .score_model import EMOTIONS
from .tensorio import load_checkpoint, save_checkpoint
from .training import MixtureModel, TTSModel

__all__ = ["save_model", "load_model"]

KIND_MIXTURE = "mixture"
KIND_TTS = "tts"


def _schedule_header(schedule: NoiseSchedule) -> dict:
    return {"beta0": schedule.beta0, "beta1": schedule.beta1, "horizon": schedule.horizon}


def _mixture_corpus_header(corpus: SyntheticEmotionCorpus) -> dict:
    return {
        "kind": "mixture",
        "components": [
            {
                "label": c.label,
                "weight": c.weight,
                "mean": c.mean.tolist(),
                "var": c.var.tolist(),
            }
            for c in corpus.components
        ],
        "baseline_label": corpus.baseline_label,
        "baseline_weight": corpus.baseline_weight,
        "n_speakers": len(corpus.speakers),
    }


def _utterance_corpus_header(corpus: SyntheticUtteranceCorpus) -> dict:
    return {
        "kind": "utterance",
        "vocab": corpus.vocab,
        "labels": list(corpus.labels),
        "mel_channels": corpus.mel_channels,
        "noise_std": corpus.noise_std,
        "min_tokens": corpus.min_tokens,
        "max_tokens": corpus.max_tokens,
        "n_speakers": len(corpus.speakers),
    }


def mixture_corpus_from_header(header: dict) -> SyntheticEmotionCorpus:
    return SyntheticEmotionCorpus(
        components=[
            LabeledComponent(c["label"], c["weight"], c["mean"], c["var"])
            for c in header["components"]
        ],
        baseline_label=header["baseline_label"],
        baseline_weight=header["baseline_weight"],
        n_speakers=header["n_speakers"],
    )


def save_model(path, model) -> None:
    """Serialize a trained bundle (mixture or TTS) to a checkpoint file."""
    if isinstance(model, MixtureModel):
        kind = KIND_MIXTURE
        corpus_header = _mixture_corpus_header(model.corpus)
        extra_params = []
        topology = {"state_dim": model.score_net.state_dim, "hidden": model.score_net.hidden}
    elif isinstance(model, TTSModel):
        kind = KIND_TTS
        corpus_header = _utterance_corpus_header(model.corpus)
        extra_params = [
            ("corpus.token_patterns", model.corpus.token_patterns),
            ("corpus.token_durations", model.corpus.token_durations.astype(float)),
            ("feature_net.p1", model.feature_net.p1),
            ("feature_net.p2", model.feature_net.p2),
        ] + [
            (f"corpus.offset.{lab}", model.corpus.emotion_offsets[lab])
            for lab in model.corpus.labels
        ]
        topology = {
            "state_dim": model.score_net.state_dim,
            "hidden": model.score_net.hidden,
            "vocab_size": model.text_net.vocab_size,
        }
    else:
        raise InputError(f"cannot checkpoint {type(model).__name__}")
    header = {
        "kind": kind,
        "topology": topology,
        "emotions": list(EMOTIONS),
        "null_row": "learned",
        "schedule": _schedule_header(model.schedule),
        "corpus": corpus_header,
    }
    named = list(model.parameters().items())
    params = [(name, p.value) for name, p in named]
    params.append(("speakers.vectors", model.corpus.speakers.vectors))
    params.extend(extra_params)
    save_checkpoint(path, header, params)


def load_model(path):
    """Rebuild a model bundle from a checkpoint written by :func:`save_model`."""
    header, params = load_checkpoint(path)
    kind = header.get("kind")
    schedule = NoiseSchedule(**header["schedule"])
    if kind == KIND_MIXTURE:
        corpus = mixture_corpus_from_header(header["corpus"])
        model = MixtureModel.new(corpus, hidden=header["topology"]["hidden"])
        model.schedule = schedule
    elif kind == KIND_TTS:
        ch = header["corpus"]
        corpus = SyntheticUtteranceCorpus(
            vocab=ch["vocab"],
            labels=tuple(ch["labels"]),
            mel_channels=ch["mel_channels"],
            n_speakers=ch["n_speakers"],
            noise_std=ch["noise_std"],
            min_tokens=ch["min_tokens"],
            max_tokens=ch["max_tokens"],
        )
        corpus.token_patterns = params["corpus.token_patterns"]
        corpus.token_durations = params["corpus.token_durations"].astype(int)
        for lab in corpus.labels:
            corpus.emotion_offsets[lab] = params[f"corpus.offset.{lab}"]
        model = TTSModel.new(corpus, hidden=header["topology"]["hidden"])
        model.schedule = schedule
        model.feature_net.p1 = params["feature_net.p1"]
        model.feature_net.p2 = params["feature_net.p2"]
    else:
        raise InputError(f"{path}: unknown checkpoint kind {kind!r}")
    for name, param in model.parameters().items():
        if name not in params:
            raise InputError(f"{path}: checkpoint missing parameter group {name!r}")
        if params[name].shape != param.value.shape:
            raise InputError(
                f"{path}: parameter {name!r} has shape {params[name].shape}, "
                f"expected {param.value.shape}"
            )
        param.value = params[name].copy()
        param.grad = np.zeros_like(param.value)
    model.corpus.speakers.vectors = params["speakers.vectors"]
    return model
