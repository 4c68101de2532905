"""Mel-spectrogram extraction, mel-cepstral distortion, Griffin-Lim, WAV I/O.

Fixed pipeline configuration: 16 kHz mono PCM in, STFT with a periodic Hann
window of 1024 samples and hop 256 (centered, reflect padding), 128
triangular mel filters from 0 to 8 kHz on the HTK mel scale
``mel(f) = 2595 log10(1 + f/700)``, natural-log compression with a 1e-5
floor. Cepstra are an orthonormal DCT-II across the 128 mel channels,
keeping coefficients 1..13 (c0 excluded). All operations are deterministic.
"""

from __future__ import annotations

import logging
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "SAMPLE_RATE",
    "N_FFT",
    "HOP",
    "N_MELS",
    "AudioBuffer",
    "MelSpectrogram",
    "mel_filterbank",
    "mel_spectrogram",
    "mel_cepstra",
    "mcd",
    "trim_to_match",
    "griffin_lim",
    "read_wav",
    "write_wav",
]

log = logging.getLogger("emosynth.audio")

SAMPLE_RATE = 16_000
N_FFT = 1024
HOP = 256
N_MELS = 128
FMIN = 0.0
FMAX = 8_000.0
LOG_FLOOR = 1e-5
N_CEPSTRA = 13
_MCD_SCALE = 10.0 / np.log(10.0)


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform in [-1, 1] at a declared sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise InputError(f"audio must be mono 1-d, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InputError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class MelSpectrogram:
    """frames x 128 natural-log mel magnitudes plus framing metadata."""

    values: np.ndarray
    sample_rate: int = SAMPLE_RATE
    n_fft: int = N_FFT
    hop: int = HOP
    window: str = "hann"
    fmin: float = FMIN
    fmax: float = FMAX
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != N_MELS:
            raise InputError(f"mel matrix must be frames x {N_MELS}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError("mel matrix contains non-finite values")
        floor = np.log(self.log_floor)
        if values.min() < floor - 1e-9:
            raise InputError(
                f"mel values below the log floor {floor:.6f}; clip before constructing"
            )
        object.__setattr__(self, "values", values)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    def metadata(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "n_fft": self.n_fft,
            "hop": self.hop,
            "window": self.window,
            "fmin": self.fmin,
            "fmax": self.fmax,
            "log_floor": self.log_floor,
        }


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def _hann(n: int) -> np.ndarray:
    # periodic window (the DFT-friendly variant)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank() -> np.ndarray:
    """128 x 513 matrix of triangular filters on mel-spaced centers."""
    n_bins = N_FFT // 2 + 1
    fft_freqs = np.arange(n_bins) * (SAMPLE_RATE / N_FFT)
    mel_points = np.linspace(hz_to_mel(FMIN), hz_to_mel(FMAX), N_MELS + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((N_MELS, n_bins))
    for k in range(N_MELS):
        left, center, right = hz_points[k], hz_points[k + 1], hz_points[k + 2]
        rising = (fft_freqs - left) / (center - left)
        falling = (right - fft_freqs) / (right - center)
        fb[k] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def stft(samples: np.ndarray) -> np.ndarray:
    """Centered magnitude-preserving STFT; returns complex (frames, 513)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < N_FFT:
        raise InputError(f"need at least {N_FFT} samples for one window, got {samples.size}")
    pad = N_FFT // 2
    padded = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + (len(samples) // HOP)
    window = _hann(N_FFT)
    frames = np.stack(
        [padded[k * HOP : k * HOP + N_FFT] * window for k in range(n_frames)]
    )
    return np.fft.rfft(frames, axis=1)


def istft(spec: np.ndarray, length: int | None = None) -> np.ndarray:
    """Overlap-add inverse of :func:`stft` (window-squared normalized)."""
    spec = np.asarray(spec)
    n_frames = spec.shape[0]
    window = _hann(N_FFT)
    total = (n_frames - 1) * HOP + N_FFT
    acc = np.zeros(total)
    norm = np.zeros(total)
    frames = np.fft.irfft(spec, n=N_FFT, axis=1)
    for k in range(n_frames):
        sl = slice(k * HOP, k * HOP + N_FFT)
        acc[sl] += frames[k] * window
        norm[sl] += window * window
    out = acc / np.maximum(norm, 1e-12)
    pad = N_FFT // 2
    out = out[pad : total - pad]
    if length is not None:
        out = out[:length]
    return out


def mel_spectrogram(audio: AudioBuffer) -> MelSpectrogram:
    """STFT magnitude -> mel projection -> natural log with 1e-5 floor."""
    if audio.sample_rate != SAMPLE_RATE:
        raise InputError(
            f"pipeline requires {SAMPLE_RATE} Hz input, got {audio.sample_rate} Hz"
        )
    mag = np.abs(stft(audio.samples))
    mel = mag @ mel_filterbank().T
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)))


def _dct_matrix(n: int) -> np.ndarray:
    # orthonormal DCT-II: C[k, i] = a_k cos(pi k (2i+1) / (2n))
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    mat[0] *= np.sqrt(1.0 / n)
    mat[1:] *= np.sqrt(2.0 / n)
    return mat


_DCT_128 = _dct_matrix(N_MELS)


def mel_cepstra(mel: MelSpectrogram) -> np.ndarray:
    """frames x 13 mel-cepstral coefficients (c1..c13, c0 excluded)."""
    return mel.values @ _DCT_128[1 : N_CEPSTRA + 1].T


def mcd(a: np.ndarray, b: np.ndarray) -> float:
    """Mel-cepstral distortion in dB between equal-length cepstra matrices.

    Per frame ``(10/ln 10) sqrt(2 sum_k (a_k - b_k)^2)``, averaged over
    frames. No time alignment is performed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[1] != N_CEPSTRA or b.shape[1:] != (N_CEPSTRA,):
        raise InputError(f"cepstra must be frames x {N_CEPSTRA}, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0]:
        raise InputError(
            f"frame counts differ ({a.shape[0]} vs {b.shape[0]}); trim_to_match first"
        )
    if a.shape[0] == 0:
        raise InputError("cannot compute MCD over zero frames")
    per_frame = _MCD_SCALE * np.sqrt(2.0 * np.sum((a - b) ** 2, axis=1))
    return float(per_frame.mean())


def trim_to_match(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trim two cepstra sequences to the shorter length (logged when uneven)."""
    n = min(a.shape[0], b.shape[0])
    if a.shape[0] != b.shape[0]:
        log.warning(
            "trimming cepstra from %d/%d to %d frames for MCD", a.shape[0], b.shape[0], n
        )
    return a[:n], b[:n]


def mel_to_linear(mel: MelSpectrogram) -> np.ndarray:
    """Approximate linear magnitudes via the transpose-normalized filterbank."""
    fb = mel_filterbank()
    weights = fb.T  # (bins, mels): per-bin filter weights
    denom = weights.sum(axis=1, keepdims=True)
    weights = np.divide(weights, denom, out=np.zeros_like(weights), where=denom > 0)
    return np.exp(mel.values) @ weights.T


def griffin_lim(
    mel: MelSpectrogram, iterations: int = 32, return_residuals: bool = False
):
    """Reconstruct a waveform from a mel matrix by iterative phase recovery.

    Classic alternating projections on the estimated linear magnitudes; the
    spectral residual is non-increasing across iterations. Output is
    peak-normalized to 0.95.
    """
    if iterations < 1:
        raise InputError(f"iterations must be >= 1, got {iterations}")
    target = mel_to_linear(mel)
    length = mel.frames * HOP
    x = istft(target.astype(complex), length)
    residuals = []
    for _ in range(iterations):
        spec = stft(x)
        mag = np.abs(spec)
        residuals.append(float(np.linalg.norm(mag[: mel.frames] - target)))
        phase = spec / np.maximum(mag, 1e-12)
        x = istft(target * phase[: mel.frames], length)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.95 * x / peak
    audio = AudioBuffer(x, SAMPLE_RATE)
    if return_residuals:
        return audio, residuals
    return audio


# ---------------------------------------------------------------------------
# WAV I/O (RIFF/WAVE, PCM 16-bit mono little-endian)
# ---------------------------------------------------------------------------


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit mono PCM WAV at 16 kHz; anything else is rejected."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            comptype = wf.getcomptype()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError, struct.error) as exc:
        raise InputError(f"malformed WAV file {path}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read WAV file {path}: {exc}") from exc
    if comptype != "NONE":
        raise InputError(f"unsupported WAV encoding {comptype!r} in {path}; need PCM")
    if sampwidth != 2:
        raise InputError(f"unsupported sample width {8 * sampwidth} bit in {path}; need 16-bit")
    if n_channels != 1:
        raise InputError(f"unsupported channel count {n_channels} in {path}; need mono")
    if rate != SAMPLE_RATE:
        raise InputError(f"sample rate {rate} Hz in {path}; pipeline requires {SAMPLE_RATE} Hz")
    if len(raw) < 2 * n_frames:
        raise InputError(f"truncated WAV data in {path}: header promises {n_frames} frames")
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(ints.astype(float) / 32767.0, rate)


def write_wav(path, audio: AudioBuffer):
    """Write 16-bit mono PCM; samples are clipped to [-1, 1] first."""
    clipped = np.clip(audio.samples, -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(ints.tobytes())
