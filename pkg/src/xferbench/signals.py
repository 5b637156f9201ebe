"""Fourier resampling and band-power featurization of single-channel epochs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xferbench.errors import InvalidRate, RateTooLow

BANDS = (
    ("delta", 0.5, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("sigma", 12.0, 16.0),
    ("beta", 16.0, 30.0),
)
BAND_NAMES = tuple(b[0] for b in BANDS)
LOG_FLOOR = -12.0
MIN_FEATURE_RATE = 64


@dataclass(frozen=True)
class Epoch:
    samples: np.ndarray
    rate_hz: int

    @property
    def seconds(self) -> float:
        return len(self.samples) / self.rate_hz


def resampled_length(n: int, source_rate: int, target_rate: int) -> int:
    # half-up rounding; Python's round() is banker's
    return int(np.floor(n * target_rate / source_rate + 0.5))


def fourier_resample(epoch: Epoch, target_rate_hz: int) -> Epoch:
    """Resample by truncating or zero-padding the real-FFT spectrum.

    The Nyquist bin follows the usual convention (doubled when it is folded
    in by truncation, halved when it is split by padding) and the output is
    rescaled by ``new_len / old_len`` so in-band sinusoids keep their
    amplitude.
    """
    if int(target_rate_hz) != target_rate_hz or target_rate_hz < 1:
        raise InvalidRate(f"target rate must be a positive integer, got {target_rate_hz!r}")
    if epoch.rate_hz < 1:
        raise InvalidRate(f"source rate must be positive, got {epoch.rate_hz!r}")
    x = np.asarray(epoch.samples, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise InvalidRate("need a 1-D epoch with at least 2 samples")
    if target_rate_hz == epoch.rate_hz:
        return Epoch(x.copy(), int(target_rate_hz))
    return Epoch(_resample_fft(x, resampled_length(len(x), epoch.rate_hz, target_rate_hz)),
                 int(target_rate_hz))


def _resample_fft(x: np.ndarray, num: int) -> np.ndarray:
    """Resample along the last axis to ``num`` samples."""
    nx = x.shape[-1]
    if num == nx:
        return np.array(x, dtype=np.float64, copy=True)
    X = np.fft.rfft(x, axis=-1)
    Y = np.zeros(x.shape[:-1] + (num // 2 + 1,), dtype=np.complex128)
    n = min(num, nx)
    nyq = n // 2 + 1
    Y[..., :nyq] = X[..., :nyq]
    if n % 2 == 0:
        if num < nx:
            Y[..., n // 2] *= 2.0
        else:
            Y[..., n // 2] *= 0.5
    y = np.fft.irfft(Y, num, axis=-1)
    y *= num / nx
    return y


def resample_batch(data: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Resample every row of an ``(n_epochs, n_samples)`` array."""
    if target_rate < 1 or int(target_rate) != target_rate:
        raise InvalidRate(f"target rate must be a positive integer, got {target_rate!r}")
    data = np.asarray(data, dtype=np.float64)
    if source_rate == target_rate:
        return data.copy()
    num = resampled_length(data.shape[-1], source_rate, target_rate)
    return _resample_fft(data, num)


def periodogram(samples: np.ndarray, rate_hz: int) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Hann-windowed periodogram scaled so its sum is the mean power."""
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[-1]
    w = np.hanning(n) if n > 1 else np.ones(1)
    X = np.fft.rfft(x * w, axis=-1)
    p = (X.real ** 2 + X.imag ** 2) / (n * np.sum(w * w))
    if n % 2 == 0:
        p[..., 1:-1] *= 2.0
    else:
        p[..., 1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)
    return freqs, p


def _band_masks(freqs: np.ndarray) -> list[np.ndarray]:
    return [(freqs >= lo) & (freqs < hi) for _, lo, hi in BANDS]


def bandpower_features(epoch: Epoch) -> np.ndarray:
    """log10 mean periodogram power in the delta..beta bands (length 5)."""
    if epoch.rate_hz < MIN_FEATURE_RATE:
        raise RateTooLow(f"band features need >= {MIN_FEATURE_RATE} Hz, got {epoch.rate_hz}")
    return bandpower_batch(np.asarray(epoch.samples)[None, :], epoch.rate_hz)[0]


def bandpower_batch(data: np.ndarray, rate_hz: int) -> np.ndarray:
    """Vectorized ``bandpower_features`` over an ``(n_epochs, n_samples)`` array."""
    if rate_hz < MIN_FEATURE_RATE:
        raise RateTooLow(f"band features need >= {MIN_FEATURE_RATE} Hz, got {rate_hz}")
    freqs, p = periodogram(np.atleast_2d(data), rate_hz)
    out = np.empty((p.shape[0], len(BANDS)))
    for j, mask in enumerate(_band_masks(freqs)):
        mean = p[:, mask].mean(axis=1)
        with np.errstate(divide="ignore"):
            out[:, j] = np.where(mean > 10.0 ** LOG_FLOOR, np.log10(np.maximum(mean, 1e-300)), LOG_FLOOR)
    return out
