"""Scale-invariant SDR, its analytic gradient, and segmental SNR."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

__all__ = ["si_sdr", "si_sdr_batch", "si_sdr_gradient", "seg_snr", "SI_SDR_EPS"]

#: guard added to the error energy; makes a perfect estimate finite (capped)
SI_SDR_EPS = 1e-12
_DB = 10.0 / math.log(10.0)
_TINY = np.finfo(float).tiny


def _pair(estimate, reference):
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if est.shape != ref.shape:
        raise ConfigError(f"estimate {est.shape} and reference {ref.shape} differ in shape")
    if est.shape[-1] < 1:
        raise ConfigError("si_sdr needs at least one sample")
    ref_energy = np.sum(ref * ref, axis=-1)
    if np.any(ref_energy == 0):
        raise ConfigError("reference has zero energy")
    return est, ref, ref_energy


def _parts(est, ref, ref_energy):
    alpha = np.sum(est * ref, axis=-1) / ref_energy
    target = alpha[..., None] * ref
    error = est - target
    return alpha, target, error


def si_sdr_batch(estimate, reference, eps: float = SI_SDR_EPS) -> np.ndarray:
    """SI-SDR in dB along the last axis."""
    est, ref, ref_energy = _pair(estimate, reference)
    _, target, error = _parts(est, ref, ref_energy)
    p_t = np.sum(target * target, axis=-1)
    p_e = np.sum(error * error, axis=-1)
    # the target energy is only floored so an orthogonal estimate stays finite
    return _DB * (np.log(np.maximum(p_t, _TINY)) - np.log(p_e + eps))


def si_sdr(estimate, reference, eps: float = SI_SDR_EPS) -> float:
    """``10 log10(|a s|^2 / |s_hat - a s|^2)`` with ``a = <s_hat, s> / |s|^2``.

    The error energy carries an ``eps`` guard, so ``si_sdr(s, s)`` returns a
    large finite value that grows with the energy of ``s`` (120 dB at unit
    energy).  Scale invariance therefore holds up to about
    ``4.34 * eps / |s_hat - a s|^2`` dB.
    """
    est = np.ravel(estimate)
    ref = np.ravel(reference)
    return float(si_sdr_batch(est, ref, eps))


def si_sdr_gradient(estimate, reference, eps: float = SI_SDR_EPS) -> np.ndarray:
    """Gradient of :func:`si_sdr` with respect to the estimate (last axis).

    In the cap regime, where the residual energy is below ``eps``, the
    gradient is defined to be zero.
    """
    est, ref, ref_energy = _pair(estimate, reference)
    alpha, target, error = _parts(est, ref, ref_energy)
    p_t = np.sum(target * target, axis=-1)
    p_e = np.sum(error * error, axis=-1)
    # d p_t = 2 alpha s, d p_e = 2 e (e is orthogonal to s)
    grad = 2.0 * _DB * (
        (alpha / np.maximum(p_t, _TINY))[..., None] * ref - error / (p_e + eps)[..., None]
    )
    capped = p_e < eps
    if np.any(capped):
        grad = np.where(capped[..., None], 0.0, grad)
    return grad


def seg_snr(estimate, reference, sample_rate: int, segment_ms: float = 32.0,
            lo: float = -10.0, hi: float = 35.0) -> float:
    """Mean per-segment SNR over non-overlapping segments, each clamped to [lo, hi] dB.

    A trailing partial segment is dropped unless the signal is shorter than
    one segment, in which case the whole signal is a single segment.
    """
    est = np.ravel(np.asarray(estimate, dtype=np.float64))
    ref = np.ravel(np.asarray(reference, dtype=np.float64))
    if est.shape != ref.shape:
        raise ConfigError("estimate and reference lengths differ")
    seg = max(1, int(round(segment_ms * 1e-3 * sample_rate)))
    count = max(1, len(ref) // seg)
    seg = min(seg, len(ref))
    r = ref[: count * seg].reshape(count, seg)
    e = r - est[: count * seg].reshape(count, seg)
    tiny = np.finfo(float).tiny
    snr = _DB * (np.log(np.sum(r * r, axis=1) + tiny) - np.log(np.sum(e * e, axis=1) + tiny))
    return float(np.mean(np.clip(snr, lo, hi)))


def seg_count(length: int, sample_rate: int, segment_ms: float = 32.0) -> int:
    seg = max(1, int(round(segment_ms * 1e-3 * sample_rate)))
    return max(1, length // seg)
