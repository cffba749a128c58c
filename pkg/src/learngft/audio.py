"""Waveform I/O, test-signal synthesis, framing and overlap-add.

WAV files are parsed directly from their RIFF chunks so that each failure
mode (missing file, broken header, foreign codec) surfaces as its own
exception type.  Only PCM-16 and IEEE float-32 payloads are accepted.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ColaError,
    ConfigError,
    MalformedWavError,
    UnsupportedCodecError,
    WavError,
    WavFileMissingError,
)

__all__ = [
    "AudioBuffer",
    "FrameSequence",
    "read_wav",
    "write_wav",
    "synth_signal",
    "make_window",
    "cola_constant",
    "frame_signal",
    "overlap_add",
    "mix_at_snr",
    "signal_power",
    "synth_mixtures",
]

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE

COLA_TOLERANCE = 1e-8


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform with its sample rate (Hz)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = _readonly(np.ravel(self.samples))
        if not np.all(np.isfinite(s)):
            raise ConfigError("audio samples must be finite")
        if not self.sample_rate > 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameSequence:
    """Windowed, zero-padded analysis frames.

    ``frames`` has shape ``(num_frames, pad_to)``; only the first ``frame_len``
    columns carry windowed samples.  ``length`` records the length of the
    signal that was framed so overlap-add can size its output.
    """

    frames: np.ndarray
    frame_len: int
    hop: int
    window: np.ndarray
    pad_to: int
    sample_rate: int = 16000
    length: int | None = field(default=None)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ConfigError("frames must be a 2-D array")
        window = _readonly(self.window)
        if not (0 < self.hop <= self.frame_len <= self.pad_to):
            raise ConfigError(
                f"need 0 < hop <= frame_len <= pad_to, got "
                f"hop={self.hop}, frame_len={self.frame_len}, pad_to={self.pad_to}"
            )
        if frames.shape[1] != self.pad_to:
            raise ConfigError(f"frames have {frames.shape[1]} columns, pad_to is {self.pad_to}")
        if window.shape != (self.frame_len,) or np.any(window < 0):
            raise ConfigError("window must be non-negative with length frame_len")
        if not np.all(np.isfinite(frames)):
            raise ConfigError("frames must be finite")
        frames = frames.copy()
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "window", window)
        if self.length is None:
            object.__setattr__(self, "length", (len(frames) - 1) * self.hop + self.frame_len)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames) -> "FrameSequence":
        """Same framing geometry, new frame contents (e.g. after a transform)."""
        return FrameSequence(
            frames, self.frame_len, self.hop, self.window, self.pad_to,
            self.sample_rate, self.length,
        )

    def interior(self) -> slice:
        """Output samples covered by the full complement of overlapping frames."""
        return slice(self.frame_len - self.hop, self.num_frames * self.hop)


# --------------------------------------------------------------------------
# WAV I/O


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise MalformedWavError(f"chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def read_wav(path) -> AudioBuffer:
    """Read a PCM-16 or float-32 WAV file; channels are averaged to mono."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise WavFileMissingError(f"no such file: {path}")
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = payload = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
    if fmt is None or len(fmt) < 16:
        raise MalformedWavError(f"{path}: missing or short fmt chunk")
    if payload is None:
        raise MalformedWavError(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _EXTENSIBLE:
        if len(fmt) < 26:
            raise MalformedWavError(f"{path}: short WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels < 1 or rate < 1 or block_align != channels * bits // 8:
        raise MalformedWavError(f"{path}: inconsistent fmt fields")

    if tag == _PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodecError(f"{path}: format tag {tag} with {bits} bits is not supported")

    usable = len(payload) - len(payload) % block_align
    raw = np.frombuffer(payload[:usable], dtype=dtype).astype(np.float64)
    samples = raw.reshape(-1, channels).mean(axis=1) * scale
    return AudioBuffer(samples, rate)


def write_wav(path, buffer: AudioBuffer, format: str = "float32") -> None:
    """Write ``buffer`` as mono WAV.

    ``pcm16`` clamps to [-1, 1) before quantizing; ``float32`` rounds samples
    to single precision.
    """
    if format == "pcm16":
        q = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
        tag, bits = _PCM, 16
    elif format == "float32":
        payload = buffer.samples.astype("<f4").tobytes()
        tag, bits = _IEEE_FLOAT, 32
    else:
        raise ConfigError(f"unknown wav format {format!r}")

    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, buffer.sample_rate, buffer.sample_rate * block, block, bits)
    chunks = [b"fmt " + struct.pack("<I", len(fmt)) + fmt]
    if tag == _IEEE_FLOAT:
        chunks.append(b"fact" + struct.pack("<II", 4, len(buffer)))
    pad = b"\x00" if len(payload) & 1 else b""
    chunks.append(b"data" + struct.pack("<I", len(payload)) + payload + pad)
    body = b"WAVE" + b"".join(chunks)
    try:
        with open(path, "wb") as f:
            f.write(b"RIFF" + struct.pack("<I", len(body)) + body)
    except OSError as exc:
        raise WavError(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# synthesis


def synth_signal(kind: str, duration: float, seed: int = 0, sample_rate: int = 16000,
                 **params) -> AudioBuffer:
    """Deterministic test signal, peak-normalized to 0.5.

    kinds: ``sine`` (freq, phase), ``chirp`` (f0, f1: linear sweep),
    ``white-noise`` (Gaussian, drawn from ``seed``).
    """
    if not duration > 0:
        raise ConfigError(f"duration must be positive, got {duration}")
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ConfigError("duration shorter than one sample")
    t = np.arange(n) / sample_rate
    if kind == "sine":
        x = np.sin(2 * np.pi * params.get("freq", 440.0) * t + params.get("phase", 0.0))
    elif kind == "chirp":
        f0 = params.get("f0", 100.0)
        f1 = params.get("f1", 4000.0)
        x = np.sin(2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t * t))
    elif kind == "white-noise":
        x = np.random.default_rng(seed).standard_normal(n)
    else:
        raise ConfigError(f"unknown signal kind {kind!r}")
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.5 * x / peak
    return AudioBuffer(x, sample_rate)


# --------------------------------------------------------------------------
# framing


def make_window(name: str, length: int) -> np.ndarray:
    """Periodic window of the given name: ``sqrt-hann``, ``hann`` or ``rect``."""
    n = np.arange(length)
    if name == "rect":
        return np.ones(length)
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * n / length)
    if name == "hann":
        return hann
    if name == "sqrt-hann":
        return np.sqrt(hann)
    raise ConfigError(f"unknown window {name!r}")


def _as_window(window, length):
    if isinstance(window, str):
        return make_window(window, length)
    w = np.asarray(window, dtype=np.float64)
    if w.shape != (length,):
        raise ConfigError(f"window length {w.shape} does not match frame_len {length}")
    return w


def cola_constant(analysis, synthesis, hop: int) -> float:
    """Constant value of the shifted window-product sum; raises if it is not constant."""
    w = np.asarray(analysis, dtype=np.float64) * np.asarray(synthesis, dtype=np.float64)
    length = len(w)
    padded = np.zeros(-(-length // hop) * hop)
    padded[:length] = w
    sums = padded.reshape(-1, hop).sum(axis=0)
    level = sums.mean()
    if level <= 0 or np.max(np.abs(sums - level)) > COLA_TOLERANCE * level:
        raise ColaError(
            f"window pair is not COLA at hop {hop}: overlap sum ranges "
            f"[{sums.min():.6g}, {sums.max():.6g}]"
        )
    return float(level)


def frame_signal(buffer: AudioBuffer, frame_len: int = 400, hop: int = 100,
                 window="sqrt-hann", pad_to: int = 512) -> FrameSequence:
    """Slice ``buffer`` into windowed frames zero-padded to ``pad_to`` samples."""
    x = buffer.samples
    if not (0 < hop <= frame_len <= pad_to):
        raise ConfigError(f"need 0 < hop <= frame_len <= pad_to, got {hop}, {frame_len}, {pad_to}")
    if len(x) < frame_len:
        raise ConfigError(f"signal of {len(x)} samples is shorter than one frame ({frame_len})")
    w = _as_window(window, frame_len)
    count = (len(x) - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(count)[:, None]
    frames = np.zeros((count, pad_to))
    frames[:, :frame_len] = x[idx] * w
    return FrameSequence(frames, frame_len, hop, w, pad_to, buffer.sample_rate, len(x))


def overlap_add(frames: FrameSequence, synthesis_window="sqrt-hann") -> AudioBuffer:
    """Weighted overlap-add, normalized by the COLA constant of the window pair.

    Columns beyond ``frame_len`` (the zero-padding region) are discarded.
    Output length equals the framed signal length; samples outside the
    interior (see ``FrameSequence.interior``) are not fully reconstructed.
    """
    L, hop = frames.frame_len, frames.hop
    ws = _as_window(synthesis_window, L)
    level = cola_constant(frames.window, ws, hop)
    F = frames.num_frames
    span = (F - 1) * hop + L
    out = np.zeros(max(span, frames.length))
    seg = frames.frames[:, :L] * ws
    # hop-wide column blocks at a fixed offset never overlap across frames
    for start in range(0, L, hop):
        stop = min(start + hop, L)
        idx = (start + hop * np.arange(F))[:, None] + np.arange(stop - start)[None, :]
        out[idx] += seg[:, start:stop]
    out /= level
    return AudioBuffer(out[: frames.length], frames.sample_rate)


# --------------------------------------------------------------------------
# mixing


def signal_power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def mix_at_snr(clean: AudioBuffer, noise: AudioBuffer, snr_db: float):
    """Scale ``noise`` so the mixture has the requested SNR; returns ``(noisy, gain)``.

    ``snr_db = inf`` yields gain 0.  Noise longer than ``clean`` is truncated.
    """
    if clean.sample_rate != noise.sample_rate:
        raise ConfigError("clean and noise sample rates differ")
    if len(noise) < len(clean):
        raise ConfigError("noise is shorter than clean signal")
    d = noise.samples[: len(clean)]
    p_clean, p_noise = signal_power(clean.samples), signal_power(d)
    if p_clean == 0 or p_noise == 0:
        raise ConfigError("clean and noise must both have nonzero power")
    if math.isinf(snr_db) and snr_db > 0:
        gain = 0.0
    else:
        gain = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return AudioBuffer(clean.samples + gain * d, clean.sample_rate), gain


def synth_mixtures(count: int, duration: float = 1.0, seed: int = 0, snr_db: float = 0.0,
                   sample_rate: int = 16000, fmin: float = 150.0, fmax: float = 1500.0):
    """Seeded set of ``(clean, noisy)`` pairs: a sine of random frequency in
    ``[fmin, fmax]`` plus white noise at ``snr_db``."""
    if count < 1:
        raise ConfigError("need at least one mixture")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        freq = float(rng.uniform(fmin, fmax))
        phase = float(rng.uniform(0, 2 * np.pi))
        clean = synth_signal("sine", duration, sample_rate=sample_rate, freq=freq, phase=phase)
        noise = synth_signal("white-noise", duration, seed=int(rng.integers(2**31)),
                             sample_rate=sample_rate)
        out.append((clean, mix_at_snr(clean, noise, snr_db)[0]))
    return out
