"""Frame-wise analysis/synthesis transforms.

All spectra are laid out ``(num_frames, N)``: one row per frame.  Real
spectra from the SVD basis carry the id of the basis that produced them,
and applying an inverse with any other basis raises
:class:`~learngft.errors.BasisMismatchError`.

GFT-EVD over a circulant topology uses the DFT eigenbasis, so its
coefficient ``k`` equals STFT bin ``(-k) mod N``: the two spectra agree after
that index reversal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .audio import FrameSequence
from .bases import EvdBasis, GraphBasis
from .errors import BasisMismatchError, ConfigError

__all__ = [
    "TimeGraphSpectrum",
    "ComplexSpectrum",
    "SynthesisOperator",
    "gft_svd_forward",
    "gft_svd_inverse",
    "gft_evd_forward",
    "gft_evd_inverse",
    "stft_forward",
    "stft_inverse",
    "learned_inverse_apply",
    "evd_to_dft_order",
    "write_spectrum_csv",
    "save_spectrum",
    "load_spectrum",
    "save_operator",
    "load_operator",
]


@dataclass(frozen=True, eq=False)
class TimeGraphSpectrum:
    data: np.ndarray
    basis_id: str

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ConfigError("spectrum data must be 2-D (frames x N)")
        if not np.all(np.isfinite(d)):
            raise ConfigError("spectrum has non-finite entries")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data) -> "TimeGraphSpectrum":
        return TimeGraphSpectrum(data, self.basis_id)


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    data: np.ndarray
    basis_id: str = "dft"

    def __post_init__(self):
        d = np.array(self.data, dtype=np.complex128)
        if d.ndim != 2 or not np.all(np.isfinite(d)):
            raise ConfigError("complex spectrum must be a finite 2-D array")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data) -> "ComplexSpectrum":
        return ComplexSpectrum(data, self.basis_id)


@dataclass(frozen=True, eq=False)
class SynthesisOperator:
    """Learned N x N decoder ``b``: frames are reconstructed as ``b @ spectrum``."""

    b: np.ndarray
    basis_id: str

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or not np.all(np.isfinite(b)):
            raise ConfigError("synthesis operator must be a finite square matrix")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return self.b.shape[0]

    @classmethod
    def from_basis(cls, basis: GraphBasis) -> "SynthesisOperator":
        return cls(basis.psi, basis.id)


def _rows(frames, n):
    x = frames.frames if isinstance(frames, FrameSequence) else np.asarray(frames)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n:
        raise ConfigError(f"frames of width {x.shape[-1]} do not match transform size {n}")
    return x


def gft_svd_forward(frames, basis: GraphBasis) -> TimeGraphSpectrum:
    """Real time-graph spectrum ``psi.T @ frame`` for every frame."""
    return TimeGraphSpectrum(_rows(frames, basis.n) @ basis.psi, basis.id)


def _check_basis(spectrum, basis_id):
    if spectrum.basis_id != basis_id:
        raise BasisMismatchError(
            f"spectrum built with basis {spectrum.basis_id}, applied with {basis_id}"
        )


def gft_svd_inverse(spectrum: TimeGraphSpectrum, basis: GraphBasis) -> np.ndarray:
    _check_basis(spectrum, basis.id)
    return spectrum.data @ basis.psi.T


def learned_inverse_apply(op: SynthesisOperator, spectrum: TimeGraphSpectrum) -> np.ndarray:
    _check_basis(spectrum, op.basis_id)
    if spectrum.shape[1] != op.n:
        raise ConfigError("spectrum width does not match operator size")
    return spectrum.data @ op.b.T


def gft_evd_forward(frames, basis: EvdBasis) -> ComplexSpectrum:
    """``conj(U).T @ frame`` per frame (U is unitary)."""
    return ComplexSpectrum(_rows(frames, basis.n) @ basis.u.conj(), basis.id)


def gft_evd_inverse(spectrum: ComplexSpectrum, basis: EvdBasis) -> np.ndarray:
    _check_basis(spectrum, basis.id)
    return spectrum.data @ basis.u.T


def stft_forward(frames, n: int | None = None) -> ComplexSpectrum:
    """Unitary DFT of every frame."""
    x = frames.frames if isinstance(frames, FrameSequence) else np.asarray(frames)
    x = _rows(x, x.shape[-1] if n is None else n)
    return ComplexSpectrum(np.fft.fft(x, axis=1, norm="ortho"), "dft")


def stft_inverse(spectrum: ComplexSpectrum) -> np.ndarray:
    _check_basis(spectrum, "dft")
    return np.fft.ifft(spectrum.data, axis=1, norm="ortho")


def evd_to_dft_order(n: int) -> np.ndarray:
    """Index map ``k -> (-k) mod n`` taking circulant-EVD coefficients to DFT bins."""
    return (-np.arange(n)) % n


# --------------------------------------------------------------------------
# dumps

_SPEC_MAGIC = b"LGFTSPC1"
_OP_MAGIC = b"LGFTSYN1"
_ID_BYTES = 32


def _pack_id(basis_id):
    raw = basis_id.encode("ascii")
    if len(raw) > _ID_BYTES:
        raise ConfigError("basis id too long to serialize")
    return raw.ljust(_ID_BYTES, b"\x00")


def write_spectrum_csv(path, spectrum: TimeGraphSpectrum) -> None:
    """One frame per line, 12 significant digits."""
    with open(path, "w") as f:
        for row in spectrum.data:
            f.write(",".join(f"{v:.12g}" for v in row))
            f.write("\n")


def save_spectrum(path, spectrum: TimeGraphSpectrum) -> None:
    frames, n = spectrum.shape
    with open(path, "wb") as f:
        f.write(_SPEC_MAGIC + struct.pack("<QQ", frames, n) + _pack_id(spectrum.basis_id))
        f.write(np.ascontiguousarray(spectrum.data, dtype="<f8").tobytes())


def load_spectrum(path) -> TimeGraphSpectrum:
    with open(path, "rb") as f:
        data = f.read()
    head = 8 + 16 + _ID_BYTES
    if data[:8] != _SPEC_MAGIC or len(data) < head:
        raise ConfigError(f"{path}: not a spectrum file")
    frames, n = struct.unpack_from("<QQ", data, 8)
    if len(data) != head + 8 * frames * n:
        raise ConfigError(f"{path}: truncated spectrum file")
    basis_id = data[24:head].rstrip(b"\x00").decode("ascii")
    body = np.frombuffer(data, dtype="<f8", offset=head).reshape(frames, n)
    return TimeGraphSpectrum(body, basis_id)


def save_operator(path, op: SynthesisOperator) -> None:
    with open(path, "wb") as f:
        f.write(_OP_MAGIC + struct.pack("<Q", op.n) + _pack_id(op.basis_id))
        f.write(np.ascontiguousarray(op.b, dtype="<f8").tobytes())


def load_operator(path) -> SynthesisOperator:
    with open(path, "rb") as f:
        data = f.read()
    head = 16 + _ID_BYTES
    if data[:8] != _OP_MAGIC or len(data) < head:
        raise ConfigError(f"{path}: not a synthesis operator file")
    (n,) = struct.unpack_from("<Q", data, 8)
    if len(data) != head + 8 * n * n:
        raise ConfigError(f"{path}: truncated operator file")
    basis_id = data[16:head].rstrip(b"\x00").decode("ascii")
    return SynthesisOperator(np.frombuffer(data, dtype="<f8", offset=head).reshape(n, n), basis_id)
