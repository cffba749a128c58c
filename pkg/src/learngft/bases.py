"""Graph Fourier bases.

* :func:`svd` -- one-sided (Hestenes) Jacobi SVD of a square adjacency,
  ``A = psi @ diag(sigma) @ gamma``.
* :func:`circulant_evd` -- closed-form eigendecomposition of a circulant shift
  operator, whose eigenvectors are the columns of the unitary DFT matrix.
* :func:`dft_matrix` -- the unitary Fourier matrix.

The Jacobi kernel rotates column pairs in row-cyclic order until every pair
is orthogonal to a relative cosine of ``1e-12``.  It is compiled with numba;
everything around it is plain numpy.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .errors import ConfigError, SvdConvergenceError
from .topology import GraphTopology, LearnableTopology

__all__ = [
    "GraphBasis",
    "EvdBasis",
    "svd",
    "circulant_evd",
    "dft_matrix",
    "basis_from_adjacency",
    "save_basis",
    "load_basis",
    "JACOBI_TOL",
    "MAX_SWEEPS",
]

JACOBI_TOL = 1e-12
MAX_SWEEPS = 60
INVARIANT_TOL = 1e-9

_MAGIC = b"LGFTSVD1"


@numba.njit(cache=True)
def _jacobi_sweeps(g, v, tol, floor, max_sweeps):  # pragma: no cover - compiled
    # g: rows are the columns of A; v: accumulated rotations, g = v @ A.T
    m, n = g.shape
    nrm = np.empty(m)
    for sweep in range(max_sweeps):
        for i in range(m):
            acc = 0.0
            for k in range(n):
                acc += g[i, k] * g[i, k]
            nrm[i] = acc
        rotated = False
        for p in range(m - 1):
            for q in range(p + 1, m):
                alpha = nrm[p]
                beta = nrm[q]
                if alpha <= floor or beta <= floor:
                    continue
                gam = 0.0
                for k in range(n):
                    gam += g[p, k] * g[q, k]
                if abs(gam) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gam)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for k in range(n):
                    gp = g[p, k]
                    gq = g[q, k]
                    g[p, k] = c * gp - s * gq
                    g[q, k] = s * gp + c * gq
                for k in range(m):
                    vp = v[p, k]
                    vq = v[q, k]
                    v[p, k] = c * vp - s * vq
                    v[q, k] = s * vp + c * vq
                nrm[p] = alpha - t * gam
                nrm[q] = beta + t * gam
        if not rotated:
            return sweep + 1
    return -1


def _complete_orthonormal(cols, missing):
    """Fill columns ``missing`` of ``cols`` with unit vectors orthogonal to the rest.

    Each new column is the standard basis vector with the largest component
    outside the current span, orthogonalized twice (classical Gram-Schmidt
    with reorthogonalization).
    """
    n = cols.shape[0]
    skip = set(missing)
    basis = cols[:, [j for j in range(cols.shape[1]) if j not in skip]]
    for j in missing:
        resid = np.eye(n)
        for _ in range(2):
            resid -= basis @ (basis.T @ resid)
        norms = np.linalg.norm(resid, axis=0)
        best = int(np.argmax(norms))
        e = resid[:, best]
        for _ in range(2):
            e = e - basis @ (basis.T @ e)
        cols[:, j] = e / np.linalg.norm(e)
        basis = np.column_stack([basis, cols[:, j]])
    return cols


@dataclass(frozen=True, eq=False)
class GraphBasis:
    """SVD factors with ``psi @ diag(sigma) @ gamma == A``."""

    psi: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    sweeps: int = 0

    def __post_init__(self):
        for name in ("psi", "sigma", "gamma"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        n = self.sigma.shape[0]
        if self.psi.shape != (n, n) or self.gamma.shape != (n, n):
            raise ConfigError("psi, sigma and gamma dimensions disagree")

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @cached_property
    def id(self) -> str:
        h = hashlib.sha256()
        for a in (self.psi, self.sigma, self.gamma):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return "svd-" + h.hexdigest()[:16]

    def reconstruct(self) -> np.ndarray:
        return (self.psi * self.sigma) @ self.gamma

    def residuals(self) -> dict:
        eye = np.eye(self.n)
        return {
            "psi_orthogonality": float(np.abs(self.psi.T @ self.psi - eye).max()),
            "gamma_orthogonality": float(np.abs(self.gamma @ self.gamma.T - eye).max()),
        }

    def check(self, a=None, tol: float = INVARIANT_TOL) -> None:
        """Raise ``ConfigError`` if any basis invariant is violated."""
        if not all(np.all(np.isfinite(x)) for x in (self.psi, self.sigma, self.gamma)):
            raise ConfigError("basis has non-finite entries")
        if np.any(self.sigma < 0) or np.any(np.diff(self.sigma) > 0):
            raise ConfigError("singular values must be non-negative and descending")
        bad = {k: v for k, v in self.residuals().items() if v >= tol}
        if bad:
            raise ConfigError(f"basis not orthogonal: {bad}")
        if a is not None:
            a = np.asarray(a, dtype=np.float64)
            err = np.abs(self.reconstruct() - a).max()
            if err >= tol * max(np.abs(a).max(), np.finfo(float).tiny):
                raise ConfigError(f"basis does not reconstruct the matrix (error {err:.3g})")


def svd(a) -> GraphBasis:
    """Singular value decomposition of a square real matrix by one-sided Jacobi.

    Singular values are sorted descending (stable in the original column
    order); each left singular vector is signed so its largest-magnitude
    entry is positive.  Numerically null columns get an orthonormal
    completion and a singular value of exactly zero.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ConfigError(f"svd expects a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError("svd input must be finite")
    n = a.shape[0]
    g = np.ascontiguousarray(a.T)
    v = np.eye(n)
    scale = float(np.sum(a * a))
    floor = (n * np.finfo(float).eps) ** 2 * scale
    sweeps = _jacobi_sweeps(g, v, JACOBI_TOL, floor, MAX_SWEEPS)
    if sweeps < 0:
        raise SvdConvergenceError(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")

    norms = np.sqrt(np.einsum("ij,ij->i", g, g))
    null = norms * norms <= floor
    norms[null] = 0.0
    order = np.argsort(-norms, kind="stable")
    sigma, g, v = norms[order], g[order], v[order]
    null = null[order]

    psi = np.zeros((n, n))
    live = ~null
    psi[:, live] = (g[live] / sigma[live, None]).T
    if null.any():
        psi = _complete_orthonormal(psi, list(np.flatnonzero(null)))

    peak = np.argmax(np.abs(psi), axis=0)
    signs = np.where(psi[peak, np.arange(n)] < 0, -1.0, 1.0)
    psi *= signs
    gamma = v * signs[:, None]
    return GraphBasis(psi, sigma, gamma, sweeps)


def basis_from_adjacency(topology) -> GraphBasis:
    """SVD basis of a learnable topology's adjacency or of a raw matrix."""
    if isinstance(topology, LearnableTopology):
        return svd(topology.adjacency())
    if isinstance(topology, GraphTopology):
        return svd(topology.shift_operator / topology.k_neighbors)
    return svd(topology)


# --------------------------------------------------------------------------
# Fourier and circulant eigenbases


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix, ``d[j, k] = exp(-2 pi i j k / n) / sqrt(n)``."""
    if n < 1:
        raise ConfigError("dft size must be at least 1")
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * jk / n) / np.sqrt(n)


@dataclass(frozen=True, eq=False)
class EvdBasis:
    """Eigenvectors ``u`` (columns) and eigenvalues ``lam`` of a circulant matrix."""

    u: np.ndarray
    lam: np.ndarray

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @cached_property
    def id(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.lam, dtype="<c16").tobytes())
        return "evd-" + h.hexdigest()[:16]


def _circulant_row(a):
    n = a.shape[0]
    c = a[0]
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    if np.abs(a - c[idx]).max() > 1e-12 * max(np.abs(a).max(), 1.0):
        raise ConfigError("matrix is not circulant")
    return c


def circulant_evd(topology) -> EvdBasis:
    """Eigendecomposition of a circulant matrix in closed form.

    Accepts a :class:`GraphTopology` (uses its binary shift operator), a
    :class:`LearnableTopology` (its adjacency) or a square array.  The
    eigenvector for index ``k`` is column ``k`` of :func:`dft_matrix` and the
    eigenvalue is ``sum_m c[m] exp(-2 pi i k m / N)`` with ``c`` the first row.
    """
    if isinstance(topology, GraphTopology):
        a = topology.shift_operator
    elif isinstance(topology, LearnableTopology):
        a = topology.adjacency()
    else:
        a = np.asarray(topology, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConfigError("circulant_evd expects a square matrix")
    c = _circulant_row(a)
    d = dft_matrix(a.shape[0])
    lam = np.sqrt(a.shape[0]) * (d @ c)
    return EvdBasis(d, lam)


# --------------------------------------------------------------------------
# serialization


def save_basis(path, basis: GraphBasis) -> None:
    """Binary layout: 8-byte magic, uint64 N, then psi, sigma, gamma as
    little-endian float64 in row-major order."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", basis.n))
        for a in (basis.psi, basis.sigma, basis.gamma):
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_basis(path) -> GraphBasis:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:8] != _MAGIC:
        raise ConfigError(f"{path}: not a basis file")
    (n,) = struct.unpack_from("<Q", data, 8)
    want = 16 + 8 * (2 * n * n + n)
    if len(data) != want:
        raise ConfigError(f"{path}: expected {want} bytes for N={n}, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=16)
    psi = flat[: n * n].reshape(n, n)
    sigma = flat[n * n : n * n + n]
    gamma = flat[n * n + n :].reshape(n, n)
    basis = GraphBasis(psi, sigma, gamma)
    basis.check()
    return basis
