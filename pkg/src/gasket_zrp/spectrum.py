"""Eigendecomposition of the finite-level Neumann Laplacian -Delta_n."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gasket import CapacityError, GasketGraph, build_gasket

__all__ = [
    "MAX_SPECTRAL_LEVEL",
    "CACHE_MAGIC",
    "CACHE_VERSION",
    "SpectralBasis",
    "eigendecompose",
    "renormalized_eigenvalue_table",
    "project",
    "reconstruct",
    "save_basis",
    "load_basis",
    "cached_basis",
]

MAX_SPECTRAL_LEVEL = 7
CACHE_MAGIC = b"GZRPEIG\x00"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of -Delta_n, orthonormal in L2(mu_n).

    ``eigenvectors[k]`` is v_k evaluated on the vertices in graph order.
    Eigenvalues already carry the 5**n factor of Delta_n.
    """

    level: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def mass(self) -> float:
        return 3.0 ** -self.level

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def zero_tol(self) -> float:
        return 1e-9 * max(1.0, float(self.eigenvalues[-1]))

    def mode(self, k: int) -> np.ndarray:
        return self.eigenvectors[k]

    def truncate(self, n_modes: int) -> "SpectralBasis":
        return SpectralBasis(self.level, self.eigenvalues[:n_modes], self.eigenvectors[:n_modes])


def eigendecompose(graph: GasketGraph) -> SpectralBasis:
    """Full dense eigendecomposition of -Delta_n.

    Eigenvalues ascend. The zero mode is set to the exact constant
    ``(total mass) ** -1/2``. Each other eigenvector is scaled to unit
    L2(mu_n) norm and signed so its first non-negligible entry is positive.
    """
    n = graph.level
    if n > MAX_SPECTRAL_LEVEL:
        raise CapacityError(f"dense eigensolve capped at level {MAX_SPECTRAL_LEVEL}, got {n}")
    A = -graph.laplacian_matrix()
    w, U = np.linalg.eigh(A)
    V = np.ascontiguousarray(U.T) * 3.0 ** (n / 2.0)
    for row in V:
        big = np.flatnonzero(np.abs(row) > 1e-8 * np.abs(row).max())
        if row[big[0]] < 0:
            row *= -1.0
    w = w.copy()
    w[0] = 0.0
    V[0] = (graph.n_vertices * 3.0**-n) ** -0.5
    return SpectralBasis(level=n, eigenvalues=w, eigenvectors=V)


def renormalized_eigenvalue_table(levels, k_max: int = 10, cache_dir=None) -> np.ndarray:
    """Table ``T[k, j] = lambda_k`` at level ``levels[j]`` for ``k <= k_max``."""
    levels = list(levels)
    table = np.full((k_max + 1, len(levels)), np.nan)
    for j, n in enumerate(levels):
        lam = cached_basis(n, cache_dir).eigenvalues
        m = min(k_max + 1, len(lam))
        table[:m, j] = lam[:m]
    return table


def project(f, basis: SpectralBasis) -> np.ndarray:
    """Fourier coefficients f_k = sum_x 3**-n f(x) v_k(x)."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != basis.eigenvectors.shape[1]:
        raise ValueError(
            f"function has {f.shape[-1]} values, level-{basis.level} basis expects "
            f"{basis.eigenvectors.shape[1]}"
        )
    return basis.mass * (basis.eigenvectors @ f)


def reconstruct(coefficients, basis: SpectralBasis) -> np.ndarray:
    c = np.asarray(coefficients, dtype=float)
    return c @ basis.eigenvectors[: len(c)]


def save_basis(basis: SpectralBasis, path) -> None:
    """Write the binary cache: header, eigenvalues, then eigenvectors row-major."""
    count = basis.n_modes
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, basis.level, count))
        fh.write(np.ascontiguousarray(basis.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.eigenvectors, dtype="<f8").tobytes())


def load_basis(path) -> SpectralBasis:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated eigen cache")
    magic, version, level, count = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: not an eigen cache file")
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: cache format version {version}, expected {CACHE_VERSION}")
    n_vertices = 3 * (3**level + 1) // 2
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != count + count * n_vertices:
        raise ValueError(f"{path}: payload size does not match header")
    lam = body[:count].copy()
    vecs = body[count:].reshape(count, n_vertices).copy()
    return SpectralBasis(level=level, eigenvalues=lam, eigenvectors=vecs)


def default_cache_dir() -> Path:
    env = os.environ.get("GASKET_ZRP_CACHE")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "gasket_zrp"


def cache_path(level: int, cache_dir=None) -> Path:
    base = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    return base / f"eigen_L{level}_v{CACHE_VERSION}.bin"


_MEMO: dict = {}


def cached_basis(level: int, cache_dir=None) -> SpectralBasis:
    """Basis for ``level``, memoized in-process and cached on disk."""
    path = cache_path(level, cache_dir)
    if path in _MEMO:
        return _MEMO[path]
    basis = None
    if path.exists():
        try:
            basis = load_basis(path)
        except ValueError:
            basis = None
    if basis is None:
        basis = eigendecompose(build_gasket(level))
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            save_basis(basis, path)
        except OSError:
            pass
    _MEMO[path] = basis
    return basis
