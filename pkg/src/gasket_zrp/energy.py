"""Renormalized energy forms, the discrete Laplacian and harmonic extension."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from .gasket import GasketGraph, build_gasket, cell_corners

if TYPE_CHECKING:
    from .spectrum import SpectralBasis

__all__ = [
    "HOLDER_EXPONENT",
    "energy_form",
    "discrete_laplacian",
    "harmonic_extension",
    "harmonic_extension_solve",
    "holder_ratio",
    "sobolev_norm",
    "restrict",
    "local_energy_sup",
]

HOLDER_EXPONENT = math.log(5.0 / 3.0) / math.log(4.0)


def _check(f: np.ndarray, graph: GasketGraph, name: str = "f") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != graph.n_vertices:
        raise ValueError(
            f"{name} has {f.shape[-1]} values but level-{graph.level} graph has "
            f"{graph.n_vertices} vertices"
        )
    return f


def energy_form(f, g, graph: GasketGraph) -> float:
    """(5/3)**n * sum over edges of (f(y) - f(x)) (g(y) - g(x))."""
    f = _check(f, graph)
    g = _check(g, graph, "g")
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    return (5.0 / 3.0) ** graph.level * float(np.dot(f[j] - f[i], g[j] - g[i]))


def discrete_laplacian(g, graph: GasketGraph) -> np.ndarray:
    """x -> 5**n * sum over neighbours y of (g(y) - g(x)).

    Accepts a single function or a stack of functions along the last axis.
    """
    g = _check(g, graph, "g")
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    diff = g[..., j] - g[..., i]
    out = np.zeros_like(g)
    np.add.at(out.T, i, diff.T)
    np.subtract.at(out.T, j, diff.T)
    return 5.0**graph.level * out


def restrict(fn, graph: GasketGraph) -> np.ndarray:
    """Evaluate ``fn(x, y)`` at the embedded vertices."""
    pts = graph.points
    return np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float)


def harmonic_extension(f, graph: GasketGraph, fine: GasketGraph | None = None) -> np.ndarray:
    """Energy-minimizing extension of ``f`` from V_n to V_{n+1}.

    Each edge midpoint of a level-n cell with corners p, q (the edge) and r
    (opposite) receives ``(2 f(p) + 2 f(q) + f(r)) / 5``.
    """
    f = _check(f, graph)
    n = graph.level
    if fine is None:
        fine = build_gasket(n + 1)
    out = np.empty(fine.n_vertices)
    out[:] = np.nan
    for (a, b), val in zip(graph.coords, f):
        out[fine.index_of(2 * int(a), 2 * int(b))] = val
    for p, q in cell_corners(n):
        c0 = (2 * p, 2 * q)
        c1 = (2 * p + 2, 2 * q)
        c2 = (2 * p, 2 * q + 2)
        v0 = f[graph.index_of(p, q)]
        v1 = f[graph.index_of(p + 1, q)]
        v2 = f[graph.index_of(p, q + 1)]
        for (x, y), vp, vq, vr in (
            ((c0, c1), v0, v1, v2),
            ((c0, c2), v0, v2, v1),
            ((c1, c2), v1, v2, v0),
        ):
            mid = fine.index_of((x[0] + y[0]) // 2, (x[1] + y[1]) // 2)
            out[mid] = (2.0 * vp + 2.0 * vq + vr) / 5.0
    return out


def harmonic_extension_solve(f, graph: GasketGraph, fine: GasketGraph | None = None) -> np.ndarray:
    """Reference harmonic extension by a direct linear solve of the minimization.

    Slow; intended as a cross-check of :func:`harmonic_extension`.
    """
    f = _check(f, graph)
    if fine is None:
        fine = build_gasket(graph.level + 1)
    boundary = np.array(
        [fine.index_of(2 * int(a), 2 * int(b)) for a, b in graph.coords], dtype=np.int64
    )
    interior = np.setdiff1d(np.arange(fine.n_vertices), boundary)
    L = -fine.laplacian_matrix()
    L_ii = L[np.ix_(interior, interior)]
    L_ib = L[np.ix_(interior, boundary)]
    out = np.empty(fine.n_vertices)
    out[boundary] = f
    out[interior] = np.linalg.solve(L_ii, -L_ib @ f)
    return out


def holder_ratio(f, graph: GasketGraph) -> float:
    """sup over distinct vertex pairs of |f(x) - f(y)| / |x - y|**alpha."""
    f = _check(f, graph)
    pts = graph.points
    best = 0.0
    # row blocks keep the pairwise arrays small at n >= 6
    step = 512
    for start in range(0, len(f), step):
        sl = slice(start, start + step)
        d = np.linalg.norm(pts[sl, None, :] - pts[None, :, :], axis=-1)
        num = np.abs(f[sl, None] - f[None, :])
        mask = d > 0
        if mask.any():
            best = max(best, float(np.max(num[mask] / d[mask] ** HOLDER_EXPONENT)))
    return best


def local_energy_sup(f, graph: GasketGraph) -> float:
    """sup_x (5/3)**n * sum over neighbours y of (f(y) - f(x))**2."""
    f = _check(f, graph)
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    sq = (f[j] - f[i]) ** 2
    acc = np.zeros(graph.n_vertices)
    np.add.at(acc, i, sq)
    np.add.at(acc, j, sq)
    return (5.0 / 3.0) ** graph.level * float(acc.max())


def sobolev_norm(coefficients, m: float, basis: "SpectralBasis") -> float:
    """(sum_k lambda_k**m f_k**2) ** 1/2 over the retained modes.

    Zero eigenvalues contribute ``0**m`` with ``0**0 = 1`` and ``0**m = 0``
    for every ``m != 0``, so for ``m > 0`` the norm is a seminorm that
    ignores constants, and for ``m < 0`` constants are dropped as well.
    """
    c = np.asarray(coefficients, dtype=float)
    lam = basis.eigenvalues[: len(c)]
    zero = lam <= basis.zero_tol
    w = np.empty_like(lam)
    w[~zero] = lam[~zero] ** m
    w[zero] = 1.0 if m == 0 else 0.0
    return math.sqrt(float(np.sum(w * c * c)))
