"""Jump-rate models and the product-form equilibrium measures nu_rho."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "LinearGrowthWarning",
    "SeriesDivergenceError",
    "RateModel",
    "EquilibriumProfile",
    "linear_rate",
    "constant_rate",
    "step_rate",
    "table_rate",
    "parse_rate_model",
    "solve_fugacity",
    "TAIL_TOL",
]

TAIL_TOL = 1e-12


class LinearGrowthWarning(UserWarning):
    """The rate function leaves the band eps0 * k <= h(k) <= k / eps0."""


class SeriesDivergenceError(ArithmeticError):
    """The partition-function series cannot be summed within the truncation cap."""


@dataclass(frozen=True, eq=False)
class RateModel:
    """Jump rate h: N0 -> R+, with h(0) = 0 and h(k) > 0 for k >= 1.

    Parameters
    ----------
    h : callable
        Vectorized over integer arrays.
    eps0 : float
        Linear-growth constant checked on ``1 <= k <= k_max``.
    name : str
        Label written into run metadata.
    k_max : int
        Hard cap on occupancies used when summing series.
    slope : float, optional
        Set when ``h(k) == slope * k`` identically; enables closed forms.
    """

    h: Callable[[np.ndarray], np.ndarray]
    eps0: float
    name: str
    k_max: int = 4096
    slope: float | None = None
    _checked: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        vals = self.table(self.k_max + 2)
        if vals[0] != 0.0:
            raise ValueError(f"h(0) must be 0, got {vals[0]}")
        if np.any(vals[1:] <= 0.0) or not np.all(np.isfinite(vals)):
            raise ValueError("h(k) must be finite and positive for k >= 1")
        k = np.arange(1, self.k_max + 1)
        hk = vals[1 : self.k_max + 1]
        ok = bool(np.all(self.eps0 * k <= hk * (1 + 1e-12)) and np.all(hk <= k / self.eps0 * (1 + 1e-12)))
        self._checked["linear_growth"] = ok
        self._checked["lipschitz"] = float(np.max(np.abs(np.diff(vals[: self.k_max + 1]))))
        if not ok:
            warnings.warn(
                f"rate model {self.name!r} violates eps0*k <= h(k) <= k/eps0 "
                f"with eps0={self.eps0}; limit-theorem guarantees do not apply",
                LinearGrowthWarning,
                stacklevel=3,
            )

    def table(self, size: int) -> np.ndarray:
        """h(0), ..., h(size - 1) as float64."""
        return np.asarray(self.h(np.arange(size, dtype=np.int64)), dtype=float).reshape(size)

    def __call__(self, k):
        return self.h(np.asarray(k, dtype=np.int64))

    @property
    def linear_growth_ok(self) -> bool:
        return self._checked["linear_growth"]

    @property
    def lipschitz(self) -> float:
        """sup_k |h(k+1) - h(k)| over k < k_max."""
        return self._checked["lipschitz"]


def linear_rate(c: float = 1.0) -> RateModel:
    """h(k) = c k: independent walkers, Poisson marginals."""
    return RateModel(
        h=lambda k: c * np.asarray(k, dtype=float),
        eps0=min(c, 1.0 / c),
        name="linear" if c == 1.0 else f"linear:{c!r}",
        slope=c,
    )


def constant_rate(c: float = 1.0, eps0: float = 0.1) -> RateModel:
    """h(k) = c 1{k >= 1}: the classical constant-rate ZRP (geometric marginals)."""
    return RateModel(
        h=lambda k: c * (np.asarray(k) >= 1).astype(float),
        eps0=eps0,
        name="constant" if c == 1.0 else f"constant:{c!r}",
    )


def step_rate(jump: float = 0.5) -> RateModel:
    """h(k) = k + jump 1{k >= 1}: linear growth with a nonlinear kink at the origin."""
    return RateModel(
        h=lambda k: np.asarray(k, dtype=float) + jump * (np.asarray(k) >= 1),
        eps0=1.0 / (1.0 + jump),
        name=f"step:{jump!r}",
    )


def table_rate(values, name: str = "custom", eps0: float | None = None) -> RateModel:
    """Rate from tabulated h(0..K); extended past K with the last increment."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or len(vals) < 2:
        raise ValueError("rate table needs at least h(0) and h(1)")
    last = vals[-1]
    inc = vals[-1] - vals[-2]
    top = len(vals) - 1

    def h(k):
        k = np.asarray(k, dtype=np.int64)
        out = last + (k - top) * inc
        inside = k <= top
        out = np.where(inside, vals[np.minimum(k, top)], out)
        return out.astype(float)

    if eps0 is None:
        k = np.arange(1, len(vals))
        ratio = vals[1:] / k
        eps0 = float(min(ratio.min(), 1.0 / ratio.max()))
        if inc <= 0:
            eps0 = max(eps0, 1e-6)
    return RateModel(h=h, eps0=eps0, name=name)


def parse_rate_model(spec: str) -> RateModel:
    """Parse ``linear``, ``constant``, ``step[:j]`` or ``custom:<file>``.

    A custom file lists h(0), h(1), ... one value per line (blank lines and
    ``#`` comments ignored); a two-column ``k h`` layout is also accepted.
    """
    kind, _, arg = spec.partition(":")
    if kind == "linear":
        return linear_rate(float(arg) if arg else 1.0)
    if kind == "constant":
        return constant_rate(float(arg) if arg else 1.0)
    if kind == "step":
        return step_rate(float(arg) if arg else 0.5)
    if kind == "custom":
        if not arg:
            raise ValueError("custom rate model needs a file: custom:<path>")
        rows = []
        for line in Path(arg).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(tok) for tok in line.replace(",", " ").split()])
        if rows and len(rows[0]) == 2:
            rows.sort()
            ks = [int(r[0]) for r in rows]
            if ks != list(range(len(ks))):
                raise ValueError(f"{arg}: k column must run 0, 1, 2, ...")
            values = [r[1] for r in rows]
        else:
            values = [r[0] for r in rows]
        return table_rate(values, name=f"custom:{arg}")
    raise ValueError(f"unknown rate model {spec!r}; expected linear, constant, step or custom:<file>")


@dataclass(frozen=True, eq=False)
class EquilibriumProfile:
    """Single-site marginal of nu_rho and its derived characteristics.

    ``pmf[k] = phi**k / (Z h(k)!)`` for ``k <= K`` where K is the smallest
    cutoff whose tail mass is below ``TAIL_TOL``; ``pmf`` is not renormalized.
    """

    rho: float
    phi: float
    Z: float
    log_Z: float
    chi: float
    dphi: float
    pmf: np.ndarray
    model: RateModel

    @property
    def beta(self) -> float:
        return self.dphi

    @property
    def cutoff(self) -> int:
        return len(self.pmf) - 1

    def mean(self, g) -> float:
        """E_nu[g(eta(x))] for a vectorized g on occupancies."""
        k = np.arange(len(self.pmf))
        return float(np.dot(self.pmf, np.asarray(g(k), dtype=float)))

    def bracket_table(self, size: int) -> np.ndarray:
        """k -> h(k) - phi - phi'(k - rho), the Boltzmann-Gibbs remainder."""
        if self.model.slope is not None:
            return np.zeros(size)
        k = np.arange(size, dtype=float)
        return self.model.table(size) - self.phi - self.dphi * (k - self.rho)


def _log_factorials(model: RateModel) -> np.ndarray:
    h = model.table(model.k_max + 2)
    out = np.empty(model.k_max + 2)
    out[0] = 0.0
    np.cumsum(np.log(h[1:]), out=out[1:])
    return out


class _Series:
    """Weights phi**k / h(k)! on 0..k_max, evaluated in log space."""

    def __init__(self, model: RateModel):
        self.model = model
        self.logfact = _log_factorials(model)
        self.h_end = float(model.table(model.k_max + 2)[-1])
        self.k = np.arange(model.k_max + 1, dtype=float)

    def evaluate(self, log_phi: float):
        """Return (log Z, p, converged) with p over 0..k_max."""
        logw = self.k * log_phi - self.logfact[:-1]
        m = float(logw.max())
        w = np.exp(logw - m)
        s = float(w.sum())
        p = w / s
        ratio = math.exp(log_phi) / self.h_end
        if ratio >= 1.0:
            return m + math.log(s), p, False
        tail = p[-1] * ratio / (1.0 - ratio)
        return m + math.log(s), p, tail < TAIL_TOL

    def mean(self, log_phi: float) -> tuple[float, bool]:
        _, p, ok = self.evaluate(log_phi)
        return float(np.dot(self.k, p)), ok


def solve_fugacity(model: RateModel, rho: float) -> EquilibriumProfile:
    """Find phi(rho) with E[eta(x)] = rho by bisection in log(phi).

    The mean is strictly increasing in phi (it is the mean of an exponential
    tilt), so a predicate bisection on ``mean >= rho or divergent`` brackets
    the root even for rates whose series has a finite radius of convergence.
    """
    if rho < 0 or not math.isfinite(rho):
        raise ValueError(f"density must be finite and non-negative, got {rho}")
    if rho == 0:
        h1 = float(model.table(2)[1])
        return EquilibriumProfile(0.0, 0.0, 1.0, 0.0, 0.0, h1, np.array([1.0]), model)

    series = _Series(model)
    if model.slope is not None:
        log_phi = math.log(model.slope * rho)
    else:
        def above(x):
            m, ok = series.mean(x)
            return (not ok) or m >= rho

        lo, hi = 0.0, 0.0
        step = 1.0
        if above(0.0):
            while above(lo):
                lo -= step
                step *= 2.0
        else:
            while not above(hi):
                hi += step
                step *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if above(mid):
                hi = mid
            else:
                lo = mid
        candidates = []
        for x in (lo, hi):
            m, ok = series.mean(x)
            if ok:
                candidates.append((abs(m - rho), x))
        if not candidates:
            raise SeriesDivergenceError(
                f"partition series for {model.name!r} does not converge within k_max="
                f"{model.k_max} at density {rho}"
            )
        err, log_phi = min(candidates)
        if err > 1e-9 * max(1.0, rho):
            raise SeriesDivergenceError(
                f"density {rho} unreachable for {model.name!r} within k_max={model.k_max}"
                f" (closest mean off by {err:.3g})"
            )

    log_Z, p, ok = series.evaluate(log_phi)
    if not ok:
        raise SeriesDivergenceError(
            f"partition series for {model.name!r} does not converge within k_max={model.k_max}"
        )
    tail = np.cumsum(p[::-1])[::-1]  # tail[K] = sum_{k >= K} p(k)
    below = np.flatnonzero(tail < TAIL_TOL)
    cut = int(below[0]) if below.size else model.k_max + 1
    pmf = p[:cut].copy()
    k = np.arange(cut, dtype=float)
    phi = math.exp(log_phi)
    if model.slope is not None:
        # Poisson(rho) in closed form: Z = exp(rho), chi = rho
        chi = rho
        log_Z = rho
        dphi = model.slope
    else:
        mean = float(np.dot(k, pmf))
        chi = float(np.dot((k - mean) ** 2, pmf))
        dphi = phi / chi
    return EquilibriumProfile(
        rho=float(rho),
        phi=phi,
        Z=math.exp(log_Z),
        log_Z=log_Z,
        chi=chi,
        dphi=dphi,
        pmf=pmf,
        model=model,
    )
