"""Fluctuation-field observables and the estimators that compare them with the OU limit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .energy import discrete_laplacian, energy_form
from .gasket import GasketGraph, block_representatives, cell_membership, vertex_count
from .series import FieldSeries
from .spectrum import SpectralBasis
from .zrp.dynamics import Probes, ZrpConfiguration
from .zrp.rates import EquilibriumProfile

__all__ = [
    "InsufficientDataError",
    "empirical_measure",
    "fluctuation_field",
    "initial_field_covariance",
    "FieldCovariance",
    "make_probes",
    "block_weights",
    "dynkin_decomposition",
    "DynkinDecomposition",
    "autocovariance",
    "Autocovariance",
    "bg_statistic",
    "BgReport",
    "max_jump",
    "jump_bound",
    "expected_qv_rate",
    "compensator_static_variance",
    "marginal_chisquare",
    "variance_with_se",
]


class InsufficientDataError(ValueError):
    """Too few effectively independent samples for a stable estimate."""


def _eta_and_level(eta) -> tuple[np.ndarray, int]:
    if isinstance(eta, ZrpConfiguration):
        return eta.eta, eta.level
    eta = np.asarray(eta)
    n = 0
    while vertex_count(n) < eta.shape[-1]:
        n += 1
    if vertex_count(n) != eta.shape[-1]:
        raise ValueError(f"{eta.shape[-1]} sites is not |V_n| for any level n")
    return eta, n


def _match(f, size: int) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != size:
        raise ValueError(f"test function has {f.shape[-1]} values, configuration has {size} sites")
    return f


def empirical_measure(eta, f) -> float:
    """pi^n(f) = 3**-n sum_x eta(x) f(x); ``eta`` may be a configuration or an array."""
    e, n = _eta_and_level(eta)
    f = _match(f, e.shape[-1])
    return 3.0**-n * (e @ f)


def fluctuation_field(eta, f, rho: float):
    """Z^n(f) = 3**(-n/2) sum_x (eta(x) - rho) f(x).

    ``eta`` may carry leading sample axes.
    """
    e, n = _eta_and_level(eta)
    f = _match(f, e.shape[-1])
    return 3.0 ** (-n / 2.0) * ((e - rho) @ f)


@dataclass(frozen=True)
class FieldCovariance:
    """Exact nu_rho covariance of Z^n next to the unweighted L2(mu_n) Gram matrix."""

    exact: np.ndarray
    l2_gram: np.ndarray
    chi: float


def initial_field_covariance(profile: EquilibriumProfile, basis: SpectralBasis, functions) -> FieldCovariance:
    """Cov(Z(f), Z(g)) = chi(rho) 3**-n sum_x f(x) g(x) under the product measure.

    ``functions`` holds mode indices into ``basis`` or arrays on V_n.
    """
    rows = [basis.mode(f) if isinstance(f, (int, np.integer)) else np.asarray(f, float) for f in functions]
    F = np.array(rows)
    gram = basis.mass * (F @ F.T)
    return FieldCovariance(exact=profile.chi * gram, l2_gram=gram, chi=profile.chi)


def block_weights(graph: GasketGraph, f, k: int) -> np.ndarray:
    """Weights turning sum_i V_{n,k}(x_i) f(x_i) into sum_y w(y) (bracket at y).

    Includes the 3**(-n/2) field scaling. A vertex shared by two cells
    collects both cells' contributions.
    """
    f = _match(f, graph.n_vertices)
    reps = block_representatives(graph, k)
    cells = cell_membership(graph, k)
    b_k = 3 * (3**k + 1) // 2
    w = np.zeros(graph.n_vertices)
    for rep, members in zip(reps, cells):
        w[members] += f[rep] / b_k
    return 3.0 ** (-graph.level / 2.0) * w


def make_probes(
    graph: GasketGraph,
    profile: EquilibriumProfile,
    fields: dict,
    *,
    compensators: bool = True,
    predictable_qv: bool = True,
    bg: dict | None = None,
    bg_blocks: dict | None = None,
) -> Probes:
    """Standard observable set for a stationary run.

    For each field ``f`` (label -> function on V_n) this tracks Z(f) and,
    optionally, the Dynkin compensator integrand
    ``comp:<label> = 3**(-n/2) sum_x (h(eta(x)) - phi) Delta_n f(x)`` and the
    predictable quadratic-variation rate
    ``pqv:<label> = (5/3)**n sum_x h(eta(x)) sum_{y~x} (f(y) - f(x))**2``.

    ``bg`` maps label -> f for the Boltzmann-Gibbs integrand
    ``bg:<label> = 3**(-n/2) sum_x [h - phi - phi'(eta - rho)](x) f(x)``;
    ``bg_blocks`` maps label -> (f, k) for its block-averaged form.
    """
    n = graph.level
    scale = 3.0 ** (-n / 2.0)
    model = profile.model
    phi = profile.phi
    probes = Probes(rho=profile.rho)
    i, j = graph.edges[:, 0], graph.edges[:, 1]

    def h_minus_phi(k):
        return model.table(len(k)) - phi

    def h_of(k):
        return model.table(len(k))

    def bracket(k):
        return profile.bracket_table(len(k))

    for label, f in fields.items():
        f = _match(f, graph.n_vertices)
        probes.fields[label] = f
        if compensators:
            probes.channels[f"comp:{label}"] = (h_minus_phi, scale * discrete_laplacian(f, graph))
        if predictable_qv:
            sq = (f[j] - f[i]) ** 2
            local = np.zeros(graph.n_vertices)
            np.add.at(local, i, sq)
            np.add.at(local, j, sq)
            probes.channels[f"pqv:{label}"] = (h_of, (5.0 / 3.0) ** n * local)
    for label, f in (bg or {}).items():
        probes.channels[f"bg:{label}"] = (bracket, scale * _match(f, graph.n_vertices))
    for label, (f, k) in (bg_blocks or {}).items():
        probes.channels[f"bgblock:{label}"] = (bracket, block_weights(graph, f, k))
    return probes


@dataclass(frozen=True)
class DynkinDecomposition:
    """Arrays of shape (R, T)."""

    times: np.ndarray
    compensator: np.ndarray
    martingale: np.ndarray
    realized_qv: np.ndarray

    def qv_rate(self) -> tuple[float, float]:
        """Mean realized QV per unit time at the final sample, with its standard error."""
        t = self.times[-1] - self.times[0]
        per = (self.realized_qv[:, -1] - self.realized_qv[:, 0]) / t
        return float(per.mean()), float(per.std(ddof=1) / math.sqrt(len(per)))


def dynkin_decomposition(series: FieldSeries, field: str, channel: str | None = None, *, exact: bool = True) -> DynkinDecomposition:
    """M_t(f) = Z_t(f) - Z_0(f) - int_0^t (compensator integrand) ds.

    With ``exact`` the event-resolution integral recorded by the simulation is
    used; otherwise the sampled integrand is integrated by the trapezoidal
    rule on the (uniform) sample grid. The realized QV of M is the sum of
    squared jumps of Z, since the compensator is continuous.
    """
    channel = channel or f"comp:{field}"
    if field not in series.field_labels:
        raise ValueError(f"no field {field!r} in series")
    if channel not in series.channel_labels:
        raise ValueError(f"no compensator channel {channel!r} in series; record it with make_probes")
    Z = series.field(field)
    if exact:
        comp = series.integral(channel) - series.integral(channel)[:, :1]
    else:
        dt = series.dt
        g = series.channel(channel)
        comp = np.zeros_like(g)
        comp[:, 1:] = np.cumsum(0.5 * (g[:, 1:] + g[:, :-1]) * dt, axis=1)
    M = Z - Z[:, :1] - comp
    qv = series.field_qv(field) - series.field_qv(field)[:, :1]
    return DynkinDecomposition(times=series.times, compensator=comp, martingale=M, realized_qv=qv)


@dataclass(frozen=True)
class Autocovariance:
    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_effective: float
    rate: float
    rate_stderr: float
    intercept: float
    fit_mask: np.ndarray

    def ci(self, z: float = 1.96):
        return self.values - z * self.stderr, self.values + z * self.stderr


def autocovariance(
    series: FieldSeries | np.ndarray,
    label: str | None = None,
    *,
    dt: float | None = None,
    max_lag: int | None = None,
    window: float | None = None,
) -> Autocovariance:
    """Stationary autocovariance C(tau) pooled over start times and replicas.

    Standard errors come from the spread of per-replica estimates. The decay
    rate is the weighted least-squares slope of log C(tau) over
    ``0 <= tau <= window`` using lags where C exceeds twice its standard
    error, weighted by ``(C / se)**2``.

    Raises
    ------
    InsufficientDataError
        If fewer than 100 effectively independent samples are available.
    """
    if isinstance(series, FieldSeries):
        Z = series.field(label)
        dt = series.dt
    else:
        Z = np.asarray(series, dtype=float)
        if dt is None:
            raise ValueError("dt is required for raw arrays")
    R, T = Z.shape
    if R < 2:
        raise InsufficientDataError("need at least two replicas for standard errors")
    if max_lag is None:
        max_lag = T // 2
    max_lag = min(max_lag, T - 1)
    X = Z - Z.mean()
    lags = np.arange(max_lag + 1)
    per = np.empty((R, len(lags)))
    for L in lags:
        per[:, L] = np.mean(X[:, : T - L] * X[:, L:], axis=1)
    C = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(R)
    rho_hat = C / C[0]
    g = 1.0
    for L in range(1, len(lags)):
        if rho_hat[L] <= 0:
            break
        g += 2.0 * rho_hat[L] * (1.0 - L / T)
    n_eff = R * T / g
    if n_eff < 100:
        raise InsufficientDataError(f"only {n_eff:.1f} effective samples (need 100)")
    tau = lags * dt
    if window is None:
        window = tau[-1]
    mask = (tau <= window + 1e-12) & (C > 2.0 * se)
    # keep only the initial contiguous run of significant lags
    stop = np.argmin(mask) if not mask.all() else len(mask)
    mask[stop:] = False
    rate = rate_se = intercept = float("nan")
    if mask.sum() >= 2:
        x = tau[mask]
        y = np.log(C[mask])
        w = (C[mask] / se[mask]) ** 2
        A = np.column_stack((np.ones_like(x), x))
        Aw = A * w[:, None]
        cov = np.linalg.inv(A.T @ Aw)
        coef = cov @ (Aw.T @ y)
        intercept, rate = float(coef[0]), float(-coef[1])
        rate_se = float(math.sqrt(cov[1, 1]))
    return Autocovariance(
        lags=tau, values=C, stderr=se, n_effective=n_eff, rate=rate,
        rate_stderr=rate_se, intercept=intercept, fit_mask=mask,
    )


@dataclass(frozen=True)
class BgReport:
    level: int
    block_scale: int | None
    label: str
    time: float
    variance: float
    ci_low: float
    ci_high: float
    second_moment: float
    replicas: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def variance_with_se(x) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    x = np.asarray(x, dtype=float)
    N = len(x)
    m = x.mean()
    var = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - m) ** 4))
    se = math.sqrt(max(m4 - var**2 * (N - 3) / (N - 1), 0.0) / N)
    return var, se


def bg_statistic(series: FieldSeries, channel: str, *, time_index: int = -1, block_scale: int | None = None,
                 confidence: float = 0.95) -> BgReport:
    """Across-replica variance of the time-integrated Boltzmann-Gibbs term.

    The integral is read from the event-resolution channel integral, so it
    carries no quadrature error. The confidence interval is the chi-square
    interval for a Gaussian variance.
    """
    if block_scale is not None and block_scale > series.metadata.get("level", block_scale):
        raise ValueError("block scale k exceeds level n")
    if channel not in series.channel_labels:
        raise ValueError(f"no channel {channel!r}; record it with make_probes(bg=...)")
    I = series.integral(channel)[:, time_index] - series.integral(channel)[:, 0]
    R = len(I)
    var = float(np.var(I, ddof=1))
    a = (1.0 - confidence) / 2.0
    lo = (R - 1) * var / stats.chi2.ppf(1.0 - a, R - 1)
    hi = (R - 1) * var / stats.chi2.ppf(a, R - 1)
    return BgReport(
        level=int(series.metadata.get("level", -1)),
        block_scale=block_scale,
        label=channel,
        time=float(series.times[time_index] - series.times[0]),
        variance=var,
        ci_low=float(lo),
        ci_high=float(hi),
        second_moment=float(np.mean(I**2)),
        replicas=R,
    )


def max_jump(series: FieldSeries, label: str) -> float:
    """Largest single-event jump of Z(f) over all replicas and the whole run."""
    return float(series.jump_max[:, :, series.field_labels.index(label)].max())


def jump_bound(f, level: int) -> float:
    """2 ||f||_inf 3**(-n/2): no single jump of Z^n(f) can exceed it."""
    return 2.0 * float(np.max(np.abs(f))) * 3.0 ** (-level / 2.0)


def expected_qv_rate(profile: EquilibriumProfile, f, graph: GasketGraph) -> float:
    """Stationary mean QV of M^n(f) per unit macroscopic time: 2 phi E_n(f, f)."""
    return 2.0 * profile.phi * energy_form(f, f, graph)


def compensator_static_variance(profile: EquilibriumProfile, f, graph: GasketGraph) -> float:
    """Var_nu of 3**(-n/2) sum_x (h(eta(x)) - phi) Delta_n f(x): Var(h) 3**-n sum (Delta_n f)**2."""
    var_h = profile.mean(lambda k: (profile.model.table(len(k)) - profile.phi) ** 2)
    lf = discrete_laplacian(f, graph)
    return var_h * 3.0**-graph.level * float(np.sum(lf * lf))


def marginal_chisquare(samples, pmf, min_expected: float = 5.0):
    """Chi-square goodness of fit of integer samples against ``pmf``.

    Adjacent occupancies are pooled, from k = 0 upward, until each cell
    expects at least ``min_expected`` counts; the last cell is open-ended.
    Returns ``(statistic, dof, p_value)``.
    """
    x = np.asarray(samples, dtype=np.int64).ravel()
    N = len(x)
    p = np.asarray(pmf, dtype=float)
    p = p / p.sum()
    edges = []
    acc = 0.0
    start = 0
    for k in range(len(p)):
        acc += p[k]
        if acc * N >= min_expected:
            edges.append((start, k))
            start = k + 1
            acc = 0.0
    if not edges:
        raise InsufficientDataError("too few samples for any chi-square cell")
    # fold the remaining tail into the last cell, which becomes open-ended
    last_lo = edges[-1][0]
    edges[-1] = (last_lo, None)
    obs = []
    exp = []
    for lo, hi in edges:
        if hi is None:
            obs.append(np.sum(x >= lo))
            exp.append(p[lo:].sum() * N)
        else:
            obs.append(np.sum((x >= lo) & (x <= hi)))
            exp.append(p[lo : hi + 1].sum() * N)
    obs = np.array(obs, dtype=float)
    exp = np.array(exp)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    if dof < 1:
        raise InsufficientDataError("need at least two chi-square cells")
    return stat, dof, float(stats.chi2.sf(stat, dof))
