"""Exact continuous-time simulation of the zero-range process on Gamma_n.

Each unordered edge carries jumps in both directions: a particle leaves x for
a given neighbour y at rate h(eta(x)), so site x empties at total rate
deg(x) h(eta(x)). Per-site outflow rates live in a binary sum tree, giving
O(log |V_n|) selection and update.

Observables are maintained incrementally inside the event loop through a
:class:`Probes` set:

* *fields* are linear statistics ``3**(-n/2) sum_x (eta(x) - rho) f(x)``,
  with their realized quadratic variation ``sum (jump)**2`` and largest
  single-event jump;
* *channels* are ``sum_x w(x) g(eta(x))`` for a per-occupancy table g, with
  their exact time integral (the integrand is piecewise constant between
  events).

Time seen by callers is macroscopic: the process is sped up by ``5**n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .. import kernels
from ..gasket import GasketGraph
from .rates import EquilibriumProfile, RateModel

__all__ = [
    "ZrpConfiguration",
    "Probes",
    "Sample",
    "Event",
    "sample_equilibrium",
    "draw_occupancies",
    "step",
    "run",
    "UNIFORM_BLOCK",
]

UNIFORM_BLOCK = 3 * 4096
_EMPTY_LOG_XY = np.zeros((0, 2), dtype=np.int64)
_EMPTY_LOG_T = np.zeros(0)


class Event(NamedTuple):
    source: int
    target: int
    dt: float


def _tree_size(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


class ZrpConfiguration:
    """Occupation numbers eta on V_n plus the cached outflow-rate sum tree.

    Parameters
    ----------
    graph : GasketGraph
    eta : array_like of int
        Initial occupancies in graph vertex order.
    clock : float
        Microscopic time.
    """

    def __init__(self, graph: GasketGraph, eta, clock: float = 0.0):
        eta = np.array(eta, dtype=np.int64)
        if eta.shape != (graph.n_vertices,):
            raise ValueError(f"need {graph.n_vertices} occupancies, got shape {eta.shape}")
        if np.any(eta < 0):
            raise ValueError("occupancies must be non-negative")
        self.graph = graph
        self.eta = eta
        self.clock = float(clock)
        self.events = 0
        self.model: RateModel | None = None
        self.deg = np.ascontiguousarray(graph.degree, dtype=np.int64)
        self.nbr = np.ascontiguousarray(graph.neighbors, dtype=np.int64)
        self.tree = np.zeros(2 * _tree_size(graph.n_vertices))
        self.rate_tab = np.zeros(0)

    @property
    def level(self) -> int:
        return self.graph.level

    @property
    def particle_count(self) -> int:
        return int(self.eta.sum())

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def copy(self) -> "ZrpConfiguration":
        new = ZrpConfiguration(self.graph, self.eta, self.clock)
        new.events = self.events
        if self.model is not None:
            new.bind(self.model)
        return new

    def bind(self, model: RateModel) -> None:
        """Attach a rate model and rebuild the rate tables from scratch."""
        if self.model is model and len(self.rate_tab) >= self.particle_count + 2:
            return
        self.model = model
        self.rate_tab = model.table(self.particle_count + 2)
        self.rebuild_rates()

    def site_rates(self) -> np.ndarray:
        """deg(x) h(eta(x)) computed from scratch."""
        return self.deg * self.rate_tab[self.eta]

    def rebuild_rates(self) -> None:
        P = len(self.tree) // 2
        self.tree[:] = 0.0
        self.tree[P : P + len(self.eta)] = self.site_rates()
        for i in range(P - 1, 0, -1):
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]

    def check_rates(self) -> bool:
        """True iff the cached tree equals a from-scratch rebuild exactly."""
        cached = self.tree.copy()
        self.rebuild_rates()
        same = bool(np.array_equal(cached, self.tree))
        self.tree[:] = cached
        return same


@dataclass
class Probes:
    """Incremental observables tracked by the event loop.

    Parameters
    ----------
    rho : float
        Centering density for the fields.
    fields : dict
        label -> test function f on V_n. Tracked value is
        ``3**(-n/2) sum_x (eta(x) - rho) f(x)``.
    channels : dict
        label -> (g, w) with g vectorized over occupancies and w a weight on
        V_n. Tracked value is ``sum_x w(x) g(eta(x))``; its time integral is
        reported in macroscopic time.
    """

    rho: float
    fields: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)

    @property
    def field_labels(self) -> list[str]:
        return list(self.fields)

    @property
    def channel_labels(self) -> list[str]:
        return list(self.channels)


class Sample(NamedTuple):
    """Observer payload at one sample time (macroscopic)."""

    time: float
    fields: np.ndarray
    qv: np.ndarray
    jump_max: np.ndarray
    channels: np.ndarray
    integrals: np.ndarray
    events: int
    particles: int


class _ProbeState:
    def __init__(self, config: ZrpConfiguration, probes: Probes | None):
        graph = config.graph
        V = graph.n_vertices
        size = len(config.rate_tab)
        scale = 3.0 ** (-graph.level / 2.0)
        self.rho = probes.rho if probes is not None else 0.0
        self.time_scale = 5.0**graph.level
        fields = probes.fields if probes is not None else {}
        chans = probes.channels if probes is not None else {}
        self.field_w = np.zeros((len(fields), V))
        for r, f in enumerate(fields.values()):
            self.field_w[r] = scale * np.asarray(f, dtype=float)
        self.chan_w = np.zeros((len(chans), V))
        self.chan_tab = np.zeros((len(chans), size))
        for r, (g, w) in enumerate(chans.values()):
            self.chan_w[r] = np.asarray(w, dtype=float)
            self.chan_tab[r] = np.asarray(g(np.arange(size)), dtype=float)
        self.field_val = np.zeros(len(fields))
        self.qv = np.zeros(len(fields))
        self.jmax = np.zeros(len(fields))
        self.chan_val = np.zeros(len(chans))
        self.chan_int = np.zeros(len(chans))
        self.resync(config)

    def resync(self, config: ZrpConfiguration) -> None:
        """Recompute instantaneous values from scratch (drops rounding drift)."""
        centered = config.eta - self.rho
        self.field_val[:] = self.field_w @ centered
        if len(self.chan_val):
            self.chan_val[:] = np.einsum("cv,cv->c", self.chan_w, self.chan_tab[:, config.eta])

    def sample(self, config: ZrpConfiguration, t: float) -> Sample:
        return Sample(
            time=t,
            fields=self.field_val.copy(),
            qv=self.qv.copy(),
            jump_max=self.jmax.copy(),
            channels=self.chan_val.copy(),
            integrals=self.chan_int / self.time_scale,
            events=config.events,
            particles=config.particle_count,
        )


def draw_occupancies(profile: EquilibriumProfile, shape, rng) -> np.ndarray:
    """I.i.d. draws from the single-site marginal by inverse CDF.

    The (< 1e-12) mass beyond the truncation cutoff is lumped into the cutoff.
    """
    cdf = np.cumsum(profile.pmf)
    u = rng.random(shape)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1).astype(np.int64)


def sample_equilibrium(
    profile: EquilibriumProfile, graph: GasketGraph, seed=None
) -> ZrpConfiguration:
    """Draw eta ~ nu_rho (i.i.d. sites).

    ``seed`` may be an int, a SeedSequence or a numpy Generator.
    """
    rng = np.random.default_rng(seed)
    eta = draw_occupancies(profile, graph.n_vertices, rng)
    config = ZrpConfiguration(graph, eta)
    config.bind(profile.model)
    return config


def _advance(config, state, rng, t_stop, buf, backend, log=None):
    """Drive the kernel to microscopic time ``t_stop``; returns final status."""
    adv = kernels.get_backend(backend)
    log_xy, log_t = log if log is not None else (_EMPTY_LOG_XY, _EMPTY_LOG_T)
    n_logged = 0
    while True:
        if buf["U"] is None or buf["pos"] + 3 > len(buf["U"]):
            buf["U"] = rng.random(UNIFORM_BLOCK)
            buf["pos"] = 0
        status, pos, clock, n_ev, n_logged = adv(
            config.eta,
            config.deg,
            config.nbr,
            config.tree,
            config.rate_tab,
            state.field_w,
            state.field_val,
            state.qv,
            state.jmax,
            state.chan_w,
            state.chan_tab,
            state.chan_val,
            state.chan_int,
            buf["U"],
            buf["pos"],
            config.clock,
            float(t_stop),
            log_xy,
            log_t,
            n_logged,
        )
        buf["pos"] = pos
        config.clock = clock
        config.events += n_ev
        if status != kernels._kmc_py.NEED_RANDOM:
            return status, n_logged


def step(config: ZrpConfiguration, model: RateModel, rng, backend: str | None = None) -> Event | None:
    """Perform one jump of the CTMC.

    Returns the event, or ``None`` when every site is empty (absorbing state).
    """
    config.bind(model)
    if config.total_rate <= 0.0:
        return None
    state = _ProbeState(config, None)
    log_xy = np.zeros((1, 2), dtype=np.int64)
    log_t = np.zeros(1)
    adv = kernels.get_backend(backend)
    start = config.clock
    U = rng.random(3)
    _, _, clock, n_ev, _ = adv(
        config.eta, config.deg, config.nbr, config.tree, config.rate_tab,
        state.field_w, state.field_val, state.qv, state.jmax,
        state.chan_w, state.chan_tab, state.chan_val, state.chan_int,
        U, 0, config.clock, np.inf, log_xy, log_t, 0,
    )
    config.clock = clock
    config.events += n_ev
    return Event(int(log_xy[0, 0]), int(log_xy[0, 1]), clock - start)


def run(
    config: ZrpConfiguration,
    model: RateModel,
    horizon: float,
    sample_times,
    observer: Callable | None = None,
    *,
    probes: Probes | None = None,
    rng=None,
    backend: str | None = None,
    event_log: int = 0,
):
    """Advance to macroscopic time ``horizon``, sampling along the way.

    At each macroscopic sample time s the observer is called as
    ``observer(s, config, sample)`` with the state after the last event at or
    before microscopic time ``5**n * s``. Sample times are relative to the
    configuration's current clock.

    Returns the list of observer results (the :class:`Sample` objects when no
    observer is given). With ``event_log > 0`` the first ``event_log`` jumps
    are also returned as ``(results, (log_xy, log_t))`` with ``log_t`` in
    microscopic time.
    """
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1:
        raise ValueError("sample_times must be one-dimensional")
    if np.any(np.diff(times) < 0) or (times.size and (times[0] < 0 or times[-1] > horizon)):
        raise ValueError("sample_times must ascend within [0, horizon]")
    config.bind(model)
    rng = np.random.default_rng(rng)
    state = _ProbeState(config, probes)
    scale = 5.0**config.level
    t0 = config.clock
    buf = {"U": None, "pos": 0}
    log = None
    if event_log:
        log = (np.zeros((event_log, 2), dtype=np.int64), np.zeros(event_log))
    logged = 0
    out = []
    for s in list(times) + [float(horizon)]:
        target = t0 + scale * s
        if target > config.clock:
            sub_log = None
            if log is not None and logged < event_log:
                sub_log = (log[0][logged:], log[1][logged:])
            _, n_logged = _advance(config, state, rng, target, buf, backend, sub_log)
            logged += n_logged
        state.resync(config)
        if len(out) < len(times):
            smp = state.sample(config, float(s))
            out.append(observer(float(s), config, smp) if observer is not None else smp)
    if event_log:
        return out, (log[0][:logged], log[1][:logged])
    return out
