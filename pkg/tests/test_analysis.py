import math

import numpy as np
import pytest

from gasket_zrp.analysis import (
    InsufficientDataError,
    autocovariance,
    bg_statistic,
    block_weights,
    compensator_static_variance,
    dynkin_decomposition,
    empirical_measure,
    expected_qv_rate,
    fluctuation_field,
    initial_field_covariance,
    jump_bound,
    make_probes,
    marginal_chisquare,
    max_jump,
    variance_with_se,
)
from gasket_zrp.energy import discrete_laplacian, energy_form, harmonic_extension, restrict
from gasket_zrp.gasket import block_representatives, build_gasket
from gasket_zrp.ou import OuParams, simulate_ou
from gasket_zrp.series import FieldSeries
from gasket_zrp.spectrum import eigendecompose
from gasket_zrp.zrp import (
    draw_occupancies,
    linear_rate,
    sample_equilibrium,
    simulate_replicas,
    solve_fugacity,
    step_rate,
)

G = {n: build_gasket(n) for n in range(6)}
B = {n: eigendecompose(G[n]) for n in range(6)}


def test_empirical_measure(rng):
    g = G[3]
    zero = np.zeros(g.n_vertices, dtype=np.int64)
    assert empirical_measure(zero, np.ones(g.n_vertices)) == 0.0
    eta = rng.poisson(2.0, g.n_vertices)
    assert empirical_measure(eta, np.ones(g.n_vertices)) == pytest.approx(eta.sum() / 27)
    f = restrict(lambda x, y: 1 + x * y, g)
    profile = solve_fugacity(linear_rate(), 1.5)
    vals = [empirical_measure(sample_equilibrium(profile, g, s), f) for s in range(2000)]
    target = 1.5 * f.sum() / 27
    assert abs(np.mean(vals) - target) <= 3 * np.std(vals, ddof=1) / math.sqrt(len(vals))
    with pytest.raises(ValueError):
        empirical_measure(eta, np.ones(5))
    with pytest.raises(ValueError):
        empirical_measure(np.zeros(7), np.ones(7))


def test_fluctuation_field_trivial():
    g = G[3]
    assert fluctuation_field(np.full(g.n_vertices, 2), B[3].mode(1), 2.0) == 0.0
    assert fluctuation_field(np.arange(g.n_vertices), np.zeros(g.n_vertices), 1.0) == 0.0
    cfg = sample_equilibrium(solve_fugacity(linear_rate(), 1.0), g, 0)
    f = B[3].mode(2)
    assert fluctuation_field(cfg, f, 1.0) == fluctuation_field(cfg.eta, f, 1.0)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_static_variance_oracle(n, rng):
    profile = solve_fugacity(step_rate(0.5), 0.8)
    g = G[n]
    f = restrict(lambda x, y: np.cos(4 * x) + y, g)
    eta = draw_occupancies(profile, (10_000, g.n_vertices), rng)
    var, se = variance_with_se(fluctuation_field(eta, f, profile.rho))
    exact = profile.chi * 3.0**-n * float(np.sum(f * f))
    assert abs(var - exact) <= 3 * se


def test_initial_covariance():
    cov = initial_field_covariance(solve_fugacity(step_rate(0.5), 1.0), B[3], [1, 2, 5])
    assert np.allclose(cov.exact, cov.chi * np.eye(3), atol=1e-12)
    assert cov.exact[0, 0] == pytest.approx(cov.chi)
    poisson = initial_field_covariance(solve_fugacity(linear_rate(), 1.0), B[3], [1])
    assert poisson.exact[0, 0] == pytest.approx(1.0)
    assert poisson.exact[0, 0] == pytest.approx(poisson.l2_gram[0, 0])


def test_jump_bound_and_max_jump():
    f = np.array([1.0, -2.0, 0.5])
    assert jump_bound(f, 2) == 2 * 2.0 / 3.0
    s = FieldSeries(times=[0, 1], field_labels=["f"], fields=np.zeros((2, 2, 1)))
    assert max_jump(s, "f") == 0.0


def test_block_weights_single_cell():
    g = G[0]
    f = np.array([1.0, 2.0, 3.0])
    rep = block_representatives(g, 0)[0]
    assert np.allclose(block_weights(g, f, 0), f[rep] / 3.0)


def test_block_weights_total(rng):
    g = G[4]
    f = rng.standard_normal(g.n_vertices)
    reps = block_representatives(g, 2)
    w = block_weights(g, f, 2)
    assert w.sum() == pytest.approx(3.0**-2 * f[reps].sum(), rel=1e-12)


def _ou_series(beta, gamma, lam, R, dt, steps, seed, labels):
    p = OuParams(beta, gamma, lam)
    rng = np.random.default_rng(seed)
    y0 = rng.standard_normal((R, len(lam))) * math.sqrt(p.stationary_variance)
    y0[:, 0] = 0
    path = simulate_ou(p, y0, dt, steps, rng)
    return FieldSeries(times=np.arange(steps + 1) * dt, field_labels=labels, fields=path[:, :, 1:])


def test_autocovariance_recovers_ou_rate():
    profile = solve_fugacity(step_rate(0.5), 1.0)
    lam = B[3].eigenvalues[:3]
    beta, gamma = profile.dphi, 2 * profile.phi
    s = _ou_series(beta, gamma, lam, 10_000, 0.01, 60, 5, ["v1", "v2"])
    for k, lab in ((1, "v1"), (2, "v2")):
        ac = autocovariance(s, lab, window=2.0 / (beta * lam[1]), max_lag=30)
        assert abs(ac.rate - beta * lam[k]) / (beta * lam[k]) <= 0.10
        assert ac.values[0] == pytest.approx(gamma / (2 * beta), rel=0.05)


def test_autocovariance_white_noise(rng):
    Z = rng.standard_normal((200, 100))
    ac = autocovariance(Z, dt=1.0, max_lag=10)
    assert np.all(np.abs(ac.values[1:]) <= 3 * ac.stderr[1:])
    assert ac.n_effective > 10_000


def test_autocovariance_insufficient(rng):
    with pytest.raises(InsufficientDataError):
        autocovariance(rng.standard_normal((2, 20)), dt=1.0)
    with pytest.raises(InsufficientDataError):
        autocovariance(rng.standard_normal((1, 500)), dt=1.0)
    with pytest.raises(ValueError):
        autocovariance(rng.standard_normal((4, 50)))


@pytest.fixture(scope="module")
def step_series():
    n = 3
    profile = solve_fugacity(step_rate(0.5), 1.0)
    f = B[n].mode(1)
    probes = make_probes(G[n], profile, {"v1": f}, bg={"v1": f}, bg_blocks={"v1": (f, 1)})
    times = np.linspace(0, 0.5, 51)
    return profile, f, simulate_replicas(G[n], profile, probes, 0.5, times, 60, 17)


def test_dynkin_martingale(step_series):
    profile, f, s = step_series
    d = dynkin_decomposition(s, "v1")
    m = d.martingale[:, -1]
    assert abs(m.mean()) <= 3 * m.std(ddof=1) / math.sqrt(len(m))
    rate, se = d.qv_rate()
    assert abs(rate - expected_qv_rate(profile, f, G[3])) <= 3 * se
    approx = dynkin_decomposition(s, "v1", exact=False)
    # sampled quadrature only tracks the event-exact integral loosely
    assert np.corrcoef(approx.compensator[:, -1], d.compensator[:, -1])[0, 1] > 0.9
    with pytest.raises(ValueError):
        dynkin_decomposition(s, "nope")
    with pytest.raises(ValueError):
        dynkin_decomposition(s, "v1", channel="bg:nope")


def test_predictable_qv_channel(step_series):
    profile, f, s = step_series
    pqv = s.channel("pqv:v1")
    mean = pqv.mean()
    se = pqv[:, 0].std(ddof=1) / math.sqrt(pqv.shape[0])
    assert abs(mean - expected_qv_rate(profile, f, G[3])) <= 3 * se * 2


def test_bg_statistic(step_series):
    profile, f, s = step_series
    rep = bg_statistic(s, "bg:v1")
    assert rep.ci_low < rep.variance < rep.ci_high
    assert rep.level == 3 and rep.replicas == 60
    blk = bg_statistic(s, "bgblock:v1", block_scale=1)
    assert blk.variance > 0
    with pytest.raises(ValueError):
        bg_statistic(s, "bg:v1", block_scale=4)
    with pytest.raises(ValueError):
        bg_statistic(s, "missing")


def test_bg_vanishes_for_linear_rates():
    profile = solve_fugacity(linear_rate(2.0), 1.0)
    f = B[3].mode(1)
    probes = make_probes(G[3], profile, {"v1": f}, bg={"v1": f}, bg_blocks={"v1": (f, 2)})
    s = simulate_replicas(G[3], profile, probes, 0.2, [0, 0.1, 0.2], 5, 3)
    assert np.all(s.integral("bg:v1") == 0.0) and np.all(s.integral("bgblock:v1") == 0.0)
    assert bg_statistic(s, "bg:v1").variance == 0.0


def test_tightness_proxies(rng):
    profile = solve_fugacity(step_rate(0.5), 1.0)
    for k in (1, 3):
        v = [compensator_static_variance(profile, B[n].mode(k), G[n]) for n in (3, 4, 5)]
        assert all(b <= 2 * a for a, b in zip(v, v[1:]))
    # Monte Carlo check of the closed form at n = 3
    f = B[3].mode(1)
    eta = draw_occupancies(profile, (20_000, G[3].n_vertices), rng)
    h = profile.model.table(eta.max() + 1)[eta]
    comp = 3.0 ** -1.5 * ((h - profile.phi) @ discrete_laplacian(f, G[3]))
    var, se = variance_with_se(comp)
    assert abs(var - compensator_static_variance(profile, f, G[3])) <= 3 * se
    # condition ii): phi (5/3)^n sum h-weighted squared gradients stays at phi E_2(f)
    f2 = rng.standard_normal(G[2].n_vertices)
    e2 = energy_form(f2, f2, G[2])
    cur = f2
    for n in range(3, 6):
        cur = harmonic_extension(cur, G[n - 1], G[n])
        assert profile.phi * energy_form(cur, cur, G[n]) <= profile.phi * e2 * (1 + 1e-10)
    g = G[5]
    i, j = g.edges[:, 0], g.edges[:, 1]
    eta = draw_occupancies(profile, (2000, g.n_vertices), rng)
    hx = profile.model.table(eta.max() + 1)[eta]
    est = (5 / 3) ** 5 * (hx[:, i] * (cur[j] - cur[i]) ** 2).sum(axis=1)
    assert abs(est.mean() - profile.phi * e2) <= 3 * est.std(ddof=1) / math.sqrt(len(est))


def test_marginal_chisquare(rng):
    pmf = solve_fugacity(linear_rate(), 2.0).pmf
    _, dof, p = marginal_chisquare(rng.poisson(2.0, 20_000), pmf)
    assert p > 1e-3 and dof >= 5
    _, _, p_bad = marginal_chisquare(rng.poisson(2.2, 20_000), pmf)
    assert p_bad < 1e-6


def test_variance_with_se(rng):
    x = rng.standard_normal(40_000)
    var, se = variance_with_se(x)
    assert se == pytest.approx(math.sqrt(2 / 40_000), rel=0.05)
    assert abs(var - 1) <= 3 * se
