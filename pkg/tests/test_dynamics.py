import math
import numpy as np
import pytest
from scipy import stats

from gasket_zrp import kernels
from gasket_zrp.analysis import make_probes, marginal_chisquare
from gasket_zrp.energy import discrete_laplacian
from gasket_zrp.gasket import build_gasket
from gasket_zrp.rng import replica_rng
from gasket_zrp.spectrum import eigendecompose
from gasket_zrp.verify import _conditioned_product, brute_force_stationary
from gasket_zrp.zrp import (
    LinearGrowthWarning,
    Probes,
    ZrpConfiguration,
    constant_rate,
    linear_rate,
    run,
    sample_equilibrium,
    simulate_replicas,
    solve_fugacity,
    step,
    step_rate,
)

G = {n: build_gasket(n) for n in range(5)}


def _probes(n, profile):
    b = eigendecompose(G[n])
    f = b.mode(1)
    return make_probes(G[n], profile, {"v1": f}, bg={"v1": f})


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="compiled kernel not built")
def test_backends_bit_identical():
    profile = solve_fugacity(step_rate(0.5), 1.2)
    probes = _probes(3, profile)
    out = {}
    for backend in ("cython", "python"):
        rng = replica_rng(3, 1)
        cfg = sample_equilibrium(profile, G[3], rng)
        samples, log = run(cfg, profile.model, 0.3, [0.0, 0.1, 0.3], probes=probes, rng=rng,
                           backend=backend, event_log=500)
        out[backend] = (cfg.eta.copy(), cfg.clock, cfg.events, samples, log)
    a, b = out["cython"], out["python"]
    assert np.array_equal(a[0], b[0]) and a[1] == b[1] and a[2] == b[2]
    for sa, sb in zip(a[3], b[3]):
        for fa, fb in zip(sa, sb):
            assert np.array_equal(np.asarray(fa), np.asarray(fb))
    assert np.array_equal(a[4][0], b[4][0]) and np.array_equal(a[4][1], b[4][1])


def test_backend_env_selection():
    assert kernels.BACKEND in kernels.available_backends()
    assert kernels.get_backend("python") is kernels._kmc_py.advance
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_conservation_and_sampling_contract():
    profile = solve_fugacity(step_rate(0.5), 1.0)
    rng = replica_rng(1, 0)
    cfg = sample_equilibrium(profile, G[3], rng)
    n0 = cfg.particle_count
    times = np.linspace(0, 0.5, 11)
    seen = run(cfg, profile.model, 0.5, times, lambda s, c, smp: (s, c.particle_count, c.clock), rng=rng)
    assert [s for s, _, _ in seen] == pytest.approx(times.tolist())
    assert all(p == n0 for _, p, _ in seen)
    for s, _, clock in seen:
        assert clock <= 5**3 * s + 1e-9
    assert cfg.clock == pytest.approx(5**3 * 0.5)
    with pytest.raises(ValueError):
        run(cfg, profile.model, 1.0, [0.5, 0.2])
    with pytest.raises(ValueError):
        run(cfg, profile.model, 1.0, [2.0])


def test_zero_horizon_sees_initial_state():
    profile = solve_fugacity(linear_rate(), 1.0)
    rng = replica_rng(2, 0)
    cfg = sample_equilibrium(profile, G[2], rng)
    eta0 = cfg.eta.copy()
    seen = run(cfg, profile.model, 0.0, [0.0], lambda s, c, smp: c.eta.copy(), rng=rng)
    assert len(seen) == 1 and np.array_equal(seen[0], eta0)
    assert cfg.events == 0


def test_rates_consistent_after_a_million_events():
    model = step_rate(0.5)
    profile = solve_fugacity(model, 1.0)
    rng = replica_rng(4, 0)
    cfg = sample_equilibrium(profile, G[3], rng)
    horizon = 0.0
    while cfg.events < 1_000_000:
        run(cfg, model, 10.0, [], rng=rng)
        horizon += 10.0
        assert cfg.check_rates()
    assert np.array_equal(cfg.tree[len(cfg.tree) // 2:][: G[3].n_vertices], cfg.site_rates())


def test_corner_particle_waits_exp2():
    g = G[2]
    corner = g.index_of(0, 0)
    eta = np.zeros(g.n_vertices, dtype=np.int64)
    eta[corner] = 1
    rng = np.random.default_rng(99)
    dts, dests = [], []
    for _ in range(4000):
        cfg = ZrpConfiguration(g, eta)
        ev = step(cfg, linear_rate(), rng)
        assert ev.source == corner
        dts.append(ev.dt)
        dests.append(ev.target)
    assert stats.kstest(dts, stats.expon(scale=0.5).cdf).pvalue > 1e-3
    nbrs = sorted(int(y) for y in g.neighbors[corner] if y >= 0)
    assert sorted(set(dests)) == nbrs
    assert stats.binomtest(dests.count(nbrs[0]), len(dests), 0.5).pvalue > 1e-3


def test_absorbing_state():
    cfg = ZrpConfiguration(G[2], np.zeros(G[2].n_vertices, dtype=np.int64))
    assert step(cfg, linear_rate(), np.random.default_rng(0)) is None
    out = run(cfg, linear_rate(), 1.0, [0.5, 1.0], rng=0)
    assert cfg.events == 0 and len(out) == 2


def test_zero_density_gives_empty_configuration():
    cfg = sample_equilibrium(solve_fugacity(linear_rate(), 0.0), G[3], 1)
    assert cfg.particle_count == 0


def test_equilibrium_sampler():
    profile = solve_fugacity(linear_rate(), 3.0)
    eta = np.concatenate([sample_equilibrium(profile, G[4], replica_rng(6, r)).eta for r in range(82)])
    assert abs(eta.mean() - 3.0) <= 3 * math.sqrt(3.0 / len(eta))
    a = sample_equilibrium(profile, G[4], 77).eta
    b = sample_equilibrium(profile, G[4], 77).eta
    assert np.array_equal(a, b)


def test_event_count_concentrates():
    profile = solve_fugacity(step_rate(0.5), 1.0)
    n, T = 3, 0.2
    counts = []
    for r in range(40):
        rng = replica_rng(8, r)
        cfg = sample_equilibrium(profile, G[n], rng)
        run(cfg, profile.model, T, [], rng=rng)
        counts.append(cfg.events)
    expected = 5**n * T * float(np.sum(G[n].degree)) * profile.phi
    counts = np.array(counts, dtype=float)
    assert abs(counts.mean() - expected) <= 3 * counts.std(ddof=1) / math.sqrt(len(counts))


def test_event_exact_quadrature_matches_log_replay():
    profile = solve_fugacity(step_rate(0.5), 1.0)
    n = 3
    probes = _probes(n, profile)
    rng = replica_rng(9, 0)
    cfg = sample_equilibrium(profile, G[n], rng)
    eta = cfg.eta.copy()
    T = 0.05
    (smp,), (xy, t) = run(cfg, profile.model, T, [T], probes=probes, rng=rng, event_log=100_000)
    assert len(t) == cfg.events
    g, w = probes.channels["bg:v1"]
    tab = g(np.arange(cfg.particle_count + 2))
    f = probes.fields["v1"] * 3.0 ** (-n / 2)
    acc, prev, Z = 0.0, 0.0, float(f @ (eta - profile.rho))
    qv, jmax = 0.0, 0.0
    for (x, y), tk in zip(xy, t):
        acc += float(w @ tab[eta]) * (tk - prev)
        prev = tk
        eta[x] -= 1
        eta[y] += 1
        d = f[y] - f[x]
        Z += d
        qv += d * d
        jmax = max(jmax, abs(d))
    acc += float(w @ tab[eta]) * (5**n * T - prev)
    assert np.array_equal(eta, cfg.eta)
    k = probes.channel_labels.index("bg:v1")
    assert smp.integrals[k] == pytest.approx(acc / 5**n, rel=1e-9, abs=1e-12)
    assert smp.qv[0] == pytest.approx(qv, rel=1e-12)
    assert smp.jump_max[0] == jmax
    assert smp.fields[0] == pytest.approx(float(f @ (cfg.eta - profile.rho)), abs=1e-12)
    assert Z == pytest.approx(smp.fields[0], abs=1e-9)


def test_linear_compensator_is_field_of_laplacian():
    c = 2.0
    profile = solve_fugacity(linear_rate(c), 1.0)
    n = 3
    f = eigendecompose(G[n]).mode(2)
    probes = make_probes(G[n], profile, {"f": f}, predictable_qv=False)
    probes.fields["lap"] = discrete_laplacian(f, G[n])
    rng = replica_rng(10, 0)
    cfg = sample_equilibrium(profile, G[n], rng)
    out = run(cfg, profile.model, 0.2, np.linspace(0, 0.2, 21), probes=probes, rng=rng)
    for smp in out:
        comp = smp.channels[probes.channel_labels.index("comp:f")]
        assert comp == pytest.approx(profile.dphi * smp.fields[1], rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("model_fn", [linear_rate, lambda: step_rate(0.5), lambda: step_rate(3.0)])
def test_brute_force_stationarity(model_fn):
    model = model_fn()
    for N in (1, 2, 3):
        states, pi = brute_force_stationary(G[1], model, N)
        assert np.max(np.abs(pi - _conditioned_product(states, model, N))) <= 1e-10


def test_constant_rate_runs_with_warning():
    with pytest.warns(LinearGrowthWarning):
        model = constant_rate(1.0)
    profile = solve_fugacity(model, 1.0)
    cfg = sample_equilibrium(profile, G[2], 0)
    run(cfg, model, 0.1, [], rng=1)
    assert cfg.check_rates()


def test_stationary_marginals_level2():
    profile = solve_fugacity(linear_rate(), 1.0)
    times = [0.5, 1.0, 2.0]
    snaps = {t: [] for t in times}
    for r in range(60):
        rng = replica_rng(11, r)
        cfg = sample_equilibrium(profile, G[2], rng)
        for s, e in run(cfg, profile.model, 2.0, times, lambda s, c, smp: (s, c.eta.copy()), rng=rng):
            snaps[s].append(e)
    for t in times:
        _, _, p = marginal_chisquare(np.concatenate(snaps[t]), profile.pmf)
        assert p > 1e-3


def test_replicas_independent_of_workers():
    profile = solve_fugacity(step_rate(0.5), 1.0)
    probes = _probes(3, profile)
    times = np.linspace(0, 0.1, 6)
    a = simulate_replicas(G[3], profile, probes, 0.1, times, 6, 42, workers=1)
    b = simulate_replicas(G[3], profile, probes, 0.1, times, 6, 42, workers=3)
    assert np.array_equal(a.fields, b.fields) and np.array_equal(a.integrals, b.integrals)
    assert a.metadata["rng"].startswith("numpy PCG64")
    assert a.metadata["level"] == 3


def test_probes_default_empty():
    p = Probes(rho=1.0)
    assert p.field_labels == [] and p.channel_labels == []


def test_configuration_validation():
    with pytest.raises(ValueError):
        ZrpConfiguration(G[1], [0, 0, 0])
    with pytest.raises(ValueError):
        ZrpConfiguration(G[1], [0, -1, 0, 0, 0, 0])



def test_fallback_selected_by_environment():
    import os
    import subprocess
    import sys

    env = dict(os.environ, GASKET_ZRP_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import gasket_zrp; print(gasket_zrp.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env["GASKET_ZRP_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", "import gasket_zrp"], env=env, capture_output=True, text=True)
    assert bad.returncode != 0 and "GASKET_ZRP_BACKEND" in bad.stderr
