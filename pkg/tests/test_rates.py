import math
import warnings

import numpy as np
import pytest
from scipy import stats

from gasket_zrp.zrp import (
    LinearGrowthWarning,
    SeriesDivergenceError,
    constant_rate,
    linear_rate,
    parse_rate_model,
    solve_fugacity,
    step_rate,
    table_rate,
)
from gasket_zrp.zrp.rates import TAIL_TOL, RateModel


def quiet(fn, *a, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinearGrowthWarning)
        return fn(*a, **kw)


def test_poisson_closed_form():
    p = solve_fugacity(linear_rate(), 2.0)
    assert p.phi == pytest.approx(2.0, rel=1e-12)
    assert p.Z == pytest.approx(math.exp(2.0), rel=1e-10)
    assert p.chi == pytest.approx(2.0, rel=1e-10)
    assert p.dphi == pytest.approx(1.0, rel=1e-10)
    k = np.arange(len(p.pmf))
    assert np.allclose(p.pmf, stats.poisson.pmf(k, 2.0), rtol=1e-10, atol=1e-300)
    assert 1.0 - p.pmf.sum() < TAIL_TOL


def test_geometric_closed_form():
    with pytest.warns(LinearGrowthWarning):
        model = constant_rate(1.0)
    assert not model.linear_growth_ok
    p = solve_fugacity(model, 1.0)
    assert p.phi == pytest.approx(0.5, rel=1e-9)
    assert p.chi == pytest.approx(2.0, rel=1e-8)
    assert p.dphi == pytest.approx(0.25, rel=1e-8)
    k = np.arange(len(p.pmf))
    assert np.allclose(p.pmf, 0.5 ** (k + 1), rtol=1e-8, atol=1e-300)


def test_zero_density():
    p = solve_fugacity(linear_rate(), 0.0)
    assert (p.phi, p.chi) == (0.0, 0.0)
    assert p.pmf.tolist() == [1.0]


@pytest.mark.parametrize("model_fn,rho", [
    (lambda: step_rate(0.5), 0.3), (lambda: step_rate(0.5), 1.5),
    (lambda: step_rate(2.0), 1.0), (lambda: linear_rate(3.0), 0.7),
])
def test_profile_consistency(model_fn, rho):
    model = quiet(model_fn)
    p = solve_fugacity(model, rho)
    assert p.mean(lambda k: k) == pytest.approx(rho, rel=1e-9)
    assert p.mean(lambda k: model.table(len(k))) == pytest.approx(p.phi, rel=1e-9)
    assert p.mean(lambda k: (k - rho) ** 2) == pytest.approx(p.chi, rel=1e-8)
    assert p.dphi == pytest.approx(p.phi / p.chi, rel=1e-12)
    # phi' against a numerical derivative of phi(rho)
    d = 1e-5
    num = (solve_fugacity(model, rho + d).phi - solve_fugacity(model, rho - d).phi) / (2 * d)
    assert p.dphi == pytest.approx(num, rel=1e-5)
    # the Boltzmann-Gibbs remainder is orthogonal to 1 and to eta
    br = lambda k: p.bracket_table(len(k))  # noqa: E731
    assert p.mean(br) == pytest.approx(0.0, abs=1e-9)
    assert p.mean(lambda k: br(k) * (k - rho)) == pytest.approx(0.0, abs=1e-8)
    assert 1.0 - p.pmf.sum() < 1e-11


def test_linear_bracket_is_identically_zero():
    p = solve_fugacity(linear_rate(2.0), 1.3)
    assert np.all(p.bracket_table(50) == 0.0)
    assert p.phi == 2.0 * 1.3 and p.dphi == 2.0 and p.chi == 1.3


def test_step_bracket_nonzero():
    p = solve_fugacity(step_rate(0.5), 1.0)
    assert np.max(np.abs(p.bracket_table(10))) > 0.1


def test_invalid_rates():
    with pytest.raises(ValueError):
        RateModel(h=lambda k: k + 1.0, eps0=0.5, name="bad")
    with pytest.raises(ValueError):
        RateModel(h=lambda k: np.where(k == 3, 0.0, k * 1.0), eps0=0.5, name="bad")
    with pytest.raises(ValueError):
        solve_fugacity(linear_rate(), -1.0)


def test_growth_check():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert linear_rate(2.0).linear_growth_ok
        assert step_rate(0.5).linear_growth_ok
    assert step_rate(0.5).lipschitz == pytest.approx(1.5)


def test_divergence_reported():
    model = quiet(constant_rate, 1.0)
    with pytest.raises(SeriesDivergenceError):
        solve_fugacity(model, 1e5)


def test_parse_rate_model(tmp_path):
    assert parse_rate_model("linear").slope == 1.0
    assert parse_rate_model("linear:2.5").slope == 2.5
    assert quiet(parse_rate_model, "constant:2")(np.array([0, 1, 5])).tolist() == [0.0, 2.0, 2.0]
    assert parse_rate_model("step:0.5")(np.array([0, 1, 2])).tolist() == [0.0, 1.5, 2.5]
    f1 = tmp_path / "h.txt"
    f1.write_text("# h values\n0\n1.5\n2.5\n3.5\n")
    m = parse_rate_model(f"custom:{f1}")
    assert m(np.array([0, 1, 3, 5])).tolist() == [0.0, 1.5, 3.5, 5.5]
    f2 = tmp_path / "h2.txt"
    f2.write_text("0 0\n1 1\n2 2\n")
    assert parse_rate_model(f"custom:{f2}")(np.array([4])).tolist() == [4.0]
    with pytest.raises(ValueError):
        parse_rate_model("quadratic")


def test_table_rate_matches_step():
    t = table_rate([0, 1.5, 2.5, 3.5], name="t")
    s = step_rate(0.5)
    k = np.arange(100)
    assert np.array_equal(t(k), s(k))
    assert solve_fugacity(t, 1.0).phi == pytest.approx(solve_fugacity(s, 1.0).phi, rel=1e-12)
