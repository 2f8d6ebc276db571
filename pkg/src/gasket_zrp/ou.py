"""Finite-mode generalized Ornstein-Uhlenbeck process.

In the eigenbasis of -Delta each coordinate solves

    dY_i = -beta lambda_i Y_i dt + sqrt(gamma lambda_i) dB_i,

independently across modes. Transitions are sampled exactly from the Gaussian
law, so there is no time-discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OuParams",
    "OuState",
    "ou_step",
    "moment_oracle",
    "field_evaluate",
    "martingale_residual",
    "simulate_ou",
    "MartingaleResidual",
]


@dataclass(frozen=True)
class OuParams:
    beta: float
    gamma: float
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", lam)
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("beta and gamma must be positive")
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("need at least one mode")
        if lam[0] != 0.0 or np.any(np.diff(lam) < 0) or np.any(lam < 0):
            raise ValueError("eigenvalues must ascend from lambda_0 = 0")

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def stationary_variance(self) -> float:
        """gamma / (2 beta): the variance of every mode with lambda > 0."""
        return self.gamma / (2.0 * self.beta)


@dataclass(frozen=True)
class OuState:
    """Mode coordinates at time t; ``y`` may carry leading replica axes."""

    t: float
    y: np.ndarray


def _transition(params: OuParams, dt: float):
    lam = params.eigenvalues
    decay = np.exp(-params.beta * lam * dt)
    # gamma lambda / (2 beta lambda) (1 - e^{-2 beta lambda dt}); the lambda_0 mode is inert
    var = params.stationary_variance * -np.expm1(-2.0 * params.beta * lam * dt)
    var[lam == 0.0] = 0.0
    return decay, np.sqrt(var)


def ou_step(state: OuState, params: OuParams, dt: float, rng) -> OuState:
    """Exact transition over ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    y = np.asarray(state.y, dtype=float)
    if y.shape[-1] != params.n_modes:
        raise ValueError(f"state has {y.shape[-1]} modes, params have {params.n_modes}")
    if dt == 0:
        return OuState(state.t, y.copy())
    decay, sd = _transition(params, dt)
    return OuState(state.t + dt, y * decay + sd * rng.standard_normal(y.shape))


def moment_oracle(params: OuParams, psi0, Psi0, t: float):
    """Closed-form second moments at time t.

    Parameters
    ----------
    psi0 : array, shape (K,)
        E[Y_i(0)**2].
    Psi0 : array, shape (K, K)
        E[Y_i(0) Y_j(0)]; its diagonal is ignored in favour of ``psi0``.

    Returns
    -------
    psi : array, shape (K,)
        E[Y_i(t)**2] = gamma/(2 beta) (1 - e^{-2 beta lambda_i t}) + psi_i(0) e^{-2 beta lambda_i t}
    Psi : array, shape (K, K)
        Off-diagonal E[Y_i(t) Y_j(t)] = Psi_ij(0) e^{-beta (lambda_i + lambda_j) t},
        with ``psi`` on the diagonal.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    lam = params.eigenvalues
    psi0 = np.asarray(psi0, dtype=float)
    Psi0 = np.asarray(Psi0, dtype=float)
    e2 = np.exp(-2.0 * params.beta * lam * t)
    psi = params.stationary_variance * (1.0 - e2) + psi0 * e2
    # the lambda_0 mode has no noise: its second moment is frozen
    psi = np.where(lam == 0.0, psi0, psi)
    Psi = Psi0 * np.exp(-params.beta * (lam[:, None] + lam[None, :]) * t)
    np.fill_diagonal(Psi, psi)
    return psi, Psi


def field_evaluate(state: OuState, coefficients) -> np.ndarray:
    """Y_t(f) = sum_i f_i y_i over the first ``len(y)`` coefficients."""
    y = np.asarray(state.y, dtype=float)
    c = np.asarray(coefficients, dtype=float)[: y.shape[-1]]
    return y[..., : len(c)] @ c


def simulate_ou(params: OuParams, y0, dt: float, n_steps: int, rng) -> np.ndarray:
    """Exact path on the grid ``k dt``; returns shape ``y0.shape[:-1] + (n_steps+1, K)``."""
    y0 = np.asarray(y0, dtype=float)
    decay, sd = _transition(params, dt)
    out = np.empty(y0.shape[:-1] + (n_steps + 1, params.n_modes))
    out[..., 0, :] = y0
    y = y0
    for k in range(1, n_steps + 1):
        y = y * decay + sd * rng.standard_normal(y.shape)
        out[..., k, :] = y
    return out


@dataclass(frozen=True)
class MartingaleResidual:
    times: np.ndarray
    martingale: np.ndarray
    quadratic_variation: np.ndarray

    def expected_qv(self, params: OuParams, coefficients) -> np.ndarray:
        c = np.asarray(coefficients, dtype=float)
        lam = params.eigenvalues[: len(c)]
        return params.gamma * float(np.sum(lam * c * c)) * self.times


def martingale_residual(path, times, coefficients, params: OuParams) -> MartingaleResidual:
    """M_t(f) = Y_t(f) - Y_0(f) - beta int_0^t Y_s(Delta f) ds and its realized QV.

    ``path`` has shape (..., T, K) on the uniform grid ``times``. Delta acts
    on coefficients as ``(Delta f)_k = -lambda_k f_k``. The drift integral uses
    the trapezoidal rule.
    """
    times = np.asarray(times, dtype=float)
    d = np.diff(times)
    if d.size and not np.allclose(d, d[0], rtol=1e-9, atol=1e-15):
        raise ValueError("martingale_residual needs a uniform time grid")
    path = np.asarray(path, dtype=float)
    c = np.asarray(coefficients, dtype=float)
    K = len(c)
    lam = params.eigenvalues[:K]
    Yf = path[..., :K] @ c
    YLf = path[..., :K] @ (-lam * c)
    integral = np.zeros_like(Yf)
    if d.size:
        integral[..., 1:] = np.cumsum(0.5 * (YLf[..., 1:] + YLf[..., :-1]) * d[0], axis=-1)
    M = Yf - Yf[..., :1] - params.beta * integral
    qv = np.zeros_like(M)
    qv[..., 1:] = np.cumsum(np.diff(M, axis=-1) ** 2, axis=-1)
    return MartingaleResidual(times=times, martingale=M, quadratic_variation=qv)
