"""Closed forms and exact Monte Carlo for the drifted lognormal market sequence.

Market n has horizon T and stock dS/S = dW + dt / (T sqrt(T - t + alpha)),
alpha = exp(-T^(2+eps)), S_0 = 1. Everything that depends on alpha is
evaluated through ``log_alpha = -T^(2+eps)``: alpha itself underflows to zero
once T is around 16 and the naive formulas lose all meaning well before that.

Internally the time-to-maturity ``u = T - t`` is the working variable; the
interesting window ``[t*, T]`` has width ``exp(-T^2)``, which vanishes next to
T in floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .parallel import map_ordered

MC_BATCH = 1 << 16
_STD_NORMAL = NormalDist()


def norm_cdf(x):
    """Standard normal CDF through erfc, accurate in both tails."""
    if np.ndim(x):
        return np.vectorize(norm_cdf, otypes=[float])(x)
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    return _STD_NORMAL.inv_cdf(p)


@dataclass(frozen=True)
class ExampleSixParams:
    T: float
    eps: float
    gamma: float = 0.4
    lam: float = 0.0

    def __post_init__(self):
        if not self.T > 0 or not self.eps > 0:
            raise ValueError("horizon and exponent must be positive")
        if math.exp(-self.T**2) >= self.T:
            raise ValueError(f"T={self.T} too small: the modified-drift window exp(-T^2) must fit in [0, T]")
        if not 0 < self.gamma < 0.5:
            raise ValueError(f"gamma={self.gamma} must lie in (0, 1/2)")
        if not 0 <= self.lam < 1:
            raise ValueError(f"lambda={self.lam} must lie in [0, 1)")

    @property
    def log_alpha(self) -> float:
        return -(self.T ** (2 + self.eps))

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @property
    def tail_length(self) -> float:
        """Width of the window where the shadow drift differs, exp(-T^2)."""
        return math.exp(-self.T**2)

    @property
    def t_star(self) -> float:
        return self.T - self.tail_length

    def with_lambda(self, lam: float) -> "ExampleSixParams":
        return ExampleSixParams(self.T, self.eps, self.gamma, lam)


def _check_time(p: ExampleSixParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > p.T):
        raise ValueError(f"time outside [0, {p.T}]")
    return t


def _log1p_exp(k: float) -> float:
    return float(np.logaddexp(0.0, k))


def _tail_log1p(p: ExampleSixParams) -> float:
    """log(1 + exp(-T^2 (T^eps - 1)))."""
    return _log1p_exp(-(p.T**2) * (p.T**p.eps - 1.0))


def _log_T_plus_alpha(p: ExampleSixParams) -> float:
    return math.log(p.T) + math.log1p(p.alpha / p.T)


def drift_integral(p: ExampleSixParams, t):
    """Integral of the drift over [0, t]: (2/T)(sqrt(T+a) - sqrt(T-t+a))."""
    t = _check_time(p, t)
    a = p.alpha
    out = (2.0 / p.T) * t / (np.sqrt(p.T + a) + np.sqrt(p.T - t + a))
    return float(out) if out.ndim == 0 else out


def novikov_value(p: ExampleSixParams) -> float:
    """Variance of the log-density of the unique martingale measure."""
    return _log_T_plus_alpha(p) / p.T**2 + p.T**p.eps


def gamma_n(p: ExampleSixParams) -> float:
    log_g = math.log(2.0 / p.T) - p.T**2 / 2 + 0.5 * _tail_log1p(p)
    return math.exp(log_g)


def lambda_threshold(p: ExampleSixParams) -> float:
    return -2.0 * math.expm1(-gamma_n(p))


def _log_x(p: ExampleSixParams, u) -> np.ndarray:
    """log(u + alpha) without forming alpha."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return np.logaddexp(np.log(u), p.log_alpha)


def _log_c(p: ExampleSixParams) -> float:
    """log(exp(-T^2) + alpha)."""
    return -(p.T**2) + _tail_log1p(p)


def _shadow_log_ratio_u(p: ExampleSixParams, u) -> np.ndarray:
    """log(S~/S) as a function of time to maturity u, via the antiderivatives."""
    u = np.asarray(u, dtype=float)
    T2 = p.T**2
    k = (T2 + 1.0) / (2.0 * T2)  # 1 - p with p = (1 - 1/T^2)/2
    lx, lc = _log_x(p, u), _log_c(p)
    modified = (np.exp(k * lc) - np.exp(k * lx)) / k
    plain = 2.0 * (np.exp(0.5 * lc) - np.exp(0.5 * lx))
    r = (modified - plain) / p.T
    return np.where(u < p.tail_length, r, 0.0)


def _i_n_u(p: ExampleSixParams, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    T2 = p.T**2
    shrink = 1.0 + 1.0 / T2

    def term(log_y):
        return (2.0 / p.T) * np.exp(0.5 * log_y) * (1.0 - np.exp(log_y / (2.0 * T2)) / shrink)

    out = term(_log_x(p, u)) - term(_log_c(p))
    return np.where(u < p.tail_length, out, 0.0)


def _as_output(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def shadow_log_ratio(p: ExampleSixParams, t):
    """log(S~_t / S_t): zero up to t*, then the accumulated drift difference."""
    t = _check_time(p, t)
    return _as_output(_shadow_log_ratio_u(p, p.T - t))


def i_n(p: ExampleSixParams, t):
    """Two-term closed form of log(S~/S) on [t*, T]; zero before t*."""
    t = _check_time(p, t)
    return _as_output(_i_n_u(p, p.T - t))


@dataclass(frozen=True)
class CpsConstants:
    lambda_prime: float
    c_lambda: float
    epsilon_n: float  # log(1 + lambda'), the binding side
    delta_n: float  # -log(1 - lambda')


def cps_constants(lam: float) -> CpsConstants:
    if not 0 <= lam < 1:
        raise ValueError(f"lambda={lam} must lie in [0, 1)")
    lp = lam / (2.0 - lam)
    # log(2 / (2 - lam)) written so it survives lam of order 1e-60
    return CpsConstants(lp, (2.0 - lam) / 2.0, -math.log1p(-lam / 2.0), -math.log1p(-lp))


def containment_margin(p: ExampleSixParams, grid_points: int = 10_000,
                       times: Optional[Sequence[float]] = None) -> float:
    """min over the grid of min(eps_n - R, R + delta_n) with R = log(S~/S).

    Nonnegative iff (1 - lambda) S <= c(lambda) S~ <= S at every grid time.
    The default grid is ``grid_points`` uniform points on [t*, T] plus 0 and t*.
    """
    k = cps_constants(p.lam)
    if times is not None:
        r = np.atleast_1d(shadow_log_ratio(p, np.asarray(times, dtype=float)))
    else:
        if grid_points < 2:
            raise ValueError("need at least two grid points")
        u = np.concatenate([np.linspace(0.0, p.tail_length, grid_points), [p.T]])
        r = _shadow_log_ratio_u(p, u)
    return float(np.min(np.minimum(k.epsilon_n - r, r + k.delta_n)))


def tilde_novikov(p: ExampleSixParams) -> float:
    """Variance of the log-density for the shadow-price martingale measure."""
    T2 = p.T**2
    l1 = _tail_log1p(p)
    return (_log_T_plus_alpha(p) + T2 - l1) / T2 + math.exp(-1.0 + l1 / T2) - math.exp(-(p.T**p.eps))


def zeta_n(p: ExampleSixParams) -> float:
    """Second moment of the shadow measure's density, exp(tilde_novikov)."""
    return math.exp(tilde_novikov(p))


def zeta_limit() -> float:
    return math.exp(1.0 + math.exp(-1.0))


def p_An_closed(p: ExampleSixParams) -> float:
    return norm_cdf((0.5 - p.gamma) * math.sqrt(novikov_value(p)))


def q_An_closed(p: ExampleSixParams) -> float:
    """Q(A_n) = E_P[Z 1_{A_n}]; under Q the log-density is N(v/2, v)."""
    return norm_cdf(-(0.5 + p.gamma) * math.sqrt(novikov_value(p)))


def q_An_bound(p: ExampleSixParams) -> float:
    """Density cap on A_n; Q(A_n) < bound * P(A_n)."""
    return math.exp(-p.gamma * novikov_value(p))


@dataclass(frozen=True)
class McEstimate:
    value: float
    standard_error: float
    n_paths: int
    seed: int

    def z_score(self, target: float) -> float:
        if self.standard_error == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.standard_error


@dataclass(frozen=True)
class TerminalEstimates:
    density_mean: McEstimate  # E[Z], should be 1
    p_A: McEstimate
    q_A: McEstimate  # E[Z 1_A]
    tilde_second_moment: McEstimate  # E[Z~^2], should be zeta_n


def _rng(seed: int, key: tuple) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _batches(n_paths: int) -> list[tuple[int, int]]:
    return [(b, min(MC_BATCH, n_paths - b * MC_BATCH)) for b in range((n_paths + MC_BATCH - 1) // MC_BATCH)]


def mc_terminal(p: ExampleSixParams, n_paths: int, seed: int, stream: tuple = ()) -> TerminalEstimates:
    """Exact terminal sampling: the stochastic integrals have deterministic
    integrands, so their laws are centred Gaussians with the Novikov variances."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    v = novikov_value(p)
    vt = tilde_novikov(p)
    log_cut = -p.gamma * v

    def batch(item):
        b, n = item
        rng = _rng(seed, (*stream, b))
        x = math.sqrt(v) * rng.standard_normal(n)
        xt = math.sqrt(vt) * rng.standard_normal(n)
        log_z = -x - v / 2
        z = np.exp(log_z)
        in_a = log_z < log_cut
        cols = np.vstack([z, in_a.astype(float), z * in_a, np.exp(-2 * xt - vt)])
        return cols.sum(axis=1), (cols**2).sum(axis=1)

    sums = np.zeros(4)
    squares = np.zeros(4)
    for s1, s2 in map_ordered(batch, _batches(n_paths)):
        sums += s1
        squares += s2
    mean = sums / n_paths
    if n_paths > 1:
        var = np.maximum(squares - n_paths * mean**2, 0.0) / (n_paths - 1)
        se = np.sqrt(var / n_paths)
    else:
        se = np.zeros(4)
    est = [McEstimate(float(m), float(s), n_paths, seed) for m, s in zip(mean, se)]
    return TerminalEstimates(*est)


def path_grid(p: ExampleSixParams, n_paths: int, grid_points: int, seed: int,
              noise_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Stock paths S_t = exp(W_t - t/2 + D(t)) on a uniform grid, shape (n_paths, grid_points).

    ``noise_scale`` multiplies W; 0 gives the deterministic skeleton.
    """
    if grid_points < 2:
        raise ValueError("need at least two grid points")
    times = np.linspace(0.0, p.T, grid_points)
    skeleton = -times / 2 + drift_integral(p, times)
    dt = np.diff(times)

    def batch(item):
        b, n = item
        rng = _rng(seed, (b,))
        dw = rng.standard_normal((n, grid_points - 1)) * np.sqrt(dt)
        w = np.hstack([np.zeros((n, 1)), np.cumsum(dw, axis=1)])
        return np.exp(noise_scale * w + skeleton)

    paths = np.vstack(map_ordered(batch, _batches(n_paths)))
    return times, paths


@dataclass(frozen=True)
class ClosedFormRow:
    novikov: float
    gamma_n: float
    lambda_threshold: float
    c_lambda: float
    epsilon_n: float
    delta_n: float
    zeta_n: float
    pA_closed: float
    qA_closed: float
    qA_bound: float
    t_star: float
    containment_margin: float


def closed_form_row(p: ExampleSixParams, grid_points: int = 10_000) -> ClosedFormRow:
    k = cps_constants(p.lam)
    return ClosedFormRow(
        novikov=novikov_value(p),
        gamma_n=gamma_n(p),
        lambda_threshold=lambda_threshold(p),
        c_lambda=k.c_lambda,
        epsilon_n=k.epsilon_n,
        delta_n=k.delta_n,
        zeta_n=zeta_n(p),
        pA_closed=p_An_closed(p),
        qA_closed=q_An_closed(p),
        qA_bound=q_An_bound(p),
        t_star=p.t_star,
        containment_margin=containment_margin(p, grid_points),
    )
