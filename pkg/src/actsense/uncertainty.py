"""Per-pair uncertainty scores driving sensor placement.

A pair's instantaneous score is the sum of two confidence-ellipsoid
widths: the home-factor width of the direction (appliance row ∘ season
row) under the home precision inverse, and the appliance-factor width
of (home row ∘ season row) under the appliance precision inverse, each
scaled by its alpha.  The integrated score sums instantaneous scores
over a 12-month horizon with a triangle time-decay kernel, using fitted
season rows for past/current months and prior season rows for future
months.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .als_engine import CONDITION_LIMIT, SufficientStats
from .errors import NumericalError
from .tensor_core import LatentFactors, ModelConfig

MODES = ("full", "current", "current_future")


@dataclass(frozen=True)
class ConfidenceParams:
    """Alphas and bound constants for uncertainty scoring.

    ``alpha_mode`` "fixed" uses ``alpha_home``/``alpha_app`` directly;
    "bound" means the caller derives them from the closed-form
    high-probability bound via :func:`factor_error_alphas` (requires
    caps and the q/epsilon convergence constants, each q_m + eps_m < 1).
    """

    alpha_mode: str = "fixed"
    alpha_home: float = 0.1
    alpha_app: float = 0.1
    delta: float = 0.05
    q_rates: tuple = (0.5, 0.5, 0.5)
    epsilons: tuple = (0.01, 0.01, 0.01)
    noise_sigma: float = 1.0
    caps: tuple | None = None

    def __post_init__(self):
        if self.alpha_mode not in ("fixed", "bound"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if len(self.q_rates) != 3 or len(self.epsilons) != 3:
            raise ValueError("q_rates and epsilons must have three entries")
        if self.alpha_mode == "bound":
            if any(q + e >= 1.0 for q, e in zip(self.q_rates, self.epsilons)):
                raise ValueError("each q + epsilon must be < 1 for bound mode")
            if self.caps is None:
                raise ValueError("bound mode requires caps (P, Q, R)")


@dataclass(frozen=True)
class KernelConfig:
    """Triangle kernel window (months) and scoring horizon."""

    sigma_window: int = 3
    horizon: int = 12

    def __post_init__(self):
        if self.sigma_window < 1:
            raise ValueError("sigma_window must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class InvertedStats:
    """Cached inverses of the fitted precision matrices."""

    home: np.ndarray    # (M, r, r)
    app: np.ndarray     # (N, r, r)
    season: np.ndarray  # (T, r, r)


def invert_stats(stats: SufficientStats) -> InvertedStats:
    """Invert all precision stacks once per fit; reused across pair scores."""
    for mats in (stats.home_precision, stats.app_precision, stats.season_precision):
        conds = np.linalg.cond(mats)
        worst = float(np.max(conds)) if conds.size else 1.0
        if not np.isfinite(worst) or worst > CONDITION_LIMIT:
            raise NumericalError(f"precision condition {worst:.3e} too large to invert")
    return InvertedStats(home=np.linalg.inv(stats.home_precision),
                         app=np.linalg.inv(stats.app_precision),
                         season=np.linalg.inv(stats.season_precision))


def _quadform(precision, v):
    cond = np.linalg.cond(precision)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericalError(f"precision condition {cond:.3e} too large")
    return float(v @ np.linalg.solve(precision, v))


def instant_score(x: int, y: int, s_tilde, stats: SufficientStats,
                  factors: LatentFactors, cp: ConfidenceParams) -> float:
    """Pair (x, y) uncertainty at one season vector s_tilde."""
    s_tilde = np.asarray(s_tilde, dtype=float)
    v_home = factors.A[y] * s_tilde
    v_app = factors.H[x] * s_tilde
    width_home = np.sqrt(_quadform(stats.home_precision[x], v_home))
    width_app = np.sqrt(_quadform(stats.app_precision[y], v_app))
    return float(cp.alpha_home * width_home + cp.alpha_app * width_app)


def factor_error_alphas(omega_size: int, cp: ConfidenceParams,
                        config: ModelConfig) -> tuple:
    """High-probability factor-error radii (alpha_home, alpha_app).

    Closed-form bound combining the self-normalized log term, the ridge
    bias sqrt(lambda)*cap, and geometric tails from the q-linear
    convergence constants.  Grows with the observation count.
    """
    if cp.caps is None:
        raise ValueError("caps (P, Q, R) are required to evaluate the bound")
    P, Q, R = cp.caps
    n = int(omega_size)
    fs = [q + e for q, e in zip(cp.q_rates, cp.epsilons)]
    if any(f >= 1.0 for f in fs):
        raise ValueError("geometric bound diverges: q + epsilon must be < 1")
    G = [f * (1.0 - f ** n) / (1.0 - f) if f > 0 else 0.0 for f in fs]
    r = config.rank

    def _one(lam, own_cap, num_cap_sq, tail_coeff, tail_G):
        log_term = np.sqrt(r * np.log((lam * r + n * num_cap_sq) / (lam * r * cp.delta)))
        return float(log_term + np.sqrt(lam) * own_cap + tail_coeff / np.sqrt(lam) * tail_G)

    alpha_home = _one(config.lambda1, P, (Q * R) ** 2, 2.0 * P * Q * Q * R * R, G[1] + G[2])
    alpha_app = _one(config.lambda2, Q, (P * R) ** 2, 2.0 * P * P * Q * R * R, G[0] + G[2])
    return alpha_home, alpha_app


def triangle_weight(t_prime: int, t: int, kc: KernelConfig) -> float:
    """Triangle kernel: 1 - |t' - t| / sigma inside the window, else 0."""
    lag = abs(t_prime - t)
    if lag <= kc.sigma_window:
        return 1.0 - lag / kc.sigma_window
    return 0.0


def _months_in_mode(t: int, kc: KernelConfig, mode: str):
    if mode not in MODES:
        raise ValueError(f"unknown uncertainty mode {mode!r}")
    if mode == "current":
        return [t] if 0 <= t < kc.horizon else []
    start = t if mode == "current_future" else 0
    return list(range(max(start, 0), kc.horizon))


def integrated_uncertainty(x: int, y: int, t: int, factors: LatentFactors,
                           stats: SufficientStats, season_prior: np.ndarray,
                           cp: ConfidenceParams, kc: KernelConfig,
                           mode: str = "full") -> float:
    """Kernel-weighted sum of instantaneous scores over the horizon.

    Months at or before ``t`` use the fitted season rows; later months
    use rows of ``season_prior``.  ``mode`` restricts which months
    contribute ("current", "current_future", or "full").
    """
    total = 0.0
    for tp in _months_in_mode(t, kc, mode):
        w = triangle_weight(tp, t, kc)
        if w == 0.0:
            continue
        if tp <= t:
            s_tilde = factors.S[tp]
        else:
            if season_prior is None or tp >= np.asarray(season_prior).shape[0]:
                raise ValueError(f"season prior row for future month {tp} is missing")
            s_tilde = np.asarray(season_prior, dtype=float)[tp]
        total += w * instant_score(x, y, s_tilde, stats, factors, cp)
    return total


def score_pairs(pairs, t: int, factors: LatentFactors, inv: InvertedStats,
                season_prior: np.ndarray | None, cp: ConfidenceParams,
                kc: KernelConfig, mode: str = "full") -> np.ndarray:
    """Vectorized integrated uncertainty for a list of (home, appliance) pairs."""
    if len(pairs) == 0:
        return np.zeros(0)
    xs = np.array([p[0] for p in pairs], dtype=np.int64)
    ys = np.array([p[1] for p in pairs], dtype=np.int64)
    inv_home = np.ascontiguousarray(inv.home[xs])
    inv_app = np.ascontiguousarray(inv.app[ys])
    h_rows = factors.H[xs]
    a_rows = factors.A[ys]
    total = np.zeros(len(pairs))
    for tp in _months_in_mode(t, kc, mode):
        w = triangle_weight(tp, t, kc)
        if w == 0.0:
            continue
        if tp <= t:
            s_tilde = factors.S[tp]
        else:
            if season_prior is None or tp >= np.asarray(season_prior).shape[0]:
                raise ValueError(f"season prior row for future month {tp} is missing")
            s_tilde = np.asarray(season_prior, dtype=float)[tp]
        v_home = np.ascontiguousarray(a_rows * s_tilde)
        v_app = np.ascontiguousarray(h_rows * s_tilde)
        q_home = _kernels.quadform_batch(inv_home, v_home)
        q_app = _kernels.quadform_batch(inv_app, v_app)
        total += w * (cp.alpha_home * np.sqrt(np.maximum(q_home, 0.0))
                      + cp.alpha_app * np.sqrt(np.maximum(q_app, 0.0)))
    return total


def error_bound(i: int, j: int, k: int, factors: LatentFactors,
                stats: SufficientStats, cp: ConfidenceParams,
                config: ModelConfig, t: int) -> float:
    """Diagnostic bound on |estimate - truth| for cell (i, j, k) at month t.

    Two ellipsoid widths plus geometric tail terms that decay with t.
    """
    if cp.caps is None:
        raise ValueError("caps (P, Q, R) are required for the error bound")
    P, Q, R = cp.caps
    q2, q3 = cp.q_rates[1], cp.q_rates[2]
    e2, e3 = cp.epsilons[1], cp.epsilons[2]
    widths = instant_score(i, j, factors.S[k], stats, factors, cp)
    tails = (4.0 * P * Q * R * (q2 + e2) ** (t + 1)
             + 2.0 * P * Q * R * (q3 + e3) ** (t + 1))
    return float(widths + tails)


def sherman_morrison_update(inv_mat: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Inverse of (A + v v^T) given inv(A), by the rank-one update formula."""
    v = np.asarray(v, dtype=float)
    iv = inv_mat @ v
    denom = 1.0 + float(v @ iv)
    return inv_mat - np.outer(iv, iv) / denom
