"""Alternating ridge fits of the CP factors.

Each factor row has a closed-form update: accumulate the ridge normal
equations from the observed cells that touch the row (outer products of
the hadamard of the other two factors' rows), solve the small r x r
system, then project onto the nonnegative norm-capped feasible set.
A sweep updates all home rows, then all appliance rows, then all season
rows, rebuilding the sufficient statistics from the current factors
before each block family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError
from .tensor_core import EnergyTensor, LatentFactors, ModelConfig, ObservationSet

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SufficientStats:
    """Per-row ridge normal equations for all three factor families.

    Precisions are stacked r x r matrices (lambda*I plus accumulated
    outer products, hence symmetric positive definite); rhs vectors are
    the matching weighted sums.
    """

    home_precision: np.ndarray   # (M, r, r)
    home_rhs: np.ndarray         # (M, r)
    app_precision: np.ndarray    # (N, r, r)
    app_rhs: np.ndarray          # (N, r)
    season_precision: np.ndarray  # (T, r, r)
    season_rhs: np.ndarray       # (T, r)


@dataclass(frozen=True)
class FitReport:
    sweeps_run: int
    objective_trace: tuple
    converged: bool


def resolve_caps(tensor: EnergyTensor, config: ModelConfig) -> tuple:
    """Row-norm caps (P, Q, R): configured values, or derived from data."""
    if config.norm_caps is not None:
        return config.norm_caps
    peak = float(tensor.readings.max()) if tensor.readings.size else 1.0
    cap = 10.0 * max(peak, 1.0) ** (1.0 / 3.0)
    return (cap, cap, cap)


def init_factors(tensor: EnergyTensor, config: ModelConfig, caps: tuple) -> LatentFactors:
    """Seeded random factors, each row uniform on (0, 1]^r rescaled to norm cap/2."""
    rng = np.random.default_rng(config.seed)
    mats = []
    dims = (tensor.num_homes, tensor.num_appliances, tensor.num_months)
    for n, cap in zip(dims, caps):
        m = 1.0 - rng.random((n, config.rank))
        m *= (cap / 2.0) / np.linalg.norm(m, axis=1, keepdims=True)
        mats.append(m)
    return LatentFactors(H=mats[0], A=mats[1], S=mats[2], rank=config.rank)


def _family(vecs, weights, idx, n_rows, lam, rank):
    if len(idx) == 0:
        return (np.tile(lam * np.eye(rank), (n_rows, 1, 1)),
                np.zeros((n_rows, rank)))
    vecs = np.ascontiguousarray(vecs, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return _kernels.accumulate_outer(vecs, weights, idx, n_rows, lam)


def accumulate_stats(tensor: EnergyTensor, omega: ObservationSet,
                     factors: LatentFactors, config: ModelConfig) -> SufficientStats:
    """Build all three families of normal equations from the same factors."""
    omega.check_bounds(tensor)
    ii, jj, kk = omega.arrays()
    e = tensor.readings[ii, jj, kk]
    r = config.rank
    M, N, T = tensor.readings.shape
    hp, hr = _family(factors.A[jj] * factors.S[kk], e, ii, M, config.lambda1, r)
    ap, ar = _family(factors.H[ii] * factors.S[kk], e, jj, N, config.lambda2, r)
    sp, sr = _family(factors.H[ii] * factors.A[jj], e, kk, T, config.lambda3, r)
    return SufficientStats(home_precision=hp, home_rhs=hr,
                           app_precision=ap, app_rhs=ar,
                           season_precision=sp, season_rhs=sr)


def solve_block(precision, rhs, prior_term=None, lambda_for_prior: float = 0.0):
    """Solve one row subproblem: precision^-1 (rhs + lambda_for_prior * prior)."""
    precision = np.asarray(precision, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    cond = np.linalg.cond(precision)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericalError(f"precision matrix condition {cond:.3e} exceeds "
                             f"{CONDITION_LIMIT:.0e}")
    b = rhs if prior_term is None else rhs + lambda_for_prior * np.asarray(prior_term, dtype=float)
    try:
        return np.linalg.solve(precision, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc


def _solve_family(precision, rhs):
    conds = np.linalg.cond(precision)
    worst = float(np.max(conds)) if conds.size else 1.0
    if not np.isfinite(worst) or worst > CONDITION_LIMIT:
        raise NumericalError(f"precision matrix condition {worst:.3e} exceeds "
                             f"{CONDITION_LIMIT:.0e}")
    try:
        return np.linalg.solve(precision, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc


def project(v, cap: float):
    """Clamp negatives to zero, then rescale onto the norm-cap ball."""
    if cap <= 0:
        raise ValueError("cap must be positive")
    out = np.maximum(np.asarray(v, dtype=float), 0.0)
    norm = np.linalg.norm(out)
    if norm > cap:
        out = out * (cap / norm)
    return out


def _project_rows(mat, cap):
    out = np.maximum(mat, 0.0)
    norms = np.linalg.norm(out, axis=1)
    scale = np.where(norms > cap, cap / np.where(norms > 0, norms, 1.0), 1.0)
    return out * scale[:, None]


DEAD_COLUMN_RTOL = 1e-5


def _dead_columns(mat) -> np.ndarray:
    """Columns so small relative to the largest that their component is
    numerically gone (and about to make the next precision singular)."""
    norms = np.linalg.norm(mat, axis=0)
    peak = norms.max()
    if peak == 0.0:
        return np.ones(mat.shape[1], dtype=bool)
    return norms <= DEAD_COLUMN_RTOL * peak


def _revive_columns(mat, fresh_mat) -> bool:
    """Reseed dead columns in place; True when anything changed.

    A component with a (near-)zero column in any factor matrix is a
    fixed point of the updates: its rank-1 designs vanish, every solve
    returns zero for it, and no amount of new readings can move it.  It
    also drives the precision condition number through the guard.
    Reseeding from the fit's deterministic fresh init breaks the trap.
    """
    dead = _dead_columns(mat)
    if not dead.any():
        return False
    mat[:, dead] = fresh_mat[:, dead]
    return True


def _revive_dead_components(factors: LatentFactors, fresh: LatentFactors) -> LatentFactors:
    """Warm-start variant of the column revival, returning new factors."""
    H, A, S = factors.H.copy(), factors.A.copy(), factors.S.copy()
    changed = False
    for mat, fresh_mat in ((H, fresh.H), (A, fresh.A), (S, fresh.S)):
        changed |= _revive_columns(mat, fresh_mat)
    if not changed:
        return factors
    return LatentFactors(H=H, A=A, S=S, rank=factors.rank)


def fit(tensor: EnergyTensor, omega: ObservationSet, config: ModelConfig,
        season_prior: np.ndarray | None = None,
        warm_start: LatentFactors | None = None):
    """Coordinate-descent fit; returns (factors, stats, report).

    Sweeps stop when the relative objective change drops below
    ``config.tol`` or after ``config.max_sweeps``.  The returned stats
    are rebuilt from the final factors.
    """
    omega.check_observed(tensor)
    caps = resolve_caps(tensor, config)
    P, Q, R = caps
    if season_prior is not None:
        season_prior = np.asarray(season_prior, dtype=float)
        if season_prior.shape != (tensor.num_months, config.rank):
            raise ValueError("season_prior must be (months, rank)")
    fresh = init_factors(tensor, config, caps)
    revivals_allowed = len(omega) > 0
    if warm_start is not None:
        if warm_start.rank != config.rank:
            raise ValueError("warm_start rank does not match config.rank")
        factors = _revive_dead_components(warm_start, fresh) if revivals_allowed \
            else warm_start
    else:
        factors = fresh

    ii, jj, kk = omega.arrays()
    e = tensor.readings[ii, jj, kk]
    M, N, T = tensor.readings.shape
    H, A, S = factors.H.copy(), factors.A.copy(), factors.S.copy()

    trace = []
    converged = False
    sweeps = 0
    for sweep in range(config.max_sweeps):
        sweeps = sweep + 1
        revived = False
        hp, hr = _family(A[jj] * S[kk], e, ii, M, config.lambda1, config.rank)
        H = _project_rows(_solve_family(hp, hr), P)
        if revivals_allowed:
            revived |= _revive_columns(H, fresh.H)
        ap, ar = _family(H[ii] * S[kk], e, jj, N, config.lambda2, config.rank)
        A = _project_rows(_solve_family(ap, ar), Q)
        if revivals_allowed:
            revived |= _revive_columns(A, fresh.A)
        sp, sr = _family(H[ii] * A[jj], e, kk, T, config.lambda3, config.rank)
        if season_prior is not None:
            sr = sr + config.lambda3 * season_prior
        S = _project_rows(_solve_family(sp, sr), R)
        if revivals_allowed:
            revived |= _revive_columns(S, fresh.S)

        current = LatentFactors(H=H, A=A, S=S, rank=config.rank)
        obj = _objective(tensor, e, ii, jj, kk, current, config, season_prior)
        trace.append(obj)
        if sweep >= 1 and not revived:
            prev = trace[-2]
            if abs(prev - obj) <= config.tol * max(abs(prev), 1e-12):
                converged = True
                break

    final = LatentFactors(H=H, A=A, S=S, rank=config.rank)
    stats = accumulate_stats(tensor, omega, final, config)
    return final, stats, FitReport(sweeps_run=sweeps, objective_trace=tuple(trace),
                                   converged=converged)


def _objective(tensor, e, ii, jj, kk, factors, config, season_prior):
    data_term = 0.0
    if len(ii):
        preds = _kernels.predict_cells(factors.H, factors.A, factors.S, ii, jj, kk)
        resid = preds - e
        data_term = float(np.dot(resid, resid))
    s_term = factors.S if season_prior is None else factors.S - season_prior
    return (data_term
            + config.lambda1 * float(np.sum(factors.H ** 2))
            + config.lambda2 * float(np.sum(factors.A ** 2))
            + config.lambda3 * float(np.sum(s_term ** 2)))
