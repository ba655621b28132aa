"""Energy tensor data model and the elementary CP algebra.

The tensor is dense: ``readings`` has shape (homes, appliances, months)
and a parallel boolean ``mask`` marks which cells exist as ground truth.
One appliance slice is the per-home monthly bill (the "aggregate"); it
is always available and by convention sits at index 0 when built by the
ingestion path.  Which cells the model is allowed to see at a given
point of a simulation is tracked separately by :class:`ObservationSet`,
the authoritative index set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


def _frozen_array(a, dtype=float):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EnergyTensor:
    """Dense homes x appliances x months kWh readings with availability mask."""

    readings: np.ndarray = field(compare=False)
    mask: np.ndarray = field(compare=False)
    appliance_names: tuple
    aggregate_index: int = 0

    def __post_init__(self):
        readings = _frozen_array(self.readings)
        mask = _frozen_array(self.mask, dtype=bool)
        if readings.ndim != 3:
            raise ValueError(f"readings must be 3-D, got shape {readings.shape}")
        if mask.shape != readings.shape:
            raise ValueError("mask shape must match readings shape")
        if len(self.appliance_names) != readings.shape[1]:
            raise ValueError("appliance_names length must match appliance axis")
        if not 0 <= self.aggregate_index < readings.shape[1]:
            raise ValueError("aggregate_index out of range")
        if not np.all(np.isfinite(readings)):
            raise ValueError("readings must be finite")
        if np.any(readings < 0):
            raise ValueError("readings must be nonnegative kWh")
        if not mask[:, self.aggregate_index, :].all():
            raise ValueError("aggregate slice must be fully observed (monthly bills)")
        object.__setattr__(self, "readings", readings)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "appliance_names", tuple(self.appliance_names))

    @property
    def num_homes(self) -> int:
        return self.readings.shape[0]

    @property
    def num_appliances(self) -> int:
        return self.readings.shape[1]

    @property
    def num_months(self) -> int:
        return self.readings.shape[2]

    def breakdown_indices(self) -> tuple:
        """Appliance indices excluding the aggregate pseudo-appliance."""
        return tuple(j for j in range(self.num_appliances) if j != self.aggregate_index)


@dataclass(frozen=True)
class ObservationSet:
    """Set of (home, appliance, month) triples the model may see."""

    entries: frozenset

    def __post_init__(self):
        entries = frozenset((int(i), int(j), int(k)) for i, j, k in self.entries)
        object.__setattr__(self, "entries", entries)
        triples = sorted(entries)
        idx = np.array(triples, dtype=np.int64).reshape(len(triples), 3)
        object.__setattr__(self, "_idx", _frozen_array(idx, dtype=np.int64))

    @classmethod
    def from_triples(cls, triples) -> "ObservationSet":
        return cls(frozenset(triples))

    @classmethod
    def empty(cls) -> "ObservationSet":
        return cls(frozenset())

    def union(self, triples) -> "ObservationSet":
        return ObservationSet(self.entries | frozenset(triples))

    def arrays(self):
        """Index arrays (homes, appliances, months) in sorted triple order."""
        idx = self._idx
        return idx[:, 0], idx[:, 1], idx[:, 2]

    def check_bounds(self, tensor: EnergyTensor) -> None:
        ii, jj, kk = self.arrays()
        if len(ii) == 0:
            return
        M, N, T = tensor.readings.shape
        if ii.min() < 0 or ii.max() >= M or jj.min() < 0 or jj.max() >= N \
                or kk.min() < 0 or kk.max() >= T:
            raise ValueError("observation set references an out-of-range cell")

    def check_observed(self, tensor: EnergyTensor) -> None:
        self.check_bounds(tensor)
        ii, jj, kk = self.arrays()
        if len(ii) and not tensor.mask[ii, jj, kk].all():
            raise ValueError("observation set references a cell with no ground truth")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, triple) -> bool:
        return triple in self.entries

    def __iter__(self):
        return iter(sorted(self.entries))

    def issubset(self, other: "ObservationSet") -> bool:
        return self.entries <= other.entries


@dataclass(frozen=True)
class LatentFactors:
    """CP factor matrices: home (M x r), appliance (N x r), season (T x r)."""

    H: np.ndarray = field(compare=False)
    A: np.ndarray = field(compare=False)
    S: np.ndarray = field(compare=False)
    rank: int = 1

    def __post_init__(self):
        H, A, S = (_frozen_array(m) for m in (self.H, self.A, self.S))
        for name, m in (("H", H), ("A", A), ("S", S)):
            if m.ndim != 2 or m.shape[1] != self.rank:
                raise ValueError(f"{name} must be 2-D with {self.rank} columns")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "S", S)

    def reconstruct(self) -> np.ndarray:
        """Full predicted tensor, shape (M, N, T)."""
        return np.einsum("ir,jr,kr->ijk", self.H, self.A, self.S)

    def validate(self, caps, atol: float = 1e-9) -> None:
        """Check nonnegativity and row-norm caps (P, Q, R); raise otherwise."""
        for name, m, cap in (("H", self.H, caps[0]), ("A", self.A, caps[1]),
                             ("S", self.S, caps[2])):
            if np.any(m < -atol):
                raise ValueError(f"{name} has negative entries")
            norms = np.linalg.norm(m, axis=1)
            if np.any(norms > cap + atol):
                raise ValueError(f"{name} row norm exceeds cap {cap}")


@dataclass(frozen=True)
class ModelConfig:
    """Rank, ridge weights, feasibility caps and stopping rule for a fit.

    ``norm_caps`` of None means caps are derived from the data at fit
    time: all three equal 10 * cbrt(max observed reading), loose enough
    that a product of three capped rows can span the data range.
    """

    rank: int = 2
    lambda1: float = 5000.0
    lambda2: float = 5000.0
    lambda3: float = 5000.0
    norm_caps: tuple | None = None
    max_sweeps: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("regularization coefficients must be >= 0")
        if self.norm_caps is not None:
            caps = tuple(float(c) for c in self.norm_caps)
            if len(caps) != 3 or min(caps) <= 0:
                raise ValueError("norm_caps must be three positive reals")
            object.__setattr__(self, "norm_caps", caps)
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


# ---------------------------------------------------------------------------
# elementary CP algebra


def triple_product(h, a, s) -> float:
    """sum_d h_d * a_d * s_d; identical under any pairing with hadamard."""
    h, a, s = (np.asarray(v, dtype=float) for v in (h, a, s))
    if not (h.shape == a.shape == s.shape) or h.ndim != 1:
        raise ValueError("triple_product requires three equal-length vectors")
    return float(np.dot(h * a, s))


def hadamard(u, v) -> np.ndarray:
    """Element-wise product of two equal-length vectors."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("hadamard requires two equal-length vectors")
    return u * v


def predict(factors: LatentFactors, i: int, j: int, k: int) -> float:
    """Model estimate of cell (i, j, k) from the factor rows."""
    M, N, T = factors.H.shape[0], factors.A.shape[0], factors.S.shape[0]
    if not (0 <= i < M and 0 <= j < N and 0 <= k < T):
        raise ValueError(f"cell index ({i}, {j}, {k}) out of range")
    return triple_product(factors.H[i], factors.A[j], factors.S[k])


def masked_objective(tensor: EnergyTensor, omega: ObservationSet,
                     factors: LatentFactors, config: ModelConfig,
                     season_prior: np.ndarray | None = None) -> float:
    """Squared-error loss over observed cells plus squared-norm ridge terms.

    The season regularizer penalizes distance from ``season_prior`` when
    given (rows aligned with the season factor matrix), plain norms
    otherwise.
    """
    omega.check_observed(tensor)
    ii, jj, kk = omega.arrays()
    data_term = 0.0
    if len(ii):
        preds = _kernels.predict_cells(factors.H, factors.A, factors.S, ii, jj, kk)
        resid = preds - tensor.readings[ii, jj, kk]
        data_term = float(np.dot(resid, resid))
    s_term = factors.S
    if season_prior is not None:
        season_prior = np.asarray(season_prior, dtype=float)
        if season_prior.shape != factors.S.shape:
            raise ValueError("season_prior shape must match the season factor matrix")
        s_term = factors.S - season_prior
    reg = (config.lambda1 * float(np.sum(factors.H ** 2))
           + config.lambda2 * float(np.sum(factors.A ** 2))
           + config.lambda3 * float(np.sum(s_term ** 2)))
    return data_term + reg
