"""Coherence, sampling distributions, budgets, random space-time draws and
the reweighted measurement operator ``Phi = Psi S Utilde``.

Time steps are indexed ``t = 0 .. T-1`` and nodes ``0 .. n-1`` in memory.
Exported plans use 1-based node numbers.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .spectral import SpaceTimeDictionary

PROB_FLOOR = 1e-12


class SamplingError(ValueError):
    pass


def derive_seed(master_seed: int, tag: str, *indices: int) -> int:
    """Mix ``(master_seed, tag, indices...)`` into an independent 64-bit seed.

    The tag is hashed with CRC-32 and everything goes through
    :class:`numpy.random.SeedSequence`, so the result is stable across runs
    and platforms for a given numpy.
    """
    words = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode("utf-8"))]
    words.extend(int(i) & 0xFFFFFFFFFFFFFFFF for i in indices)
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


def _floor_rows(P: np.ndarray, eps: float) -> np.ndarray:
    # lift small entries to exactly eps and shrink the others to keep each row summing to 1
    P = np.asarray(P, dtype=float)
    low = P < eps
    rest = np.where(low, 0.0, P)
    scale = (1.0 - eps * low.sum(axis=1, keepdims=True)) / rest.sum(axis=1, keepdims=True)
    return np.where(low, eps, rest * scale)


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Per-time-step node distributions; row ``t`` is ``p_t``."""

    probs: np.ndarray
    floor: float = PROB_FLOOR

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if P.ndim != 2:
            raise SamplingError("probabilities must form a T x n array")
        if np.any(P < self.floor * (1 - 1e-9)):
            raise SamplingError(f"probabilities must be >= floor {self.floor:g}")
        if np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
            raise SamplingError("each row must sum to 1 within 1e-12")
        object.__setattr__(self, "probs", P)

    @classmethod
    def from_weights(cls, weights: np.ndarray, floor: float = PROB_FLOOR) -> "SamplingDistribution":
        """Normalize nonnegative row weights, flooring at ``floor``."""
        W = np.atleast_2d(np.asarray(weights, dtype=float))
        if np.any(W < 0):
            raise SamplingError("weights must be nonnegative")
        sums = W.sum(axis=1, keepdims=True)
        if np.any(sums == 0):
            warnings.warn("all-zero weight row; falling back to the probability floor", RuntimeWarning)
            W = np.where(sums == 0, 1.0, W)
            sums = W.sum(axis=1, keepdims=True)
        return cls(_floor_rows(W / sums, floor), floor)

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    @property
    def n(self) -> int:
        return self.probs.shape[1]


def uniform_distribution(n: int, T: int) -> SamplingDistribution:
    if n < 1 or T < 1:
        raise SamplingError("n and T must be positive")
    return SamplingDistribution(np.full((T, n), 1.0 / n))


@dataclass(frozen=True, eq=False)
class CoherenceProfile:
    """``nu[t]`` for each time step."""

    nu: np.ndarray

    @property
    def nu_sq(self) -> np.ndarray:
        return self.nu ** 2

    @property
    def nu_sq_sum(self) -> float:
        return float(np.sum(self.nu ** 2))


def _check_dims(dictionary: SpaceTimeDictionary, dist: SamplingDistribution) -> None:
    if dist.probs.shape != (dictionary.T, dictionary.n):
        raise SamplingError(
            f"distribution shape {dist.probs.shape} does not match "
            f"(T, n) = ({dictionary.T}, {dictionary.n})"
        )


def coherence(dictionary: SpaceTimeDictionary, dist: SamplingDistribution) -> CoherenceProfile:
    """``nu[t] = max_{i,j} |Utilde[t n + i, j]| / sqrt(p_t(i))``."""
    _check_dims(dictionary, dist)
    A = np.abs(dictionary.Utilde).reshape(dictionary.T, dictionary.n, dictionary.k)
    row_max = A.max(axis=2)
    return CoherenceProfile((row_max / np.sqrt(dist.probs)).max(axis=1))


def optimal_distribution(
    dictionary: SpaceTimeDictionary, floor: float = PROB_FLOOR
) -> tuple[SamplingDistribution, CoherenceProfile]:
    """Coherence-minimizing distribution and its coherence.

    ``p_t(i)`` is proportional to ``max_j |Utilde[t n + i, j]|^2``; the
    returned profile is ``nu_t^2 = sum_i max_j |Utilde[t n + i, j]|^2``,
    evaluated before the probability floor is applied.
    """
    A = np.abs(dictionary.Utilde).reshape(dictionary.T, dictionary.n, dictionary.k)
    # argmax takes the first maximizer, i.e. ties go to the smallest column
    kappa = A.argmax(axis=2)
    peak = np.take_along_axis(A, kappa[:, :, None], axis=2)[:, :, 0] ** 2
    nu_sq = peak.sum(axis=1)
    return SamplingDistribution.from_weights(peak, floor), CoherenceProfile(np.sqrt(nu_sq))


def allocate_budget(nu_sq: np.ndarray | CoherenceProfile, m: int) -> np.ndarray:
    """Split ``m`` samples proportionally to ``nu_sq`` by largest remainders.

    Remainder ties go to the earlier time step.
    """
    if isinstance(nu_sq, CoherenceProfile):
        nu_sq = nu_sq.nu_sq
    w = np.asarray(nu_sq, dtype=float)
    m = int(m)
    if m < 1:
        raise SamplingError(f"total budget must be >= 1, got {m}")
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or w.sum() <= 0:
        raise SamplingError("coherence weights must be nonnegative with a positive sum")
    exact = m * w / w.sum()
    base = np.floor(exact).astype(int)
    rem = exact - base
    short = m - int(base.sum())
    order = sorted(range(w.size), key=lambda t: (-rem[t], t))
    for t in order[:short]:
        base[t] += 1
    return base


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Drawn space-time samples.

    ``omega[t]`` holds the ``m_t`` node indices drawn at step ``t``
    (duplicates allowed) and ``weights[t]`` the matching factors
    ``1 / sqrt(m_t p_t(omega))``.
    """

    n: int
    omega: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    seed: int | None = None

    @property
    def T(self) -> int:
        return len(self.omega)

    @property
    def budgets(self) -> np.ndarray:
        return np.array([len(o) for o in self.omega], dtype=int)

    @property
    def m_total(self) -> int:
        return int(self.budgets.sum())

    def times(self) -> np.ndarray:
        return np.repeat(np.arange(self.T), self.budgets)

    def flat_omega(self) -> np.ndarray:
        return np.concatenate([np.asarray(o, dtype=int) for o in self.omega]) if self.T else np.zeros(0, int)

    def flat_weights(self) -> np.ndarray:
        return np.concatenate([np.asarray(w, dtype=float) for w in self.weights]) if self.T else np.zeros(0)

    def rows(self) -> np.ndarray:
        """Row indices into the ``T n`` space-time vector, in (t, draw) order."""
        return self.times() * self.n + self.flat_omega()

    @classmethod
    def full(cls, n: int, T: int) -> "SamplingPlan":
        """Every node once per step under the uniform distribution (all weights 1)."""
        return cls(n, tuple(np.arange(n) for _ in range(T)), tuple(np.ones(n) for _ in range(T)))


def draw_samples(dist: SamplingDistribution, budgets: Sequence[int], seed: int) -> SamplingPlan:
    """Draw ``budgets[t]`` i.i.d. nodes from each ``p_t`` by inverse CDF.

    One ``numpy`` PCG64 generator seeded with ``seed`` serves all steps in
    order, so the plan is a pure function of ``(dist, budgets, seed)``.
    """
    budgets = np.asarray(budgets, dtype=int)
    if budgets.shape != (dist.T,):
        raise SamplingError(f"need {dist.T} budgets, got shape {budgets.shape}")
    if np.any(budgets < 0):
        raise SamplingError("budgets must be nonnegative")
    rng = np.random.default_rng(seed)
    omega, weights = [], []
    for t, m_t in enumerate(budgets):
        p = dist.probs[t]
        cdf = np.cumsum(p)
        idx = np.searchsorted(cdf, rng.random(m_t) * cdf[-1], side="right")
        idx = np.minimum(idx, dist.n - 1)
        omega.append(idx)
        weights.append(1.0 / np.sqrt(m_t * p[idx]) if m_t else np.zeros(0))
    return SamplingPlan(dist.n, tuple(omega), tuple(weights), seed)


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """``phi`` (``M x k``): row ``(t, i)`` is ``weight * Utilde[t n + omega]``."""

    phi: np.ndarray
    plan: SamplingPlan

    @property
    def shape(self) -> tuple[int, int]:
        return self.phi.shape


def build_measurement(dictionary: SpaceTimeDictionary, plan: SamplingPlan) -> MeasurementOperator:
    if plan.n != dictionary.n or plan.T != dictionary.T:
        raise SamplingError(
            f"plan drawn for (n, T) = ({plan.n}, {plan.T}), dictionary has "
            f"({dictionary.n}, {dictionary.T})"
        )
    phi = plan.flat_weights()[:, None] * dictionary.Utilde[plan.rows()]
    return MeasurementOperator(phi, plan)


def apply_sampling(spacetime: np.ndarray, plan: SamplingPlan) -> tuple[np.ndarray, np.ndarray]:
    """Raw samples ``y`` and reweighted samples ``y_tilde = Psi y``."""
    spacetime = np.asarray(spacetime)
    if spacetime.shape != (plan.T * plan.n,):
        raise SamplingError(f"space-time vector must have length {plan.T * plan.n}")
    y = spacetime[plan.rows()]
    return y, plan.flat_weights() * y


def _ceil(x: float) -> int:
    # round-off can push an exact integer just above itself
    return int(math.ceil(x - 1e-9 * max(1.0, abs(x))))


def rip_sample_bound(nu_sq: float, s: int, k: int, n: int, T: int, delta: float, C: float = 1.0) -> int:
    """Per-step budget ``C nu^2 delta^-2 s log^2(s) log(k) log(nT)`` (natural logs)."""
    if s < 2 or k < 2:
        raise SamplingError("bound needs s >= 2 and k >= 2 (log factors vanish below)")
    if not 0 < delta < 1:
        raise SamplingError("delta must lie in (0, 1)")
    if C <= 0 or nu_sq < 0 or n < 1 or T < 1:
        raise SamplingError("need C > 0, nu_sq >= 0, n >= 1, T >= 1")
    return _ceil(C * nu_sq * s * math.log(s) ** 2 * math.log(k) * math.log(n * T) / delta ** 2)


def appendix_bounds(
    nu_sq: float, s: int, k: int, n: int, T: int, beta: float, epsilon: float, eta: float
) -> tuple[int, int]:
    """The two per-step conditions giving ``delta_s <= eta + eta^2 + beta``
    with probability ``1 - epsilon``:

    ``32 s nu^2 log(1/epsilon) / (3 beta^2)`` and
    ``6272 s nu^2 log(3nT) log(4k) log^2(4s) / eta^2``.
    """
    for name, v in (("beta", beta), ("epsilon", epsilon), ("eta", eta)):
        if not 0 < v <= 1:
            raise SamplingError(f"{name} must lie in (0, 1], got {v}")
    if s < 1 or k < 1 or n < 1 or T < 1 or nu_sq < 0:
        raise SamplingError("need s, k, n, T >= 1 and nu_sq >= 0")
    b1 = 32.0 * s * nu_sq * math.log(1.0 / epsilon) / (3.0 * beta ** 2)
    b2 = 6272.0 * s * nu_sq * math.log(3 * n * T) * math.log(4 * k) * math.log(4 * s) ** 2 / eta ** 2
    return _ceil(b1), _ceil(b2)


def save_distribution_csv(dist: SamplingDistribution, path: str | os.PathLike) -> None:
    """``T`` rows of ``n`` comma-separated probabilities."""
    np.savetxt(path, dist.probs, delimiter=",", fmt="%.17g")


def save_plan_csv(plan: SamplingPlan, path: str | os.PathLike) -> None:
    """Columns ``t, draw_index, omega, weight``; ``omega`` is 1-based."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "draw_index", "omega", "weight"])
        for t in range(plan.T):
            for d, (o, wt) in enumerate(zip(plan.omega[t].tolist(), plan.weights[t].tolist())):
                w.writerow([t, d, o + 1, repr(wt)])


def load_plan_csv(path: str | os.PathLike, n: int, T: int) -> SamplingPlan:
    omega = [[] for _ in range(T)]
    weights = [[] for _ in range(T)]
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            t = int(row["t"])
            omega[t].append(int(row["omega"]) - 1)
            weights[t].append(float(row["weight"]))
    return SamplingPlan(
        n,
        tuple(np.array(o, dtype=int) for o in omega),
        tuple(np.array(w, dtype=float) for w in weights),
    )
