"""Desk-scale experiments: coherence tables, phase-transition grids, noisy
recovery sweeps, Gram-identity Monte Carlo, brute-force RIP constants and
sample-bound reports.

Every random quantity is drawn from a seed derived from the master seed and
the *values* of the cell coordinates, so a grid does not depend on the
order (or process) in which its cells are evaluated.
"""
from __future__ import annotations

import csv
import functools
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import trim_mean

from .graph import Graph, gen_community, gen_cycle, gen_path, load_graph
from .graph import build_laplacian
from .recovery import RecoveryConfig, error_ratio, relative_error, sample_and_recover
from .sampling import (
    MeasurementOperator,
    SamplingDistribution,
    allocate_budget,
    appendix_bounds,
    build_measurement,
    coherence,
    derive_seed,
    draw_samples,
    optimal_distribution,
    rip_sample_bound,
    uniform_distribution,
)
from .spectral import (
    DiffusionModel,
    SpaceTimeDictionary,
    SpectralBasis,
    TimeGrid,
    build_dictionary,
    cycle_fourier_basis,
    eigendecompose,
    random_sparse_signal,
)

DEFAULT_SEED = 20240917
HEAT_PRESETS = {"fast": 4.0, "slow": 0.5}


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class GraphSpec:
    """Recipe for a graph: ``cycle``, ``path``, ``community`` or ``file``."""

    kind: str = "cycle"
    n: int = 256
    sizes: tuple[int, ...] = ()
    p_in: float = 0.8
    p_out: float = 0.02
    seed: int = 7
    path: str = ""

    def build(self) -> Graph:
        if self.kind == "cycle":
            return gen_cycle(self.n)
        if self.kind == "path":
            return gen_path(self.n)
        if self.kind == "community":
            return gen_community(self.sizes, self.p_in, self.p_out, self.seed)
        if self.kind == "file":
            return load_graph(self.path)
        raise HarnessError(f"unknown graph kind {self.kind!r}")

    def describe(self) -> dict:
        if self.kind in ("cycle", "path"):
            return {"kind": self.kind, "n": self.n}
        if self.kind == "community":
            return {"kind": self.kind, "sizes": list(self.sizes), "p_in": self.p_in,
                    "p_out": self.p_out, "seed": self.seed}
        return {"kind": self.kind, "path": self.path}


def heat_dt(preset: str | float) -> float:
    if isinstance(preset, str):
        try:
            return HEAT_PRESETS[preset]
        except KeyError:
            raise HarnessError(f"unknown heat preset {preset!r}; choose from {sorted(HEAT_PRESETS)}") from None
    return float(preset)


def make_distribution(dictionary: SpaceTimeDictionary, choice: str):
    """``(distribution, coherence profile)`` for ``"optimal"`` or ``"uniform"``."""
    if choice == "optimal":
        return optimal_distribution(dictionary)
    if choice == "uniform":
        dist = uniform_distribution(dictionary.n, dictionary.T)
        return dist, coherence(dictionary, dist)
    raise HarnessError(f"unknown distribution {choice!r}")


@dataclass(frozen=True)
class Setup:
    basis: SpectralBasis
    model: DiffusionModel
    dictionary: SpaceTimeDictionary
    dist: SamplingDistribution
    profile: object


@functools.lru_cache(maxsize=16)
def _basis_for(graph: GraphSpec) -> SpectralBasis:
    return eigendecompose(build_laplacian(graph.build()))


def graph_basis(graph: GraphSpec, fourier: bool = False) -> SpectralBasis:
    """Laplacian eigenbasis of ``graph``; ``fourier`` selects the complex
    Fourier modes instead (rings only)."""
    if fourier:
        if graph.kind != "cycle":
            raise HarnessError("the Fourier basis is only defined for cycle graphs")
        return cycle_fourier_basis(graph.n)
    return _basis_for(graph)


@functools.lru_cache(maxsize=32)
def build_setup(graph: GraphSpec, dt: float, k: int, T: int, distribution: str) -> Setup:
    basis = _basis_for(graph)
    if k > basis.n:
        raise HarnessError(f"bandwidth k={k} exceeds n={basis.n}")
    model = DiffusionModel.heat(dt)
    dictionary = build_dictionary(basis, model, k, TimeGrid.regular(T))
    dist, profile = make_distribution(dictionary, distribution)
    return Setup(basis, model, dictionary, dist, profile)


# ---------------------------------------------------------------- coherence

@dataclass
class HeatmapResult:
    k_values: list[int]
    T_values: list[int]
    nu_sq_sum: np.ndarray          # (len(k_values), len(T_values))
    profile: np.ndarray            # nu_t^2 for the largest (k, T)
    distribution: str

    def csv_text(self) -> str:
        rows = [[k, T, repr(float(self.nu_sq_sum[a, b]))]
                for a, k in enumerate(self.k_values) for b, T in enumerate(self.T_values)]
        return table_csv_text(["k", "T", "nu_sq_sum"], rows)

    def profile_csv_text(self) -> str:
        return table_csv_text(["t", "nu_sq"], [[t, repr(float(v))] for t, v in enumerate(self.profile)])


def coherence_heatmap(
    basis: SpectralBasis,
    model: DiffusionModel,
    k_values: Sequence[int],
    T_values: Sequence[int],
    distribution: str = "optimal",
) -> HeatmapResult:
    """``sum_t nu_t^2`` over a ``(k, T)`` grid, plus the per-step profile at
    the largest ``k`` and ``T``."""
    k_values = [int(k) for k in k_values]
    T_values = [int(T) for T in T_values]
    if max(k_values) > basis.n:
        raise HarnessError(f"k={max(k_values)} exceeds n={basis.n}")
    table = np.zeros((len(k_values), len(T_values)))
    profile = None
    for b, T in enumerate(T_values):
        grid = TimeGrid.regular(T)
        for a, k in enumerate(k_values):
            dictionary = build_dictionary(basis, model, k, grid)
            _, prof = make_distribution(dictionary, distribution)
            table[a, b] = prof.nu_sq_sum
            if k == max(k_values) and T == max(T_values):
                profile = prof.nu_sq
    return HeatmapResult(k_values, T_values, table, profile, distribution)


def earlier_time_violations(nu_sq: np.ndarray, tol: float = 1e-12) -> list[int]:
    """Steps ``t`` where ``nu_{t+1}^2 > nu_t^2`` (beyond ``tol``)."""
    nu_sq = np.asarray(nu_sq)
    return [t for t in range(len(nu_sq) - 1) if nu_sq[t + 1] > nu_sq[t] + tol]


# ---------------------------------------------------------- phase transition

@dataclass(frozen=True)
class PhaseGridSpec:
    graph: GraphSpec = GraphSpec()
    dt: float = HEAT_PRESETS["fast"]
    k: int = 64
    T: int = 8
    s_values: tuple[int, ...] = tuple(range(1, 9))
    m_values: tuple[int, ...] = tuple(range(32, 513, 32))
    trials: int = 100
    distribution: str = "optimal"
    threshold: float = 0.01
    master_seed: int = DEFAULT_SEED
    max_iter: int = 20

    def __post_init__(self):
        for name in ("s_values", "m_values"):
            vals = tuple(int(v) for v in getattr(self, name))
            if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
                raise HarnessError(f"{name} must be nonempty and strictly ascending")
            object.__setattr__(self, name, vals)
        if max(self.s_values) > self.k or min(self.s_values) < 1:
            raise HarnessError("sparsity levels must lie in [1, k]")
        if min(self.m_values) < 1:
            raise HarnessError("budgets must be positive")
        if self.trials < 1:
            raise HarnessError("trials must be positive")
        if self.distribution not in ("optimal", "uniform"):
            raise HarnessError(f"unknown distribution {self.distribution!r}")

    def setup(self) -> Setup:
        return build_setup(self.graph, self.dt, self.k, self.T, self.distribution)

    def describe(self) -> dict:
        d = asdict(self)
        d["graph"] = self.graph.describe()
        d["s_values"] = list(self.s_values)
        d["m_values"] = list(self.m_values)
        return d


def _trial_signal(spec, setup: Setup, s: int, trial: int):
    rng = np.random.default_rng(derive_seed(spec.master_seed, "signal", s, trial))
    return random_sparse_signal(setup.basis, spec.k, s, rng)[0]


def _run_trial(spec, setup: Setup, s: int, m: int, trial: int, sigma: float = 0.0):
    x = _trial_signal(spec, setup, s, trial)
    budgets = allocate_budget(setup.profile, m)
    plan = draw_samples(setup.dist, budgets, derive_seed(spec.master_seed, "plan", s, m, trial))
    noise = None
    if sigma > 0:
        rng = np.random.default_rng(derive_seed(spec.master_seed, "noise", s, m, trial))
        noise = rng.uniform(-sigma, sigma, size=setup.dictionary.T * setup.dictionary.n)
    cfg = RecoveryConfig(s, max_iter=spec.max_iter)
    res, psi_e = sample_and_recover(x, setup.basis, setup.model, setup.dictionary, plan, cfg, noise)
    return x, res, psi_e


def _phase_cell(spec: PhaseGridSpec, s: int, m: int) -> int:
    setup = spec.setup()
    ok = 0
    for trial in range(spec.trials):
        x, res, _ = _run_trial(spec, setup, s, m, trial)
        ok += relative_error(x, res.x_hat) <= spec.threshold
    return ok


def _cells(spec) -> list[tuple[int, int, int, int]]:
    return [(a, b, s, m) for a, s in enumerate(spec.s_values) for b, m in enumerate(spec.m_values)]


def _map_cells(fn, spec, workers: int) -> Iterator:
    cells = _cells(spec)
    if workers <= 1:
        for a, b, s, m in cells:
            yield a, b, fn(spec, s, m)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, spec, s, m) for _, _, s, m in cells]
        for (a, b, _, _), fut in zip(cells, futures):
            yield a, b, fut.result()


def iter_phase_cells(spec: PhaseGridSpec, workers: int = 1) -> Iterator[tuple[int, int, int]]:
    """Yield ``(s_index, m_index, successes)`` in row-major cell order."""
    yield from _map_cells(_phase_cell, spec, workers)


PHASE_HEADER = ("s", "m", "successes", "trials", "success_rate")


def phase_row(s: int, m: int, successes: int, trials: int) -> list:
    return [int(s), int(m), int(successes), int(trials), repr(int(successes) / int(trials))]


@dataclass
class PhaseGridResult:
    spec: PhaseGridSpec
    successes: np.ndarray          # (len(s_values), len(m_values)) ints
    trials: np.ndarray

    @property
    def success_rate(self) -> np.ndarray:
        return self.successes / self.trials

    def rows(self) -> list[list]:
        return [phase_row(s, m, self.successes[a, b], self.trials[a, b])
                for a, s in enumerate(self.spec.s_values) for b, m in enumerate(self.spec.m_values)]

    def csv_text(self) -> str:
        return table_csv_text(PHASE_HEADER, self.rows())

    def meta(self) -> dict:
        return {"experiment": "phase_transition", "spec": self.spec.describe()}


def phase_transition(spec: PhaseGridSpec, workers: int = 1) -> PhaseGridResult:
    shape = (len(spec.s_values), len(spec.m_values))
    succ = np.zeros(shape, dtype=int)
    for a, b, ok in iter_phase_cells(spec, workers):
        succ[a, b] = ok
    return PhaseGridResult(spec, succ, np.full(shape, spec.trials))


def smooth_in_m(rate: np.ndarray) -> np.ndarray:
    """Isotonic (nondecreasing in ``m``) fit of each row of a rate grid."""
    return np.array([isotonic_regression(row, increasing=True).x for row in np.atleast_2d(rate)])


def critical_budget(result: PhaseGridResult, level: float = 0.5, interpolate: bool = False) -> np.ndarray:
    """Smallest budget whose smoothed success rate reaches ``level``, per ``s``.

    ``inf`` when no budget on the grid gets there. With ``interpolate`` the
    crossing is placed linearly between neighbouring grid budgets; a
    crossing at the first grid point cannot be located any lower.
    """
    m = np.asarray(result.spec.m_values, dtype=float)
    out = np.full(len(result.spec.s_values), np.inf)
    for a, row in enumerate(smooth_in_m(result.success_rate)):
        hit = np.flatnonzero(row >= level)
        if hit.size == 0:
            continue
        b = hit[0]
        if interpolate and b > 0 and row[b] > row[b - 1]:
            out[a] = m[b - 1] + (level - row[b - 1]) / (row[b] - row[b - 1]) * (m[b] - m[b - 1])
        else:
            out[a] = m[b]
    return out


def monotone_violations(values: Sequence[float]) -> int:
    """Number of adjacent pairs that decrease."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(v[1:] < v[:-1]))


def contour_fit(s_values: Sequence[int], m_star: Sequence[float]) -> tuple[float, float]:
    """Least-squares line ``m* ~ slope * s + intercept`` over finite points.

    Uses the centred normal equations, so a flat contour gives a slope of
    exactly zero rather than round-off.
    """
    s = np.asarray(s_values, dtype=float)
    m = np.asarray(m_star, dtype=float)
    ok = np.isfinite(m)
    if ok.sum() < 2:
        return math.nan, math.nan
    s, m = s[ok], m[ok]
    ds, dm = s - s.mean(), m - m.mean()
    slope = float(ds @ dm / (ds @ ds))
    return slope, float(m.mean() - slope * s.mean())


# ------------------------------------------------------------- noisy sweep

@dataclass(frozen=True)
class NoisySweepSpec(PhaseGridSpec):
    s_values: tuple[int, ...] = (1, 2, 3, 4)
    m_values: tuple[int, ...] = (320,)
    sigma: float = 1e-3
    trim: float = 0.05

    def __post_init__(self):
        super().__post_init__()
        if self.sigma <= 0:
            raise HarnessError("noise half-width sigma must be positive")
        if not 0 <= self.trim < 0.5:
            raise HarnessError("trim fraction must lie in [0, 0.5)")


def _noisy_cell(spec: NoisySweepSpec, s: int, m: int) -> np.ndarray:
    """Per-trial ``(relative error, ||Psi e||, error ratio)``."""
    setup = spec.setup()
    out = np.zeros((spec.trials, 3))
    for trial in range(spec.trials):
        x, res, psi_e = _run_trial(spec, setup, s, m, trial, sigma=spec.sigma)
        pe = float(np.linalg.norm(psi_e))
        out[trial] = relative_error(x, res.x_hat), pe, error_ratio(x, res.x_hat, pe)
    return out


NOISY_HEADER = ("s", "m", "trials", "error_ratio", "relative_error", "psi_e_norm",
                "frac_rel_within_10_psi_e")


def summarize_noisy(arr: np.ndarray, s: int, m: int, trim: float) -> dict:
    """Trimmed means (``trim`` cut from each tail) of one cell's trials."""
    rel, pe, ratio = arr[:, 0], arr[:, 1], arr[:, 2]
    return {
        "s": int(s),
        "m": int(m),
        "trials": int(len(arr)),
        "error_ratio": float(trim_mean(ratio, trim)),
        "relative_error": float(trim_mean(rel, trim)),
        "psi_e_norm": float(pe.mean()),
        "frac_rel_within_10_psi_e": float(np.mean(rel <= 10 * pe)),
    }


def noisy_row(summary: dict) -> list:
    return [v if isinstance(v, int) else repr(v) for v in (summary[h] for h in NOISY_HEADER)]


@dataclass
class NoisySweepResult:
    spec: NoisySweepSpec
    trials: dict                    # (s, m) -> (trials, 3) array

    def summary(self, s: int, m: int) -> dict:
        return summarize_noisy(self.trials[(s, m)], s, m, self.spec.trim)

    def table(self) -> list[dict]:
        return [self.summary(s, m) for s in self.spec.s_values for m in self.spec.m_values]

    def csv_text(self) -> str:
        return table_csv_text(NOISY_HEADER, [noisy_row(r) for r in self.table()])

    def meta(self) -> dict:
        return {"experiment": "noisy_sweep", "spec": self.spec.describe()}


def iter_noisy_cells(spec: NoisySweepSpec, workers: int = 1):
    yield from _map_cells(_noisy_cell, spec, workers)


def noisy_sweep(spec: NoisySweepSpec, workers: int = 1) -> NoisySweepResult:
    trials = {}
    for a, b, arr in iter_noisy_cells(spec, workers):
        trials[(spec.s_values[a], spec.m_values[b])] = arr
    return NoisySweepResult(spec, trials)


# --------------------------------------------------------------------- RIP

@dataclass(frozen=True)
class RipEstimate:
    s: int
    delta: float
    support: tuple[int, ...]


def estimate_rip(phi, s: int, budget: int = 200_000) -> RipEstimate:
    """Exact ``delta_s = max_{|S|=s} ||Phi_S^T Phi_S - I||_2`` by enumeration."""
    A = np.asarray(phi.phi if isinstance(phi, MeasurementOperator) else phi)
    k = A.shape[1]
    if not 1 <= s <= k:
        raise HarnessError(f"s={s} outside [1, {k}]")
    if math.comb(k, s) > budget:
        raise HarnessError(f"C({k}, {s}) = {math.comb(k, s)} supports exceeds budget {budget}")
    G = A.conj().T @ A
    best, arg = -1.0, ()
    for S in itertools.combinations(range(k), s):
        idx = np.array(S)
        ev = np.linalg.eigvalsh(G[np.ix_(idx, idx)])
        d = max(abs(ev[0] - 1.0), abs(ev[-1] - 1.0))
        if d > best:
            best, arg = d, S
    return RipEstimate(s, float(best), arg)


# ---------------------------------------------------------- Gram identity

@dataclass(frozen=True)
class GramStats:
    mean_deviation: float           # ||mean(Phi^T Phi) - I||_2
    mean_single_deviation: float
    max_single_deviation: float
    n_draws: int


def gram_identity_check(
    dictionary: SpaceTimeDictionary,
    dist: SamplingDistribution,
    m_t: int | Sequence[int],
    n_draws: int,
    seed: int,
) -> GramStats:
    """Monte Carlo check that the reweighted Gram matrix is unbiased for ``I``."""
    budgets = np.broadcast_to(np.asarray(m_t, dtype=int), (dictionary.T,))
    if np.any(budgets < 1):
        raise HarnessError("every step needs at least one sample")
    k = dictionary.k
    eye = np.eye(k)
    acc = np.zeros((k, k), dtype=dictionary.Utilde.dtype)
    single = []
    for d in range(n_draws):
        plan = draw_samples(dist, budgets, derive_seed(seed, "gram", d))
        phi = build_measurement(dictionary, plan).phi
        G = phi.conj().T @ phi
        acc += G
        single.append(np.linalg.norm(G - eye, 2))
    return GramStats(float(np.linalg.norm(acc / n_draws - eye, 2)),
                     float(np.mean(single)), float(np.max(single)), int(n_draws))


# ------------------------------------------------------------ bound report

def bound_report(
    dictionary: SpaceTimeDictionary,
    profile,
    s: int,
    delta: float = 0.5,
    C: float = 1.0,
    epsilon: float = 0.01,
    eta: float = 0.15,
    beta: float = 0.15,
    m: int | None = None,
) -> list[dict]:
    """Per-step table of the main and appendix sample bounds.

    With a total budget ``m`` the proportional split is included too.
    """
    n, T, k = dictionary.n, dictionary.T, dictionary.k
    nu_sq = profile.nu_sq
    split = allocate_budget(nu_sq, m) if m else [None] * T
    rows = []
    for t in range(T):
        main = rip_sample_bound(nu_sq[t], s, k, n, T, delta, C) if s >= 2 and k >= 2 else None
        b1, b2 = appendix_bounds(nu_sq[t], s, k, n, T, beta, epsilon, eta)
        rows.append({"t": t, "nu_sq": float(nu_sq[t]), "main_bound": main,
                     "appendix_bound_1": b1, "appendix_bound_2": b2,
                     "m_t": None if split[t] is None else int(split[t])})
    return rows


# -------------------------------------------------------------------- I/O

def table_csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(out_dir: str | os.PathLike, csv_name: str, csv_text: str, meta: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, csv_name), "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
