"""Laplacian eigenbases, diffusion filters and the space-time dictionary.

A signal ``x = U_k c`` diffusing under ``A = h(L)`` stays in ``span(U_k)``:
``A^e x = U_k diag(lambda^e) c``. Stacking the trajectory over a time grid
gives ``embed(x) = Utilde diag(f) c`` where ``Utilde`` (``T n x k``) has
orthonormal columns and ``f(lambda) = sqrt(sum_l lambda^(2 e_l))``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

CLUSTER_GAP = 1e-8
ZERO_TOL = 1e-8


class SpectralError(ValueError):
    pass


class MultiplicityError(SpectralError):
    """Eigenvalue 0 is repeated, i.e. the graph is disconnected."""


class FilterDomainError(SpectralError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Ascending eigenvalues ``sigma`` with matching orthonormal columns ``U``.

    ``U`` is real for bases produced by :func:`eigendecompose`; the Fourier
    basis of a ring (:func:`cycle_fourier_basis`) is complex.
    """

    sigma: np.ndarray
    U: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def column_inf_norms(self) -> np.ndarray:
        """Per-column max magnitude; smaller means a more spread-out mode."""
        return np.abs(self.U).max(axis=0)


def _canonical_cluster(V: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    # Rebuild an orthonormal basis of span(V) from the projections of e_0, e_1, ...
    # taken in index order, so the result does not depend on the solver's rotation.
    r = V.shape[1]
    Q = []
    for row in V:
        v = row.copy()
        for _ in range(2):
            for q in Q:
                v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > tol:
            Q.append(v / nv)
            if len(Q) == r:
                break
    return V @ np.array(Q).T


def _fix_signs(U: np.ndarray) -> np.ndarray:
    mags = np.abs(U)
    # first entry whose magnitude ties the column max (to round-off) sets the sign
    lead = np.argmax(mags >= mags.max(axis=0) - 1e-12, axis=0)
    signs = np.sign(U[lead, np.arange(U.shape[1])].real)
    signs[signs == 0] = 1.0
    return U * signs


def eigendecompose(L: np.ndarray, allow_disconnected: bool = False) -> SpectralBasis:
    """Full ascending eigendecomposition of a symmetric Laplacian.

    Eigenvalue clusters (consecutive gaps below ``1e-8``) get a canonical
    basis, and every column is signed so that its first entry of largest
    magnitude is nonnegative. Raises :class:`MultiplicityError` when the
    second eigenvalue is below ``1e-8`` unless ``allow_disconnected``.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {L.shape}")
    scale = max(1.0, float(np.abs(L).max()))
    if np.abs(L - L.T).max() > 1e-12 * scale:
        raise SpectralError("matrix is not symmetric")

    sigma, U = np.linalg.eigh(L)
    if sigma[0] < -1e-10 * scale:
        raise SpectralError(f"matrix is not positive semidefinite (sigma_1={sigma[0]:.3e})")
    sigma = sigma.copy()
    sigma[np.abs(sigma) <= 1e-10 * scale] = 0.0
    if len(sigma) > 1 and sigma[1] < ZERO_TOL and not allow_disconnected:
        nzero = int(np.sum(sigma < ZERO_TOL))
        raise MultiplicityError(
            f"eigenvalue 0 has multiplicity {nzero}; graph is disconnected "
            "(pass allow_disconnected=True to override)"
        )

    start = 0
    for stop in range(1, len(sigma) + 1):
        if stop == len(sigma) or sigma[stop] - sigma[stop - 1] >= CLUSTER_GAP:
            if stop - start > 1:
                U[:, start:stop] = _canonical_cluster(U[:, start:stop])
            start = stop
    return SpectralBasis(sigma, _fix_signs(U))


def cycle_fourier_basis(n: int) -> SpectralBasis:
    """Complex Fourier modes ``exp(2 pi i j v / n) / sqrt(n)`` of the n-ring.

    Every entry has magnitude ``1/sqrt(n)``. Modes are ordered by eigenvalue
    ``2 - 2 cos(2 pi j / n)``, with frequency ``j`` before ``n - j``.
    """
    order = sorted(range(n), key=lambda j: (min(j, n - j), 0 if j <= n - j else 1))
    freqs = np.array(order)
    sigma = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.minimum(freqs, n - freqs) / n)
    v = np.arange(n)
    U = np.exp(2j * np.pi * np.outer(v, freqs) / n) / np.sqrt(n)
    return SpectralBasis(sigma, U)


@dataclass(frozen=True)
class TimeGrid:
    """Observation times in units of the diffusion step.

    ``exponents[l]`` is the power of ``A`` applied at the ``l``-th
    observation; ``TimeGrid.regular(T)`` gives ``0, 1, ..., T-1``.
    """

    times: tuple[float, ...]
    unit: float = 1.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise SpectralError("time grid needs at least one instant")
        if self.unit <= 0:
            raise SpectralError("time unit must be positive")
        if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise SpectralError(f"times must be nonnegative and strictly increasing: {times}")
        object.__setattr__(self, "times", times)

    @classmethod
    def regular(cls, T: int, dt: float = 1.0) -> "TimeGrid":
        return cls(tuple(dt * l for l in range(int(T))), unit=dt)

    @property
    def T(self) -> int:
        return len(self.times)

    @property
    def exponents(self) -> np.ndarray:
        return np.asarray(self.times) / self.unit

    @property
    def is_regular(self) -> bool:
        return bool(np.allclose(self.exponents, np.arange(self.T), atol=1e-12))

    @property
    def integer_exponents(self) -> bool:
        e = self.exponents
        return bool(np.allclose(e, np.round(e), atol=1e-12))


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Spectral filter ``h`` mapping Laplacian eigenvalues to ``lambda = h(sigma)``."""

    h: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def heat(cls, dt: float) -> "DiffusionModel":
        """``A = exp(-dt L)``."""
        if dt < 0:
            raise SpectralError("heat step dt must be nonnegative")
        return cls(lambda s: np.exp(-dt * np.asarray(s, dtype=float)), "heat", {"dt": float(dt)})

    @classmethod
    def tabulated(cls, sigma_points: Sequence[float], values: Sequence[float]) -> "DiffusionModel":
        """Piecewise-linear filter through ``(sigma_points, values)``."""
        xs = np.asarray(sigma_points, dtype=float)
        ys = np.asarray(values, dtype=float)
        if xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise SpectralError("tabulated filter needs >= 2 strictly increasing sigma points")
        return cls(
            lambda s: np.interp(np.asarray(s, dtype=float), xs, ys),
            "tabulated",
            {"sigma": xs.tolist(), "values": ys.tolist()},
        )

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


def diffusion_eigenvalues(basis: SpectralBasis, model: DiffusionModel, k: int | None = None) -> np.ndarray:
    """``lambda_i = h(sigma_i)`` for the first ``k`` (default all) modes."""
    n = len(basis.sigma)
    k = n if k is None else int(k)
    if not 1 <= k <= n:
        raise SpectralError(f"bandwidth k={k} outside [1, {n}]")
    lam = np.asarray(model.h(basis.sigma[:k]), dtype=float)
    if lam.shape != (k,) or not np.all(np.isfinite(lam)):
        raise FilterDomainError(f"filter {model.name!r} produced non-finite values")
    return lam


def _powers(lam: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """``lam[None, :] ** exponents[:, None]`` with a domain check."""
    lam = np.asarray(lam, dtype=float)
    exponents = np.asarray(exponents, dtype=float)
    if np.any(lam < 0) and not np.allclose(exponents, np.round(exponents), atol=1e-12):
        raise FilterDomainError("negative diffusion eigenvalues need integer time exponents")
    if np.any(lam < 0):
        exponents = np.round(exponents)
    return lam[None, :] ** exponents[:, None]


def f_norms(lambdas: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Column normalizers ``sqrt(sum_l lambda^(2 e_l))``."""
    return np.sqrt((_powers(lambdas, grid.exponents) ** 2).sum(axis=0))


@dataclass(frozen=True, eq=False)
class SpaceTimeDictionary:
    """``Utilde`` (``T n x k``, orthonormal columns) and what it was built from.

    Row ``l * n + v`` holds ``lambda_i^(e_l) u_i(v) / f(lambda_i)``.
    """

    k: int
    grid: TimeGrid
    lambdas: np.ndarray
    fvals: np.ndarray
    Utilde: np.ndarray

    @property
    def n(self) -> int:
        return self.Utilde.shape[0] // self.grid.T

    @property
    def T(self) -> int:
        return self.grid.T

    def block(self, t: int) -> np.ndarray:
        n = self.n
        return self.Utilde[t * n:(t + 1) * n]


def build_dictionary(basis: SpectralBasis, model: DiffusionModel, k: int, grid: TimeGrid) -> SpaceTimeDictionary:
    lam = diffusion_eigenvalues(basis, model, k)
    P = _powers(lam, grid.exponents)
    fvals = np.sqrt((P ** 2).sum(axis=0))
    Uk = basis.U[:, :k]
    # (T, 1, k) * (1, n, k) -> (T, n, k) -> (T n, k)
    Ut = (P[:, None, :] * (Uk / fvals)[None, :, :]).reshape(grid.T * basis.n, k)
    return SpaceTimeDictionary(int(k), grid, lam, fvals, Ut)


def evolve(x: np.ndarray, basis: SpectralBasis, model: DiffusionModel, t: float) -> np.ndarray:
    """``A^t x`` computed in the full eigenbasis."""
    x = np.asarray(x)
    lam = diffusion_eigenvalues(basis, model)
    scale = _powers(lam, np.array([t]))[0]
    U = basis.U
    return U @ (scale * (U.conj().T @ x))


def embed(x: np.ndarray, basis: SpectralBasis, model: DiffusionModel, grid: TimeGrid) -> np.ndarray:
    """Space-time trajectory ``[x; A^e1 x; ...]`` of length ``T n``."""
    x = np.asarray(x)
    lam = diffusion_eigenvalues(basis, model)
    P = _powers(lam, grid.exponents)
    xhat = basis.U.conj().T @ x
    traj = (basis.U @ (P * xhat).T).T
    return traj.reshape(-1)


@dataclass(frozen=True, eq=False)
class SparseSpectralCode:
    coeffs: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs)

    @property
    def k(self) -> int:
        return len(self.coeffs)


def synth_signal(
    basis: SpectralBasis,
    k: int,
    support: Sequence[int],
    coeffs: Sequence[float],
    normalize: bool = True,
) -> tuple[np.ndarray, SparseSpectralCode]:
    """``x = sum_i coeffs[i] u_support[i]``, optionally rescaled to unit norm.

    Returns the vertex signal and its length-``k`` spectral code (rescaled
    together with ``x``).
    """
    support = np.asarray(support, dtype=int).reshape(-1)
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if support.size != coeffs.size:
        raise SpectralError("support and coeffs differ in length")
    if support.size and (support.min() < 0 or support.max() >= k):
        raise SpectralError(f"support index outside [0, {k})")
    if len(set(support.tolist())) != support.size:
        raise SpectralError("support has repeated indices")
    code = np.zeros(k)
    code[support] = coeffs
    x = basis.U[:, :k] @ code
    if normalize:
        nx = np.linalg.norm(x)
        if nx > 0:
            x = x / nx
            code = code / nx
    return x, SparseSpectralCode(code)


def random_sparse_signal(
    basis: SpectralBasis, k: int, s: int, rng: np.random.Generator
) -> tuple[np.ndarray, SparseSpectralCode]:
    """Unit-norm signal with a uniformly random ``s``-subset of the first ``k``
    modes and i.i.d. standard normal coefficients."""
    if not 0 <= s <= k:
        raise SpectralError(f"sparsity s={s} outside [0, {k}]")
    support = np.sort(rng.choice(k, size=s, replace=False))
    coeffs = rng.standard_normal(s)
    return synth_signal(basis, k, support, coeffs, normalize=True)


def code_to_vertex(c_star: np.ndarray, dictionary: SpaceTimeDictionary, basis: SpectralBasis) -> np.ndarray:
    """Undo the dictionary scaling: ``x = U_k diag(1/f) c_star``."""
    c = np.asarray(getattr(c_star, "coeffs", c_star))
    if c.shape != (dictionary.k,):
        raise SpectralError(f"code length {c.shape} does not match k={dictionary.k}")
    return basis.U[:, :dictionary.k] @ (c / dictionary.fvals)


def load_signal(path: str | os.PathLike) -> np.ndarray:
    """One real value per line; blank and '#' lines are skipped."""
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise SpectralError(f"{path}: line {lineno}: not a number: {line!r}") from None
    x = np.array(vals)
    if not np.all(np.isfinite(x)):
        raise SpectralError(f"{path}: signal has non-finite entries")
    return x


def save_signal(x: np.ndarray, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{v!r}\n" for v in np.asarray(x, dtype=float).tolist())


def save_dictionary_csv(dictionary: SpaceTimeDictionary, path: str | os.PathLike) -> None:
    """Debug export: header line ``rows,cols`` followed by the dense matrix.

    Complex dictionaries are written as ``re+imj`` entries.
    """
    M = np.asarray(dictionary.Utilde)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{M.shape[0]},{M.shape[1]}\n")
        if np.iscomplexobj(M):
            for row in M:
                fh.write(",".join(repr(complex(v)).strip("()") for v in row) + "\n")
        else:
            np.savetxt(fh, M, delimiter=",", fmt="%.17g")
