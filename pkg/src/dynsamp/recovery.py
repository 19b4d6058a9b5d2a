"""CoSaMP recovery of the sparse dictionary code and error metrics."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .sampling import MeasurementOperator, SamplingPlan, apply_sampling, build_measurement
from .spectral import SpaceTimeDictionary, SpectralBasis, SparseSpectralCode, code_to_vertex, embed


class RecoveryError(ValueError):
    pass


class MetricError(ValueError):
    """Error metric with a zero denominator."""


@dataclass(frozen=True)
class RecoveryConfig:
    s: int
    max_iter: int = 20
    residual_tol: float = 1e-10
    ls_tol: float = 1e-10

    def __post_init__(self):
        if self.s < 1:
            raise RecoveryError(f"sparsity must be >= 1, got {self.s}")
        if self.max_iter < 1:
            raise RecoveryError("max_iter must be >= 1")
        if self.residual_tol < 0 or self.ls_tol < 0:
            raise RecoveryError("tolerances must be nonnegative")


@dataclass(eq=False)
class RecoveryResult:
    code: SparseSpectralCode
    residuals: list[float]
    iterations: int
    converged: bool
    x_hat: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        c = self.code.coeffs
        return {
            "code": [[int(i) + 1, float(c[i])] for i in self.code.support],
            "k": int(len(c)),
            "x_hat": None if self.x_hat is None else np.asarray(self.x_hat, dtype=float).tolist(),
            "residuals": [float(r) for r in self.residuals],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            **self.extra,
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def _desc_order(v: np.ndarray) -> np.ndarray:
    # stable sort on -|v| keeps the smaller index first among equal magnitudes
    return np.argsort(-np.abs(v), kind="stable")


def hard_threshold(v: np.ndarray, s: int) -> np.ndarray:
    """Keep the ``s`` largest-magnitude entries (ties favour smaller indices)."""
    v = np.asarray(v)
    out = np.zeros_like(v)
    if s <= 0:
        return out
    keep = _desc_order(v)[:s]
    out[keep] = v[keep]
    return out


def top_index_set(v: np.ndarray, r: int) -> np.ndarray:
    """Sorted indices of the ``r`` largest-magnitude entries."""
    if r < 1:
        raise RecoveryError("r must be >= 1")
    return np.sort(_desc_order(np.asarray(v))[:r])


def _as_matrix(phi) -> np.ndarray:
    return np.asarray(phi.phi if isinstance(phi, MeasurementOperator) else phi)


def support_least_squares(phi, y: np.ndarray, V, ls_tol: float = 1e-10) -> np.ndarray:
    """Minimizer of ``||y - Phi z||`` over ``supp(z) in V`` (minimum norm if
    ``Phi_V`` is rank deficient relative to ``ls_tol``)."""
    A = _as_matrix(phi)
    V = np.asarray(V, dtype=int)
    z = np.zeros(A.shape[1], dtype=np.result_type(A, y))
    if V.size == 0:
        return z
    z[V] = np.linalg.lstsq(A[:, V], y, rcond=ls_tol)[0]
    return z


def cosamp(phi, y_tilde: np.ndarray, config: RecoveryConfig) -> RecoveryResult:
    """Compressive sampling matching pursuit.

    Starting from ``c = 0``, each pass merges ``supp(c)`` with the ``2s``
    largest entries of ``Phi^T (y - Phi c)``, solves least squares on that
    support and keeps the ``s`` largest coefficients. Stops once the
    residual norm is at most ``config.residual_tol`` or after
    ``config.max_iter`` passes.
    """
    A = _as_matrix(phi)
    y = np.asarray(y_tilde)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise RecoveryError(f"dimension mismatch: Phi {A.shape}, y {y.shape}")
    k = A.shape[1]
    s = min(config.s, k)
    r = min(2 * s, k)

    c = np.zeros(k, dtype=np.result_type(A, y))
    residual = y.copy()
    history = []
    converged = False
    it = 0
    while it < config.max_iter:
        it += 1
        proxy = A.conj().T @ residual
        V = np.union1d(np.flatnonzero(c), top_index_set(proxy, r))
        v = support_least_squares(A, y, V, config.ls_tol)
        c = hard_threshold(v, s)
        residual = y - A @ c
        history.append(float(np.linalg.norm(residual)))
        if history[-1] <= config.residual_tol:
            converged = True
            break
    return RecoveryResult(SparseSpectralCode(c), history, it, converged)


def recover_signal(
    samples: np.ndarray,
    plan: SamplingPlan,
    dictionary: SpaceTimeDictionary,
    basis: SpectralBasis,
    config: RecoveryConfig,
    reweighted: bool = True,
    phi: MeasurementOperator | None = None,
) -> RecoveryResult:
    """Run CoSaMP on space-time samples and map the code back to vertices.

    ``samples`` are reweighted (``y_tilde``) unless ``reweighted=False``, in
    which case the plan weights are applied first. ``phi`` may be passed to
    reuse an operator already built for ``plan``.
    """
    y = np.asarray(samples, dtype=float)
    if y.shape != (plan.m_total,):
        raise RecoveryError(f"expected {plan.m_total} samples, got shape {y.shape}")
    if not reweighted:
        y = plan.flat_weights() * y
    if phi is None:
        phi = build_measurement(dictionary, plan)
    res = cosamp(phi, y, config)
    res.x_hat = code_to_vertex(res.code, dictionary, basis)
    return res


def sample_and_recover(
    x: np.ndarray,
    basis: SpectralBasis,
    model,
    dictionary: SpaceTimeDictionary,
    plan: SamplingPlan,
    config: RecoveryConfig,
    noise: np.ndarray | None = None,
) -> tuple[RecoveryResult, np.ndarray]:
    """Embed ``x``, add optional space-time ``noise``, sample and recover.

    Returns the result and the reweighted noise vector ``Psi e`` restricted
    to the drawn samples (zeros when noiseless).
    """
    traj = embed(x, basis, model, dictionary.grid)
    psi_e = np.zeros(plan.m_total)
    if noise is not None:
        _, psi_e = apply_sampling(noise, plan)
        traj = traj + noise
    _, y_tilde = apply_sampling(traj, plan)
    return recover_signal(y_tilde, plan, dictionary, basis, config), psi_e


def relative_error(x: np.ndarray, x_hat: np.ndarray) -> float:
    nx = np.linalg.norm(x)
    if nx == 0:
        raise MetricError("relative error undefined for a zero ground truth")
    return float(np.linalg.norm(np.asarray(x) - np.asarray(x_hat)) / nx)


def error_ratio(x: np.ndarray, x_hat: np.ndarray, psi_e_norm: float) -> float:
    """``||x - x_hat|| / (||Psi e|| ||x||)``."""
    nx = np.linalg.norm(x)
    if psi_e_norm <= 0 or nx == 0:
        raise MetricError("error ratio undefined: zero noise norm or zero ground truth")
    return float(np.linalg.norm(np.asarray(x) - np.asarray(x_hat)) / (psi_e_norm * nx))
