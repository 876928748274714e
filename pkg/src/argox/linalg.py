"""Shared dense linear algebra for the second-step predictors.

Finite-sample covariance plug-ins can sit on the edge of positive
definiteness, so every solve goes through a Cholesky factorization with a
bounded diagonal-jitter retry. Both the joint and the stand-alone second
steps use this module, keeping one source of numerical truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

JITTER_UNIT = 1e-8
JITTER_RETRIES = 3


class NotPositiveDefinite(np.linalg.LinAlgError):
    """System matrix stayed non-PD after the jitter policy."""


@dataclass(frozen=True)
class CholeskyResult:
    factor: np.ndarray
    lower: bool
    jitter: float  # total diagonal jitter that was added

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self.factor, self.lower), b, check_finite=False)


def factor_spd(a: np.ndarray) -> CholeskyResult:
    """Cholesky-factor a symmetric matrix, adding diagonal jitter if needed.

    Each retry adds ``JITTER_UNIT * mean(diag)`` on top of the previous
    attempt; after ``JITTER_RETRIES`` failures the matrix is rejected.
    """
    a = np.asarray(a, dtype=np.float64)
    unit = JITTER_UNIT * float(np.mean(np.diag(a)))
    jitter = 0.0
    for attempt in range(JITTER_RETRIES + 1):
        try:
            chol = sla.cho_factor(
                a if jitter == 0.0 else a + jitter * np.eye(a.shape[0]),
                lower=True,
                check_finite=False,
            )
            return CholeskyResult(chol[0], chol[1], jitter)
        except sla.LinAlgError:
            jitter += unit
    raise NotPositiveDefinite(
        f"matrix not positive definite after {JITTER_RETRIES} jitter retries "
        f"(total jitter {jitter:.3e})"
    )


@dataclass(frozen=True)
class ShrunkBlp:
    """Best linear predictor with the diagonal-average shrinkage baked in.

    Predicts the target increment from a centered predictor stack:
        point  = mean_target + (cross/2) @ solve(cross_system, w - mean_stack)
        spread = diag(target_cov - (cross/2) @ solve(...) @ (cross/2)^T)
    where cross_system = (stack_cov + stack_diag)/2.
    """

    mean_target: np.ndarray
    mean_stack: np.ndarray
    target_cov: np.ndarray
    cross_cov: np.ndarray
    system: CholeskyResult
    error_var: np.ndarray  # conditional variance diagonal, floored at zero

    def point(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return self.mean_target + 0.5 * self.cross_cov @ self.system.solve(w - self.mean_stack)

    def halfwidth(self, level_z: float = 1.96) -> np.ndarray:
        return level_z * np.sqrt(self.error_var)


def build_shrunk_blp(
    mean_target: np.ndarray,
    mean_stack: np.ndarray,
    target_cov: np.ndarray,
    cross_cov: np.ndarray,
    stack_cov: np.ndarray,
    stack_diag: np.ndarray,
) -> ShrunkBlp:
    """Assemble the shrunk predictor from its moment blocks.

    ``stack_diag`` is the empirical diagonal of the stack covariance; the
    system matrix is the half/half average of the structured covariance and
    that diagonal. The half factors cancel algebraically against the halved
    cross covariance, so this equals using (stack_cov + stack_diag) whole.
    """
    mean_target = np.atleast_1d(np.asarray(mean_target, dtype=np.float64))
    mean_stack = np.atleast_1d(np.asarray(mean_stack, dtype=np.float64))
    target_cov = np.atleast_2d(np.asarray(target_cov, dtype=np.float64))
    cross_cov = np.atleast_2d(np.asarray(cross_cov, dtype=np.float64))
    stack_cov = np.atleast_2d(np.asarray(stack_cov, dtype=np.float64))
    if stack_diag.ndim == 1:
        stack_diag = np.diag(stack_diag)
    system = factor_spd(0.5 * stack_cov + 0.5 * stack_diag)
    half_cross = 0.5 * cross_cov
    cond_cov = target_cov - half_cross @ system.solve(half_cross.T)
    error_var = np.maximum(np.diag(cond_cov), 0.0)
    return ShrunkBlp(mean_target, mean_stack, target_cov, cross_cov, system, error_var)


def condition_number(a: np.ndarray) -> float:
    """2-norm condition estimate of a symmetric matrix (for diagnostics)."""
    eig = np.linalg.eigvalsh(np.asarray(a, dtype=np.float64))
    smallest = float(eig[0])
    largest = float(eig[-1])
    if smallest <= 0:
        return float("inf")
    return largest / smallest
