from __future__ import annotations

import numpy as np
from scipy import linalg

MAX_CONDITION = 1e12


class SingularInformationError(np.linalg.LinAlgError):
    """Information matrix is singular or too ill-conditioned to invert."""


def condition_number(A: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(A)
    if ev[0] <= 0 or not np.all(np.isfinite(ev)):
        return np.inf
    return float(ev[-1] / ev[0])


def spd_factor(A: np.ndarray, max_cond: float = MAX_CONDITION):
    A = np.asarray(A, dtype=float)
    cond = condition_number(A)
    if cond > max_cond:
        raise SingularInformationError(f"condition number {cond:.3g} exceeds {max_cond:.0e}")
    try:
        return linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularInformationError(str(exc)) from None


def spd_solve(A: np.ndarray, b: np.ndarray, max_cond: float = MAX_CONDITION) -> np.ndarray:
    return linalg.cho_solve(spd_factor(A, max_cond), b)


def spd_inverse(A: np.ndarray, max_cond: float = MAX_CONDITION) -> np.ndarray:
    inv = linalg.cho_solve(spd_factor(A, max_cond), np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)
