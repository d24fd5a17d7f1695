"""Dense float64 numeric helpers shared by every other module.

Stable row softmax, log-sum-exp, and a central finite-difference gradient
checker. All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Relative-error denominator floor; keeps the check meaningful near zero.
REL_ERROR_FLOOR = 1e-12

DEFAULT_FD_STEP = 1e-5
DEFAULT_FD_TOL = 1e-4


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing an analytic gradient against central differences."""

    max_relative_error: float
    worst_coordinate: tuple[int, int]
    passed: bool
    tolerance: float

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} max_rel_err={self.max_relative_error:.3e} "
            f"at {self.worst_coordinate} (tol={self.tolerance:.1e})"
        )


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction.

    Each output row sums to 1 and is strictly positive. Raises ValueError
    on non-finite input.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def log_sum_exp(values: Sequence[float] | np.ndarray) -> float:
    """ln sum(exp(v)) computed with a max shift.

    Returns -inf for a list of all -inf. Raises ValueError on an empty list.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("log_sum_exp of empty list")
    m = arr.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(arr - m).sum()))


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    analytic_grad: np.ndarray,
    point: np.ndarray,
    step: float = DEFAULT_FD_STEP,
    tolerance: float = DEFAULT_FD_TOL,
) -> GradCheckReport:
    """Compare ``analytic_grad`` to central differences of ``f`` at ``point``.

    Per coordinate: numeric = (f(x + h e) - f(x - h e)) / 2h and
    rel_err = |a - n| / max(|a|, |n|, 1e-12). The report passes iff the
    worst relative error is within ``tolerance``.

    Raises ValueError if ``f`` returns a non-finite value at any probe,
    naming the offending coordinate.
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    point = np.asarray(point, dtype=np.float64)
    analytic = np.asarray(analytic_grad, dtype=np.float64)
    if analytic.shape != point.shape:
        raise ValueError(
            f"gradient shape {analytic.shape} does not match point shape {point.shape}"
        )
    # A flat vector is treated as a single-row matrix for coordinate reporting.
    point2d = np.atleast_2d(point)
    analytic2d = np.atleast_2d(analytic)

    worst = (0, 0)
    max_rel = 0.0
    probe = point.copy()
    flat = probe.reshape(-1)
    n_cols = point2d.shape[1]
    for k in range(flat.size):
        coord = (k // n_cols, k % n_cols)
        orig = flat[k]
        flat[k] = orig + step
        f_plus = float(f(probe))
        flat[k] = orig - step
        f_minus = float(f(probe))
        flat[k] = orig
        if not np.isfinite(f_plus) or not np.isfinite(f_minus):
            raise ValueError(f"function returned non-finite value probing coordinate {coord}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        a = analytic2d[coord]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), REL_ERROR_FLOOR)
        if rel > max_rel:
            max_rel = rel
            worst = coord
    return GradCheckReport(
        max_relative_error=max_rel,
        worst_coordinate=worst,
        passed=max_rel <= tolerance,
        tolerance=tolerance,
    )
