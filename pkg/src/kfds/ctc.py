"""CTC loss with forward-backward gradients, greedy decoding, and collapse.

The loss follows the standard extended-label formulation: the target is
interleaved with blanks (length 2L+1) and the forward/backward recursions
run in log space. The gradient is taken with respect to the input
log-probabilities, so callers chain through their own softmax.

Blank is fixed at index 0 throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

BLANK = 0

__all__ = [
    "BLANK",
    "Vocabulary",
    "ctc_loss",
    "greedy_decode",
    "collapse",
    "check_posterior",
    "check_target",
    "min_input_length",
]


@dataclass(frozen=True)
class Vocabulary:
    """Token inventory. Index 0 is the reserved blank/epsilon symbol."""

    size: int
    blank_index: int = BLANK

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError("vocabulary needs at least blank plus one token")
        if self.blank_index != BLANK:
            raise ValueError("blank index is fixed at 0")

    @property
    def tokens(self) -> range:
        """Non-blank token indices."""
        return range(1, self.size)


def check_posterior(probs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Validate a T x V row-stochastic matrix: rows sum to 1, entries > 0."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"posterior must be 2-D, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)):
        raise ValueError("posterior contains non-finite entries")
    if np.any(probs <= 0):
        raise ValueError("posterior entries must be strictly positive")
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > tol):
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ValueError(f"posterior row {worst} sums to {row_sums[worst]!r}, not 1")
    return probs


def check_target(target: Sequence[int], vocab_size: int) -> np.ndarray:
    """Validate a label sequence: non-empty, no blanks, tokens in [1, V-1]."""
    arr = np.asarray(target, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("target must be a non-empty 1-D sequence")
    if np.any(arr == BLANK):
        raise ValueError("target must not contain the blank token")
    if np.any(arr < 0) or np.any(arr >= vocab_size):
        raise ValueError(f"target tokens must lie in [1, {vocab_size - 1}]")
    return arr


def min_input_length(target: np.ndarray) -> int:
    """Shortest T that can emit the target: L plus one blank per adjacent repeat."""
    repeats = int(np.sum(target[1:] == target[:-1]))
    return int(target.size) + repeats


@njit(cache=True)
def _log_add(a: float, b: float) -> float:
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a < b:
        a, b = b, a
    return a + np.log1p(np.exp(b - a))


@njit(cache=True)
def _ctc_forward_backward(log_probs: np.ndarray, ext: np.ndarray) -> tuple:
    """Log-space forward/backward over the blank-interleaved label sequence.

    Returns (log_alpha, log_beta, log_z). ``ext`` is the 2L+1 extended
    label sequence; log_alpha[t, s] includes the emission at t, log_beta[t, s]
    includes emissions at t..T-1.
    """
    T = log_probs.shape[0]
    S = ext.shape[0]
    log_alpha = np.full((T, S), -np.inf)
    log_beta = np.full((T, S), -np.inf)

    log_alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        log_alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            acc = log_alpha[t - 1, s]
            if s >= 1:
                acc = _log_add(acc, log_alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != BLANK and ext[s] != ext[s - 2]:
                acc = _log_add(acc, log_alpha[t - 1, s - 2])
            log_alpha[t, s] = acc + log_probs[t, ext[s]]

    log_beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        log_beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S - 1, -1, -1):
            acc = log_beta[t + 1, s]
            if s + 1 < S:
                acc = _log_add(acc, log_beta[t + 1, s + 1])
            if s + 2 < S and ext[s] != BLANK and ext[s] != ext[s + 2]:
                acc = _log_add(acc, log_beta[t + 1, s + 2])
            log_beta[t, s] = acc + log_probs[t, ext[s]]

    log_z = log_alpha[T - 1, S - 1]
    if S > 1:
        log_z = _log_add(log_z, log_alpha[T - 1, S - 2])
    return log_alpha, log_beta, log_z


@njit(cache=True)
def _ctc_grad(
    log_probs: np.ndarray,
    ext: np.ndarray,
    log_alpha: np.ndarray,
    log_beta: np.ndarray,
    log_z: float,
) -> np.ndarray:
    """Gradient of -log_z w.r.t. log_probs via state occupancies."""
    T, V = log_probs.shape
    S = ext.shape[0]
    grad = np.zeros((T, V))
    for t in range(T):
        # log occupancy per symbol; alpha and beta both include the emission
        # at t, so it is divided out once.
        log_occ = np.full(V, -np.inf)
        for s in range(S):
            v = ext[s]
            contrib = log_alpha[t, s] + log_beta[t, s] - log_probs[t, v]
            log_occ[v] = _log_add(log_occ[v], contrib)
        for v in range(V):
            if log_occ[v] != -np.inf:
                grad[t, v] = -np.exp(log_occ[v] - log_z)
    return grad


def ctc_loss(log_probs: np.ndarray, target: Sequence[int]):
    """Negative log-probability of ``target`` under the CTC alignment model.

    Args:
        log_probs: T x V matrix of per-frame log-distributions.
        target: label sequence of length L >= 1, no blanks.

    Returns:
        LossResult with ``value`` = -log p(target) and ``grad`` the exact
        gradient w.r.t. ``log_probs`` (negative per-frame symbol occupancy).

    Raises:
        ValueError: blank in target, or T < L + adjacent-repeat count.
    """
    from .losses import LossResult

    log_probs = np.ascontiguousarray(np.asarray(log_probs, dtype=np.float64))
    if log_probs.ndim != 2:
        raise ValueError(f"log_probs must be 2-D, got shape {log_probs.shape}")
    T, V = log_probs.shape
    tgt = check_target(target, V)
    if T < min_input_length(tgt):
        raise ValueError("target longer than input permits")

    ext = np.zeros(2 * tgt.size + 1, dtype=np.int64)
    ext[1::2] = tgt
    log_alpha, log_beta, log_z = _ctc_forward_backward(log_probs, ext)
    grad = _ctc_grad(log_probs, ext, log_alpha, log_beta, float(log_z))
    return LossResult(value=float(-log_z), grad=grad)


def greedy_decode(posterior: np.ndarray) -> list[int]:
    """Per-frame argmax labels; ties break toward the smaller token index."""
    probs = check_posterior(posterior)
    return [int(k) for k in np.argmax(probs, axis=1)]


def collapse(frame_labels: Sequence[int]) -> list[int]:
    """Standard CTC collapse: merge repeated runs, then drop blanks."""
    out: list[int] = []
    prev = None
    for lab in frame_labels:
        lab = int(lab)
        if lab != prev:
            out.append(lab)
        prev = lab
    return [lab for lab in out if lab != BLANK]
