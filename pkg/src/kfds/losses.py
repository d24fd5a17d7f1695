"""Length-similar losses for frame sequences whose length is close to the text.

Two losses cover the regime where CTC no longer applies:

* ``til_loss`` removes time entirely: it compares the summed target one-hots
  against the summed prediction distributions with a KL-style divergence.
* ``axe_loss`` keeps order but not position: it minimizes cross-entropy over
  all monotonic target-to-prediction alignments, charging unaligned
  predictions the blank (epsilon) log-probability.

``positional_ce`` is the rigid comparator both improve on, and
``joint_objective`` combines the training terms with fixed weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ctc import BLANK, check_posterior, check_target

# Probability floor inside TIL's logarithm; summed prediction mass can be
# arbitrarily small at initialization.
TIL_PROB_FLOOR = 1e-12

# Alignment DP transition codes, in tie-break preference order.
_ALIGN, _SKIP_PRED, _SKIP_TARGET = 0, 1, 2

__all__ = [
    "AlignmentPath",
    "LossResult",
    "JointWeights",
    "til_loss",
    "axe_loss",
    "aligned_path_cost",
    "positional_ce",
    "joint_objective",
]


@dataclass(frozen=True)
class AlignmentPath:
    """Monotonic map from target positions to prediction positions.

    ``target_to_pred[i]`` is the 0-based prediction index assigned to target
    i; the sequence is non-decreasing (several targets may share one
    prediction). ``epsilon_positions`` are the prediction indices assigned to
    no target; they pay the blank log-probability.
    """

    target_to_pred: tuple[int, ...]
    epsilon_positions: frozenset[int]

    def validate(self, n_targets: int, n_predictions: int) -> None:
        a = self.target_to_pred
        if len(a) != n_targets:
            raise ValueError(f"alignment covers {len(a)} targets, expected {n_targets}")
        if any(j < 0 or j >= n_predictions for j in a):
            raise ValueError("alignment position out of range")
        if any(a[i] > a[i + 1] for i in range(len(a) - 1)):
            raise ValueError("alignment is not non-decreasing")
        expected_eps = frozenset(range(n_predictions)) - set(a)
        if self.epsilon_positions != expected_eps:
            raise ValueError("epsilon positions do not complement the alignment range")


@dataclass(frozen=True)
class LossResult:
    """Scalar loss with its gradient; AXE also carries the chosen alignment."""

    value: float
    grad: np.ndarray
    aux: Optional[AlignmentPath] = None


@dataclass(frozen=True)
class JointWeights:
    """Mixing weights for the joint objective (defaults 0.2, 0.1, 0.7)."""

    alpha0: float = 0.2
    alpha1: float = 0.1
    alpha2: float = 0.7

    def __post_init__(self) -> None:
        if min(self.alpha0, self.alpha1, self.alpha2) < 0:
            raise ValueError("joint weights must be non-negative")


def til_loss(posterior: np.ndarray, target: Sequence[int]) -> LossResult:
    """Time-independence loss between summed one-hots and summed predictions.

    With class counts Yc = #{i : target_i = c} and summed prediction mass
    Pc = sum_t posterior[t, c]:

        value = sum_c Yc * ln(Yc / max(Pc, floor))      (0 * ln 0 := 0)

    The gradient w.r.t. posterior[t, c] is -Yc / max(Pc, floor), identical
    across t. Both sums discard ordering, so the value is invariant under
    any permutation of frames or of target tokens.
    """
    probs = check_posterior(posterior)
    T, V = probs.shape
    tgt = check_target(target, V)

    counts = np.bincount(tgt, minlength=V).astype(np.float64)
    pred_mass = probs.sum(axis=0)
    clamped = np.maximum(pred_mass, TIL_PROB_FLOOR)

    present = counts > 0
    value = float(np.sum(counts[present] * np.log(counts[present] / clamped[present])))

    grad_row = np.zeros(V)
    grad_row[present] = -counts[present] / clamped[present]
    grad = np.broadcast_to(grad_row, (T, V)).copy()
    return LossResult(value=value, grad=grad)


def _axe_dp(log_probs: np.ndarray, tgt: np.ndarray) -> tuple[float, np.ndarray]:
    """Fill the (L+1) x (T+1) alignment table and its backpointers.

    Cell [i, j] holds the cheapest cost of aligning the first i targets while
    accounting for the first j predictions (aligned or epsilon-paid). Three
    transitions per cell; ties prefer align, then skip-prediction, then
    skip-target, which keeps the recovered path deterministic.
    """
    T = log_probs.shape[0]
    L = tgt.size
    eps_cost = -log_probs[:, BLANK]
    cost = np.full((L + 1, T + 1), np.inf)
    choice = np.full((L + 1, T + 1), -1, dtype=np.int8)
    cost[0, 0] = 0.0
    for j in range(1, T + 1):
        cost[0, j] = cost[0, j - 1] + eps_cost[j - 1]
        choice[0, j] = _SKIP_PRED
    for i in range(1, L + 1):
        tok_cost = -log_probs[:, tgt[i - 1]]
        for j in range(1, T + 1):
            best = cost[i - 1, j - 1] + tok_cost[j - 1]
            best_choice = _ALIGN
            skip_pred = cost[i, j - 1] + eps_cost[j - 1]
            if skip_pred < best:
                best = skip_pred
                best_choice = _SKIP_PRED
            skip_target = cost[i - 1, j] + tok_cost[j - 1]
            if skip_target < best:
                best = skip_target
                best_choice = _SKIP_TARGET
            cost[i, j] = best
            choice[i, j] = best_choice
    return float(cost[L, T]), choice


def _axe_backtrace(choice: np.ndarray, L: int, T: int) -> AlignmentPath:
    align = [0] * L
    eps: set[int] = set()
    i, j = L, T
    while j > 0 or i > 0:
        c = choice[i, j]
        if c == _ALIGN:
            align[i - 1] = j - 1
            i -= 1
            j -= 1
        elif c == _SKIP_PRED:
            eps.add(j - 1)
            j -= 1
        else:
            align[i - 1] = j - 1
            i -= 1
    return AlignmentPath(target_to_pred=tuple(align), epsilon_positions=frozenset(eps))


def aligned_path_cost(
    log_probs: np.ndarray, target: Sequence[int], path: AlignmentPath
) -> LossResult:
    """Cross-entropy of one fixed alignment: the objective AXE minimizes.

    Linear in ``log_probs``; the gradient counts how often each coordinate is
    read, negated.
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    T, V = log_probs.shape
    tgt = check_target(target, V)
    path.validate(tgt.size, T)

    grad = np.zeros_like(log_probs)
    value = 0.0
    for i, j in enumerate(path.target_to_pred):
        value -= log_probs[j, tgt[i]]
        grad[j, tgt[i]] -= 1.0
    for k in path.epsilon_positions:
        value -= log_probs[k, BLANK]
        grad[k, BLANK] -= 1.0
    return LossResult(value=float(value), grad=grad, aux=path)


def axe_loss(log_probs: np.ndarray, target: Sequence[int]) -> LossResult:
    """Aligned cross-entropy: minimum CE over monotonic alignments.

    Dynamic program over (targets x predictions); epsilon is the blank token.
    The returned gradient is the subgradient through the optimal alignment
    (the gradient of ``aligned_path_cost`` at the argmin path, which ``aux``
    carries).
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if log_probs.ndim != 2:
        raise ValueError(f"log_probs must be 2-D, got shape {log_probs.shape}")
    T, V = log_probs.shape
    tgt = check_target(target, V)

    value, choice = _axe_dp(log_probs, tgt)
    path = _axe_backtrace(choice, tgt.size, T)
    fixed = aligned_path_cost(log_probs, tgt, path)
    return LossResult(value=value, grad=fixed.grad, aux=path)


def positional_ce(log_probs: np.ndarray, target: Sequence[int]) -> LossResult:
    """Position-by-position cross-entropy; requires T = L."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    T, V = log_probs.shape
    tgt = check_target(target, V)
    if T != tgt.size:
        raise ValueError("positional CE requires equal lengths")
    grad = np.zeros_like(log_probs)
    grad[np.arange(T), tgt] = -1.0
    value = float(-log_probs[np.arange(T), tgt].sum())
    return LossResult(value=value, grad=grad)


def joint_objective(inter_ctc: float, lsl: float, ce: float, w: JointWeights) -> float:
    """alpha0 * inter_ctc + alpha1 * lsl + alpha2 * ce."""
    terms = (inter_ctc, lsl, ce)
    if not all(np.isfinite(t) for t in terms):
        raise ValueError("joint objective terms must be finite")
    return w.alpha0 * inter_ctc + w.alpha1 * lsl + w.alpha2 * ce
