"""Key-frame selection and frame-count reduction driven by CTC posteriors.

A key frame represents one non-blank run of the greedy decode: the frame
within the run where the run label's posterior peaks. Downsampling keeps
either the key frames alone or the key frames plus a small temporal context,
and can fuse each kept frame with its neighbors, either by a parameter-free
per-channel softmax weighting or by concatenation through a linear
projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ctc import BLANK, check_posterior, collapse, greedy_decode

__all__ = [
    "KeyFrameSet",
    "FusionConfig",
    "DownsampleResult",
    "select_key_frames",
    "expand_context",
    "fuse_attention",
    "fuse_attention_vjp",
    "fuse_concatenate",
    "fuse_concatenate_vjp",
    "drop_ratio",
]


@dataclass(frozen=True)
class KeyFrameSet:
    """Strictly increasing frame indices with the token each one carries."""

    indices: tuple[int, ...]
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.labels):
            raise ValueError("indices and labels must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("key frame indices must be strictly increasing")
        if any(lab == BLANK for lab in self.labels):
            raise ValueError("key frame labels must not contain blank")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class FusionConfig:
    """How kept frames absorb their temporal context."""

    mode: str = "none"  # none | attention | concatenate
    left: int = 1
    right: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("none", "attention", "concatenate"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if self.left < 0 or self.right < 0:
            raise ValueError("context widths must be non-negative")


@dataclass(frozen=True)
class DownsampleResult:
    """Kept (possibly fused) frame vectors and where they came from."""

    frames: np.ndarray  # K x d
    kept_indices: tuple[int, ...]
    drop_ratio: float


def select_key_frames(posterior: np.ndarray) -> KeyFrameSet:
    """One key frame per non-blank run of the greedy decode.

    Within a run the key frame is the one whose posterior for the run label
    is maximal (earliest frame on ties). An all-blank decode yields an empty
    set; callers decide how to proceed.
    """
    probs = check_posterior(posterior)
    decoded = greedy_decode(probs)
    indices: list[int] = []
    labels: list[int] = []
    t = 0
    T = len(decoded)
    while t < T:
        lab = decoded[t]
        start = t
        while t < T and decoded[t] == lab:
            t += 1
        if lab != BLANK:
            run = probs[start:t, lab]
            indices.append(start + int(np.argmax(run)))
            labels.append(lab)
    return KeyFrameSet(indices=tuple(indices), labels=tuple(labels))


def _key_indices(keys) -> np.ndarray:
    if isinstance(keys, KeyFrameSet):
        return np.asarray(keys.indices, dtype=np.int64)
    return np.asarray(keys, dtype=np.int64)


def expand_context(keys, left: int, right: int, total_frames: int) -> list[int]:
    """Union of [k - left, k + right] windows, clipped to [0, T), sorted."""
    idx = _key_indices(keys)
    if idx.size == 0:
        return []
    if idx.max() >= total_frames:
        raise ValueError("key frame index beyond frame count")
    offsets = np.arange(-left, right + 1)
    expanded = (idx[:, None] + offsets[None, :]).ravel()
    expanded = expanded[(expanded >= 0) & (expanded < total_frames)]
    return sorted(set(int(i) for i in expanded))


def _windows(frames: np.ndarray, centers: np.ndarray, left: int, right: int):
    """Clipped window positions (K x W) and a validity mask; no replication."""
    offsets = np.arange(-left, right + 1)
    pos = centers[:, None] + offsets[None, :]
    mask = (pos >= 0) & (pos < frames.shape[0])
    return np.clip(pos, 0, frames.shape[0] - 1), mask


def fuse_attention(
    frames: np.ndarray, keys, left: int = 1, right: int = 1
) -> DownsampleResult:
    """Parameter-free fusion: per-channel softmax over each kept window.

    For a kept frame t the window h[t-left .. t+right] (clipped at the
    boundaries) is reduced to one vector: every channel independently
    softmax-weights the window frames by its own values and takes the
    weighted sum. The output is therefore a per-channel convex combination
    of the window.
    """
    frames = np.asarray(frames, dtype=np.float64)
    T = frames.shape[0]
    centers = _key_indices(keys)
    if centers.size == 0:
        return DownsampleResult(
            frames=np.zeros((0, frames.shape[1])), kept_indices=(), drop_ratio=1.0
        )
    if centers.max() >= T:
        raise ValueError("key frame index beyond frame count")

    pos, mask = _windows(frames, centers, left, right)
    values = frames[pos]  # K x W x d
    scores = np.where(mask[:, :, None], values, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    fused = np.einsum("kwd,kwd->kd", weights, np.where(mask[:, :, None], values, 0.0))
    return DownsampleResult(
        frames=fused,
        kept_indices=tuple(int(c) for c in centers),
        drop_ratio=drop_ratio(T, centers.size),
    )


def fuse_attention_vjp(
    frames: np.ndarray, keys, grad_out: np.ndarray, left: int = 1, right: int = 1
) -> np.ndarray:
    """Backpropagate ``grad_out`` (K x d) through fuse_attention to the frames.

    With per-channel weights s = softmax(x) over window values x and output
    o = sum_k s_k x_k, the window derivative is do/dx_j = s_j (1 + x_j - o).
    Overlapping windows accumulate.
    """
    frames = np.asarray(frames, dtype=np.float64)
    centers = _key_indices(keys)
    grad_frames = np.zeros_like(frames)
    if centers.size == 0:
        return grad_frames
    pos, mask = _windows(frames, centers, left, right)
    values = frames[pos]
    scores = np.where(mask[:, :, None], values, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    masked_values = np.where(mask[:, :, None], values, 0.0)
    fused = np.einsum("kwd,kwd->kd", weights, masked_values)
    local = weights * (1.0 + masked_values - fused[:, None, :])  # K x W x d
    contrib = local * grad_out[:, None, :]
    K, W = pos.shape
    for k in range(K):
        for w in range(W):
            if mask[k, w]:
                grad_frames[pos[k, w]] += contrib[k, w]
    return grad_frames


def _concat_windows(frames: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """K x 3d matrix of [h_{t-1}, h_t, h_{t+1}] rows, edges replicated."""
    T = frames.shape[0]
    prev_idx = np.maximum(centers - 1, 0)
    next_idx = np.minimum(centers + 1, T - 1)
    return np.concatenate([frames[prev_idx], frames[centers], frames[next_idx]], axis=1)


def fuse_concatenate(
    frames: np.ndarray, keys, projection: np.ndarray, left: int = 1, right: int = 1
) -> DownsampleResult:
    """Concatenate each kept frame with its two neighbors, project back to d.

    The window is fixed at three frames (left = right = 1); boundary frames
    are replicated at the edges so the projection input width is always 3d.
    """
    if (left, right) != (1, 1):
        raise ValueError("concatenate fusion is fixed at one frame of context per side")
    frames = np.asarray(frames, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    T, d = frames.shape
    if projection.shape != (3 * d, d):
        raise ValueError(
            f"projection must have shape {(3 * d, d)}, got {projection.shape}"
        )
    centers = _key_indices(keys)
    if centers.size == 0:
        return DownsampleResult(frames=np.zeros((0, d)), kept_indices=(), drop_ratio=1.0)
    if centers.max() >= T:
        raise ValueError("key frame index beyond frame count")
    fused = _concat_windows(frames, centers) @ projection
    return DownsampleResult(
        frames=fused,
        kept_indices=tuple(int(c) for c in centers),
        drop_ratio=drop_ratio(T, centers.size),
    )


def fuse_concatenate_vjp(
    frames: np.ndarray, keys, projection: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of fuse_concatenate w.r.t. frames and projection."""
    frames = np.asarray(frames, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    centers = _key_indices(keys)
    T, d = frames.shape
    grad_frames = np.zeros_like(frames)
    if centers.size == 0:
        return grad_frames, np.zeros_like(projection)
    concat = _concat_windows(frames, centers)
    grad_projection = concat.T @ grad_out
    grad_concat = grad_out @ projection.T  # K x 3d
    prev_idx = np.maximum(centers - 1, 0)
    next_idx = np.minimum(centers + 1, T - 1)
    np.add.at(grad_frames, prev_idx, grad_concat[:, :d])
    np.add.at(grad_frames, centers, grad_concat[:, d : 2 * d])
    np.add.at(grad_frames, next_idx, grad_concat[:, 2 * d :])
    return grad_frames, grad_projection


def drop_ratio(total_frames: int, kept: int) -> float:
    """Fraction of frames discarded: 1 - kept / total."""
    if total_frames <= 0:
        raise ValueError("frame count must be positive")
    if kept < 0 or kept > total_frames:
        raise ValueError("kept count must lie in [0, total]")
    return 1.0 - kept / total_frames
