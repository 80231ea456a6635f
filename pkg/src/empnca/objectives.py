"""Objective functions evaluated on rollout traces.

Empowerment here is the observed (plug-in) mutual information, in bits,
between a cell's action at step n and its sensor reading at step n + k,
pooled over all cells.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidHorizonError, ShapeMismatchError, UndefinedDistributionError
from .nca import RolloutTrace

ALPHABET = 256


class Direction(str, enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Kind(str, enum.Enum):
    LOSS = "loss"
    EMPOWERMENT = "empowerment"
    LOCAL_ENTROPY_MIN = "local_action_entropy_min"
    LOCAL_ENTROPY_MAX = "local_action_entropy_max"
    GLOBAL_ENTROPY_MIN = "global_action_entropy_min"


@dataclass(frozen=True)
class ObjectiveSpec:
    """One evolutionary objective.

    ``n0``/``n1`` apply to LOSS, ``k``/``crop_last`` to EMPOWERMENT.
    """

    kind: Kind
    n0: int = 0
    n1: int = 0
    k: int = 1
    crop_last: Optional[int] = None

    @property
    def direction(self) -> Direction:
        if self.kind in (Kind.EMPOWERMENT, Kind.LOCAL_ENTROPY_MAX):
            return Direction.MAXIMIZE
        return Direction.MINIMIZE

    @property
    def label(self) -> str:
        if self.kind is Kind.LOSS:
            return f"loss({self.n0},{self.n1})"
        if self.kind is Kind.EMPOWERMENT:
            crop = "" if self.crop_last is None else f",crop={self.crop_last}"
            return f"empowerment(k={self.k}{crop})"
        return self.kind.value

    def validate(self, N: int) -> None:
        if self.kind is Kind.LOSS and not 0 <= self.n0 < self.n1 <= N:
            raise ValueError(f"loss window needs 0 <= n0 < n1 <= N, got ({self.n0}, {self.n1}), N={N}")
        if self.kind is Kind.EMPOWERMENT:
            if not 1 <= self.k <= N - 1:
                raise InvalidHorizonError(f"k must lie in [1, {N - 1}], got {self.k}")
            if self.crop_last is not None and self.crop_last < 1:
                raise ValueError(f"crop_last must be >= 1, got {self.crop_last}")


def Loss(n0: int, n1: int) -> ObjectiveSpec:
    return ObjectiveSpec(Kind.LOSS, n0=n0, n1=n1)


def Empowerment(k: int, crop_last: Optional[int] = None) -> ObjectiveSpec:
    return ObjectiveSpec(Kind.EMPOWERMENT, k=k, crop_last=crop_last)


def loss_series(alive: np.ndarray, target_mask: np.ndarray) -> np.ndarray:
    """Normalized Hamming distance to the target for every frame in ``alive``."""
    target_mask = np.asarray(target_mask, dtype=bool)
    if alive.shape[-2:] != target_mask.shape:
        raise ShapeMismatchError(f"grid {alive.shape[-2:]} vs target {target_mask.shape}")
    M2 = target_mask.size
    diff = alive.astype(bool) != target_mask
    return diff.reshape(diff.shape[0], -1).sum(axis=1) / M2


def loss(trace: RolloutTrace, target, n0: int, n1: int) -> float:
    """Mean normalized Hamming distance to ``target`` over the grids after updates n0+1..n1."""
    if not trace.has_grids:
        raise ValueError("loss needs a trace recorded with grids")
    if not 0 <= n0 < n1 <= trace.N:
        raise ValueError(f"need 0 <= n0 < n1 <= N, got ({n0}, {n1}), N={trace.N}")
    mask = np.asarray(getattr(target, "mask", target), dtype=bool)
    frames = trace.alive[n0 + 1 : n1 + 1]
    if frames.shape[-2:] != mask.shape:
        raise ShapeMismatchError(f"grid {frames.shape[-2:]} vs target {mask.shape}")
    # integer mismatch count first, one division at the end
    mismatches = int((frames.astype(bool) != mask).sum())
    return mismatches / (mask.size * (n1 - n0))


def build_pairs(trace: RolloutTrace, k: int, crop_last: Optional[int] = None) -> np.ndarray:
    """Pooled (action, sensor) pairs as an (n, 2) int array.

    A pair (a_n, s_{n+k}) is emitted for each cell executed at both n and n+k.
    ``crop_last`` keeps, per cell, only the pairs with the largest n.
    """
    N = trace.N
    if not 1 <= k <= N - 1:
        raise InvalidHorizonError(f"k must lie in [1, {N - 1}], got {k}")
    executed = trace.executed
    mask = executed[: N - k] & executed[k:]
    if crop_last is not None:
        # rank from the latest pair backwards, per cell
        from_end = np.cumsum(mask[::-1], axis=0)[::-1]
        mask = mask & (from_end <= crop_last)
    actions = trace.actions[: N - k][mask]
    sensors = trace.sensors[k:][mask]
    return np.stack([actions, sensors], axis=1).astype(np.int64)


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(-(p * np.log2(p)).sum())


def mutual_information(pairs) -> float:
    """Plug-in mutual information in bits of an (n, 2) array of symbols in [0, 255]."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n = pairs.shape[0]
    if n == 0:
        raise UndefinedDistributionError("mutual information of an empty pair set")
    joint = np.bincount(pairs[:, 0] * ALPHABET + pairs[:, 1], minlength=ALPHABET * ALPHABET)
    joint = joint.reshape(ALPHABET, ALPHABET)
    pa = joint.sum(axis=1)
    ps = joint.sum(axis=0)
    ia, is_ = np.nonzero(joint)
    c = joint[ia, is_].astype(np.float64)
    mi = np.sum(c / n * np.log2(c * n / (pa[ia].astype(np.float64) * ps[is_])))
    # rounding can leave a tiny negative residue on independent data
    return max(float(mi), 0.0)


def empowerment(trace: RolloutTrace, k: int, crop_last: Optional[int] = None) -> float:
    pairs = build_pairs(trace, k, crop_last)
    if pairs.shape[0] == 0:
        return 0.0
    if np.all(pairs[:, 0] == pairs[0, 0]) or np.all(pairs[:, 1] == pairs[0, 1]):
        return 0.0
    return mutual_information(pairs)


def local_action_entropy(trace: RolloutTrace, with_flag: bool = False):
    """Mean over cells of the entropy of each cell's own actions.

    With ``with_flag`` returns ``(value, degenerate)``; a trace without any
    executed step scores 0 and is flagged degenerate.
    """
    executed = trace.executed
    N, M, _ = executed.shape
    counts = np.zeros((M * M, ALPHABET), dtype=np.int64)
    cells = np.broadcast_to(np.arange(M * M).reshape(M, M), (N, M, M))[executed]
    np.add.at(counts, (cells, trace.actions[executed]), 1)
    totals = counts.sum(axis=1)
    active = totals > 0
    if not active.any():
        return (0.0, True) if with_flag else 0.0
    c = counts[active].astype(np.float64)
    p = c / totals[active, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(c > 0, -p * np.log2(np.where(c > 0, p, 1.0)), 0.0)
    value = float(terms.sum(axis=1).mean())
    return (value, False) if with_flag else value


def global_action_entropy(trace: RolloutTrace, with_flag: bool = False):
    """Entropy of the action multiset pooled over all cells and steps."""
    actions = trace.actions[trace.executed]
    if actions.size == 0:
        return (0.0, True) if with_flag else 0.0
    value = _entropy_from_counts(np.bincount(actions, minlength=ALPHABET))
    return (value, False) if with_flag else value


def evaluate_objective(spec: ObjectiveSpec, trace: RolloutTrace, target) -> float:
    if spec.kind is Kind.LOSS:
        return loss(trace, target, spec.n0, spec.n1)
    if spec.kind is Kind.EMPOWERMENT:
        return empowerment(trace, spec.k, spec.crop_last)
    if spec.kind in (Kind.LOCAL_ENTROPY_MIN, Kind.LOCAL_ENTROPY_MAX):
        return local_action_entropy(trace)
    if spec.kind is Kind.GLOBAL_ENTROPY_MIN:
        return global_action_entropy(trace)
    raise ValueError(f"unknown objective kind {spec.kind}")
