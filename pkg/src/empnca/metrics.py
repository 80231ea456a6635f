"""Homeostasis and morphology measurements on evolved genomes, plus the rank-sum test."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage, stats

from .nca import DeathRule, GridState, RolloutTrace, rollout
from .objectives import loss_series


def extended_loss_series(
    genome,
    M: int,
    N_evolved: int,
    N_extra: int,
    target,
    death_rule=DeathRule.OVERWRITE_ALWAYS,
) -> list:
    """``[(n, loss_n)]`` for n = 1 .. N_evolved + N_extra."""
    if N_extra < 0:
        raise ValueError(f"N_extra must be >= 0, got {N_extra}")
    trace = rollout(genome, M, N_evolved + N_extra, death_rule=death_rule)
    mask = getattr(target, "mask", target)
    per_step = loss_series(trace.alive[1:], mask)
    return [(n, float(v)) for n, v in enumerate(per_step, start=1)]


def stability_slope(series, window) -> float:
    """Least-squares slope of loss against n over ``window = (n_a, n_b)``, inclusive."""
    n_a, n_b = window
    pts = [(n, v) for n, v in series if n_a <= n <= n_b]
    if len(pts) < 2 or n_b <= n_a:
        raise ValueError(f"window {window} holds fewer than 2 points")
    x = np.array([p[0] for p in pts], dtype=np.float64)
    y = np.array([p[1] for p in pts], dtype=np.float64)
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc * xc).sum())


def hamming(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    return float((a != b).sum() / a.size)


def instability(genome, M: int, N: int, target_unused=None, death_rule=DeathRule.OVERWRITE_ALWAYS) -> float:
    """Distance between the alive mask after 2N updates and after N updates."""
    trace = rollout(genome, M, 2 * N, death_rule=death_rule)
    return hamming(trace.alive[2 * N], trace.alive[N])


def transiency(trace: RolloutTrace, with_flag: bool = False, total: bool = False):
    """Mean number of alive/dead flips per cell after the cell first comes alive.

    ``total=True`` returns the summed flip count instead of the per-cell mean.
    With ``with_flag`` returns ``(value, degenerate)``.
    """
    if not trace.has_grids:
        raise ValueError("transiency needs a trace recorded with grids")
    alive = trace.alive.astype(bool)
    ever = alive.any(axis=0)
    if not ever.any():
        return (0.0, True) if with_flag else 0.0
    # flips between consecutive frames; only those after the first alive frame count
    flips = alive[1:] != alive[:-1]
    seen = np.maximum.accumulate(alive, axis=0)[:-1]
    counts = (flips & seen).sum(axis=0)
    value = float(counts[ever].sum()) if total else float(counts[ever].mean())
    return (value, False) if with_flag else value


_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


def connected_components(grid, connectivity: int = 4) -> int:
    alive = grid.alive if isinstance(grid, GridState) else np.asarray(grid, dtype=bool)
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    _, count = ndimage.label(alive, structure=_FOUR if connectivity == 4 else _EIGHT)
    return int(count)


def boundary_proportion(grid) -> float:
    alive = grid.alive if isinstance(grid, GridState) else np.asarray(grid, dtype=bool)
    n_alive = int(alive.sum())
    if n_alive == 0:
        return 0.0
    edge = np.zeros_like(alive)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    return float((alive & edge).sum() / n_alive)


class RankSumResult(NamedTuple):
    u: float
    pvalue: float


def rank_sum_test(sample_a: Sequence[float], sample_b: Sequence[float], alternative: str = "two-sided") -> RankSumResult:
    """Mann-Whitney U for ``sample_a`` with the tie-corrected normal approximation.

    ``alternative="less"`` tests whether ``sample_a`` tends to be smaller.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 3 or b.size < 3:
        raise ValueError(f"rank-sum test needs >= 3 values per sample, got {a.size} and {b.size}")
    if np.ptp(np.concatenate([a, b])) == 0:
        # all values tied: no evidence either way
        return RankSumResult(a.size * b.size / 2.0, 1.0)
    res = stats.mannwhitneyu(a, b, alternative=alternative, use_continuity=True, method="asymptotic")
    return RankSumResult(float(res.statistic), float(res.pvalue))


def confidence_interval(values: Sequence[float], level: float = 0.95) -> tuple:
    """Normal-approximation interval ``(mean, low, high)`` for the mean."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    if v.size < 2:
        return mean, mean, mean
    half = stats.norm.ppf(0.5 + level / 2) * v.std(ddof=1) / np.sqrt(v.size)
    return mean, float(mean - half), float(mean + half)
