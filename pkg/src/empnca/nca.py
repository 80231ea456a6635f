"""Two-channel neural cellular automaton.

Each grid cell carries a live/dead flag and an integer signal in [0, 255].
Every live cell runs the same single-layer network on its Von Neumann
neighbourhood, sets its own signal, and may replicate into its four
neighbours. Cells are visited in row-major order and updates are written in
place, so a cell can see neighbours already updated during the same pass.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidDimensionError, InvalidGenomeError

N_INPUTS = 10
N_OUTPUTS = 5
N_PARAMS = N_OUTPUTS * N_INPUTS + N_OUTPUTS

# up, down, left, right
DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class DeathRule(str, enum.Enum):
    """How a zero replication bit treats the neighbouring cell.

    LITERAL_REPLICATE leaves it untouched, so cells never die.
    OVERWRITE_ALWAYS writes it dead with signal 0.
    """

    LITERAL_REPLICATE = "literal_replicate"
    OVERWRITE_ALWAYS = "overwrite_always"


@dataclass(frozen=True, eq=False)
class GridState:
    alive: np.ndarray
    signal: np.ndarray

    def __post_init__(self):
        alive = np.asarray(self.alive, dtype=bool)
        signal = np.asarray(self.signal)
        if alive.ndim != 2 or alive.shape[0] != alive.shape[1] or signal.shape != alive.shape:
            raise InvalidDimensionError(f"grid must be square, got {alive.shape} / {signal.shape}")
        if signal.size and (signal.min() < 0 or signal.max() > 255):
            raise ValueError("signal values must lie in [0, 255]")
        object.__setattr__(self, "alive", alive)
        object.__setattr__(self, "signal", signal.astype(np.uint8))

    @property
    def size(self) -> int:
        return self.alive.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GridState):
            return NotImplemented
        return np.array_equal(self.alive, other.alive) and np.array_equal(self.signal, other.signal)

    def __hash__(self):
        return hash((self.alive.tobytes(), self.signal.tobytes()))


class Genome:
    """Parameters of the per-cell network: a 5x10 weight matrix and 5 biases."""

    __slots__ = ("weights", "bias", "id", "parent_id")

    def __init__(self, weights, bias, id: int = 0, parent_id: Optional[int] = None):
        self.weights = np.array(weights, dtype=np.float64).reshape(N_OUTPUTS, N_INPUTS)
        self.bias = np.array(bias, dtype=np.float64).reshape(N_OUTPUTS)
        self.id = int(id)
        self.parent_id = None if parent_id is None else int(parent_id)

    @classmethod
    def zeros(cls, id: int = 0) -> "Genome":
        return cls(np.zeros((N_OUTPUTS, N_INPUTS)), np.zeros(N_OUTPUTS), id=id)

    @classmethod
    def from_parameters(cls, params, id: int = 0, parent_id: Optional[int] = None) -> "Genome":
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (N_PARAMS,):
            raise InvalidGenomeError(f"expected {N_PARAMS} parameters, got {params.shape}")
        return cls(params[: N_OUTPUTS * N_INPUTS], params[N_OUTPUTS * N_INPUTS :], id, parent_id)

    def parameters(self) -> np.ndarray:
        """Flat view: weights row-major, then bias."""
        return np.concatenate([self.weights.ravel(), self.bias])

    def validate(self) -> None:
        params = self.parameters()
        if not np.all(np.isfinite(params)):
            raise InvalidGenomeError(f"genome {self.id} has non-finite parameters")
        if np.any(np.abs(params) > 1.0):
            raise InvalidGenomeError(f"genome {self.id} has parameters outside [-1, 1]")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent_id": self.parent_id,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Genome":
        weights = data["weights"]
        if len(weights) != N_OUTPUTS or any(len(row) != N_INPUTS for row in weights):
            raise InvalidGenomeError("weights must be 5 arrays of 10 numbers")
        if len(data["bias"]) != N_OUTPUTS:
            raise InvalidGenomeError("bias must be an array of 5 numbers")
        return cls(weights, data["bias"], data["id"], data.get("parent_id"))

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return (
            self.id == other.id
            and self.parent_id == other.parent_id
            and self.parameters().tobytes() == other.parameters().tobytes()
        )

    def __repr__(self):
        return f"Genome(id={self.id}, parent_id={self.parent_id})"


def save_genome(genome: Genome, path) -> None:
    Path(path).write_text(json.dumps(genome.to_dict(), indent=2) + "\n")


def load_genome(path) -> Genome:
    return Genome.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CellStep:
    row: int
    col: int
    step: int
    action: Optional[int]
    sensor: Optional[int]
    executed: bool


class RolloutTrace:
    """Per-step records of a rollout.

    ``actions`` and ``sensors`` have shape (N, M, M); index ``n - 1`` holds
    update ``n`` and -1 marks a cell that was dead at its visit. ``alive`` and
    ``signal`` hold the N+1 grids (index 0 is the seed) when recorded.
    """

    def __init__(self, actions, sensors, alive=None, signal=None):
        self.actions = actions
        self.sensors = sensors
        self.alive = alive
        self.signal = signal

    @property
    def N(self) -> int:
        return self.actions.shape[0]

    @property
    def M(self) -> int:
        return self.actions.shape[1]

    @property
    def executed(self) -> np.ndarray:
        return self.actions >= 0

    @property
    def has_grids(self) -> bool:
        return self.alive is not None

    def grid(self, n: int) -> GridState:
        if not self.has_grids:
            raise ValueError("trace was recorded without grids")
        return GridState(self.alive[n].astype(bool), self.signal[n])

    @property
    def grids(self) -> Optional[list]:
        if not self.has_grids:
            return None
        return [self.grid(n) for n in range(self.N + 1)]

    def cell_steps(self) -> Iterator[CellStep]:
        for n in range(self.N):
            for r in range(self.M):
                for c in range(self.M):
                    a = int(self.actions[n, r, c])
                    if a >= 0:
                        yield CellStep(r, c, n + 1, a, int(self.sensors[n, r, c]), True)
                    else:
                        yield CellStep(r, c, n + 1, None, None, False)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.actions, self.sensors, self.alive, self.signal):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def new_seed_grid(M: int) -> GridState:
    if M < 3:
        raise InvalidDimensionError(f"grid side must be >= 3, got {M}")
    alive = np.zeros((M, M), dtype=bool)
    alive[M // 2, M // 2] = True
    return GridState(alive, np.zeros((M, M), dtype=np.uint8))


def cell_inputs(grid: GridState, row: int, col: int) -> list:
    """Network input vector for one cell.

    Order: alive flags up, down, left, right, self; then signals (scaled to
    [0, 1]) in the same order. Off-grid neighbours read as dead with signal 0.
    """
    M = grid.size
    alive = []
    signal = []
    for dr, dc in DIRECTIONS + ((0, 0),):
        r, c = row + dr, col + dc
        if 0 <= r < M and 0 <= c < M:
            alive.append(float(grid.alive[r, c]))
            signal.append(int(grid.signal[r, c]) / 255.0)
        else:
            alive.append(0.0)
            signal.append(0.0)
    return alive + signal


def network_forward(genome: Genome, inputs: Sequence[float]) -> tuple:
    """Returns ``(replicate_bits, new_signal)``.

    Bits fire on positive pre-activation; the signal is the logistic output
    binned as floor(256 * sigmoid), capped at 255.
    """
    params = genome.parameters()
    if not np.all(np.isfinite(params)):
        raise InvalidGenomeError(f"genome {genome.id} has non-finite parameters")
    w = genome.weights.tolist()
    b = genome.bias.tolist()
    x = [float(v) for v in inputs]
    z = []
    for o in range(N_OUTPUTS):
        acc = b[o]
        for i in range(N_INPUTS):
            acc = acc + w[o][i] * x[i]
        z.append(acc)
    bits = tuple(v > 0.0 for v in z[:4])
    y = math.floor(256.0 * (1.0 / (1.0 + math.exp(-z[4]))))
    return bits, min(max(y, 0), 255)


def _run(genome: Genome, grid: GridState, n_steps: int, death_rule, synchronous: bool):
    genome.validate()
    death_rule = DeathRule(death_rule)
    return kernels.rollout_kernel(
        np.ascontiguousarray(genome.weights),
        np.ascontiguousarray(genome.bias),
        np.ascontiguousarray(grid.alive, dtype=np.uint8),
        np.ascontiguousarray(grid.signal, dtype=np.uint8),
        int(n_steps),
        death_rule is DeathRule.OVERWRITE_ALWAYS,
        bool(synchronous),
    )


def step(
    grid: GridState,
    genome: Genome,
    death_rule=DeathRule.OVERWRITE_ALWAYS,
    synchronous: bool = False,
) -> tuple:
    """One raster pass. Returns the new grid and a CellStep for every cell."""
    alive, signal, actions, sensors = _run(genome, grid, 1, death_rule, synchronous)
    trace = RolloutTrace(actions, sensors)
    return GridState(alive[1].astype(bool), signal[1]), list(trace.cell_steps())


def rollout(
    genome: Genome,
    M: int,
    N: int,
    record_grids: bool = True,
    death_rule=DeathRule.OVERWRITE_ALWAYS,
    synchronous: bool = False,
) -> RolloutTrace:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    alive, signal, actions, sensors = _run(genome, new_seed_grid(M), N, death_rule, synchronous)
    if not record_grids:
        return RolloutTrace(actions, sensors)
    return RolloutTrace(actions, sensors, alive, signal)


def write_frames(trace: RolloutTrace, out_dir) -> list:
    """Write every recorded grid as ``frame_%04d.pbm`` (alive) and ``.pgm`` (signal)."""
    if not trace.has_grids:
        raise ValueError("trace was recorded without grids")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    M = trace.M
    written = []
    for n in range(trace.N + 1):
        pbm = out_dir / f"frame_{n:04d}.pbm"
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in trace.alive[n])
        pbm.write_text(f"P1\n{M} {M}\n{rows}\n")
        pgm = out_dir / f"frame_{n:04d}.pgm"
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in trace.signal[n])
        pgm.write_text(f"P2\n{M} {M}\n255\n{rows}\n")
        written += [pbm, pgm]
    return written


def render_ascii(grid: GridState) -> str:
    """Dead cells as '.', live cells as a digit 0-9 giving signal // 26."""
    lines = []
    for r in range(grid.size):
        lines.append(
            "".join(
                str(int(grid.signal[r, c]) // 26) if grid.alive[r, c] else "."
                for c in range(grid.size)
            )
        )
    return "\n".join(lines)
