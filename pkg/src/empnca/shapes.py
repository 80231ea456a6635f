"""Target shapes for morphogenesis runs.

Built-in generators always cover the seed cell (M // 2, M // 2). Files are
either plain text grids of '0'/'1' characters or plain PBM (P1).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    EmptyTargetError,
    SeedOutsideTargetError,
    TargetDimensionError,
    TargetError,
    TargetParseError,
)


@dataclass(frozen=True, eq=False)
class TargetShape:
    mask: np.ndarray
    name: str = "target"

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise TargetDimensionError(f"target must be square, got {mask.shape}")
        if not mask.any():
            raise EmptyTargetError(f"target {self.name!r} has no cells")
        object.__setattr__(self, "mask", mask)

    @property
    def M(self) -> int:
        return self.mask.shape[0]

    @property
    def contains_seed(self) -> bool:
        return bool(self.mask[self.M // 2, self.M // 2])

    def __eq__(self, other):
        if not isinstance(other, TargetShape):
            return NotImplemented
        return np.array_equal(self.mask, other.mask)


def square_target(M: int, side: int) -> TargetShape:
    # equals (M - side) // 2 except for odd side on even M, where the square is
    # centred on the seed so the seed stays inside; even side on odd M sits one
    # cell toward the top-left
    if not 0 < side <= M:
        raise TargetError(f"square side must lie in (0, {M}], got {side}")
    off = M // 2 - side // 2
    mask = np.zeros((M, M), dtype=bool)
    mask[off : off + side, off : off + side] = True
    return TargetShape(mask, f"square:{side}")


def triangle_target(M: int, base: int) -> TargetShape:
    """Up-pointing isoceles triangle whose bottom row is centred on the seed."""
    if base % 2 == 0:
        raise TargetError(f"triangle base must be odd, got {base}")
    if not 0 < base <= M:
        raise TargetError(f"triangle base must lie in (0, {M}], got {base}")
    c = M // 2
    height = (base + 1) // 2
    mask = np.zeros((M, M), dtype=bool)
    for r in range(height):
        row = c - (height - 1) + r
        mask[row, c - r : c + r + 1] = True
    return TargetShape(mask, f"triangle:{base}")


def x_target(M: int, arm: int) -> TargetShape:
    c = M // 2
    if arm < 0 or c + arm > M - 1 or c - arm < 0:
        raise TargetError(f"x arm {arm} does not fit on a {M}x{M} grid")
    mask = np.zeros((M, M), dtype=bool)
    for i in range(-arm, arm + 1):
        mask[c + i, c + i] = True
        mask[c + i, c - i] = True
    return TargetShape(mask, f"x:{arm}")


def _parse(text: str) -> np.ndarray:
    stripped = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    tokens = " ".join(stripped).split()
    if tokens and tokens[0] == "P1":
        try:
            width, height = int(tokens[1]), int(tokens[2])
        except (IndexError, ValueError) as exc:
            raise TargetParseError("malformed PBM header") from exc
        bits = "".join(tokens[3:])
        if len(bits) != width * height or set(bits) - {"0", "1"}:
            raise TargetParseError(f"PBM body does not hold {width}x{height} bits")
        return np.array([b == "1" for b in bits], dtype=bool).reshape(height, width)
    rows = [ln for ln in stripped if ln]
    if not rows:
        raise TargetParseError("empty target file")
    if any(set(row) - {"0", "1"} for row in rows):
        raise TargetParseError("text targets may only contain '0' and '1'")
    if len({len(row) for row in rows}) != 1:
        raise TargetParseError("text target rows differ in length")
    return np.array([[ch == "1" for ch in row] for row in rows], dtype=bool)


def load_target(path, M: Optional[int] = None, allow_seed_outside: bool = False) -> TargetShape:
    path = Path(path)
    mask = _parse(path.read_text())
    if mask.shape[0] != mask.shape[1]:
        raise TargetDimensionError(f"{path}: target must be square, got {mask.shape}")
    if M is not None and mask.shape[0] != M:
        raise TargetDimensionError(f"{path}: target is {mask.shape[0]}x{mask.shape[0]}, grid is {M}x{M}")
    if not mask.any():
        raise EmptyTargetError(f"{path}: target has no cells")
    shape = TargetShape(mask, f"file:{path.name}")
    if not shape.contains_seed:
        if not allow_seed_outside:
            raise SeedOutsideTargetError(f"{path}: seed cell lies outside the target")
        warnings.warn(f"{path}: seed cell lies outside the target", stacklevel=2)
    return shape


def save_target(shape: TargetShape, path) -> None:
    """Write as PBM when the suffix is .pbm, otherwise as a text grid."""
    path = Path(path)
    rows = ["".join("1" if v else "0" for v in row) for row in shape.mask]
    if path.suffix.lower() == ".pbm":
        body = "\n".join(" ".join(row) for row in rows)
        path.write_text(f"P1\n{shape.M} {shape.M}\n{body}\n")
    else:
        path.write_text("\n".join(rows) + "\n")


def biped_target(M: int = 25) -> TargetShape:
    """Hand-drawn soft biped on a 25x25 grid (an approximation, not a reproduction)."""
    ref = resources.files("empnca") / "data" / "biped.txt"
    with resources.as_file(ref) as p:
        shape = load_target(p, M=M)
    return TargetShape(shape.mask, "biped")


def parse_target(spec: str, M: int) -> TargetShape:
    """Parse ``square:12``, ``triangle:13``, ``x:5``, ``biped`` or ``file:<path>``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "square":
            return square_target(M, int(arg))
        if kind == "triangle":
            return triangle_target(M, int(arg))
        if kind == "x":
            return x_target(M, int(arg))
    except ValueError as exc:
        if isinstance(exc, TargetError):
            raise
        raise TargetParseError(f"bad target spec {spec!r}") from exc
    if kind == "biped":
        return biped_target(M)
    if kind == "file":
        return load_target(arg, M=M)
    raise TargetParseError(f"unknown target spec {spec!r}")
