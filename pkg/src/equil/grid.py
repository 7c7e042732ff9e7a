"""Channel discretization, scalar fields, quadrature and differencing primitives."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

FIELD_MAGIC = b"CHNF"
FIELD_HEADER_BYTES = 32


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelGrid:
    """Node-centered grid on the truncated channel [-Lx, Lx] x [-1, 1].

    Both node counts are odd so that x = 0 and y in {-1, 0, 1} fall exactly on
    nodes; the row rearrangement and the stagnation-line diagnostics rely on
    the center node being present.
    """

    nx: int
    ny: int
    Lx: float = 8.0

    def __post_init__(self):
        if self.nx < 3 or self.nx % 2 == 0:
            raise GridError(f"nx must be odd and >= 3, got {self.nx}")
        if self.ny < 3 or self.ny % 2 == 0:
            raise GridError(f"ny must be odd and >= 3, got {self.ny}")
        if not self.Lx > 0:
            raise GridError(f"Lx must be positive, got {self.Lx}")

    @property
    def hx(self) -> float:
        return 2.0 * self.Lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return 2.0 / (self.ny - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.Lx, self.Lx, self.nx)
        x.flags.writeable = False
        return x

    @cached_property
    def y(self) -> np.ndarray:
        y = np.linspace(-1.0, 1.0, self.ny)
        y.flags.writeable = False
        return y

    @cached_property
    def wx(self) -> np.ndarray:
        """Trapezoid weights along x."""
        w = np.full(self.nx, self.hx)
        w[0] = w[-1] = 0.5 * self.hx
        w.flags.writeable = False
        return w

    @cached_property
    def wy(self) -> np.ndarray:
        """Trapezoid weights along y."""
        w = np.full(self.ny, self.hy)
        w[0] = w[-1] = 0.5 * self.hy
        w.flags.writeable = False
        return w

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def refined(self, factor: int = 2) -> "ChannelGrid":
        """Grid with the same box and spacing divided by ``factor``."""
        return ChannelGrid((self.nx - 1) * factor + 1, (self.ny - 1) * factor + 1, self.Lx)


@dataclass(frozen=True)
class Field:
    """Dense real scalar sample on a :class:`ChannelGrid`, shape (nx, ny)."""

    grid: ChannelGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.nx, self.grid.ny):
            raise GridError(
                f"values shape {vals.shape} does not match grid ({self.grid.nx}, {self.grid.ny})"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("field contains non-finite entries")
        object.__setattr__(self, "values", vals)

    @staticmethod
    def zeros(grid: ChannelGrid) -> "Field":
        return Field(grid, np.zeros((grid.nx, grid.ny)))

    @staticmethod
    def from_function(grid: ChannelGrid, fn) -> "Field":
        X, Y = grid.meshgrid()
        return Field(grid, fn(X, Y))


def integrate_values(grid: ChannelGrid, values: np.ndarray) -> float:
    """Trapezoid quadrature of a raw value array over the truncated channel."""
    return float(grid.wx @ values @ grid.wy)


def integrate(f: Field) -> float:
    return integrate_values(f.grid, f.values)


def _diff_axis0(v: np.ndarray, h: float) -> np.ndarray:
    """Centered interior, one-sided second-order edges, in difference form so
    constants differentiate to exactly zero."""
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    d[0] = (4.0 * (v[1] - v[0]) - (v[2] - v[0])) / (2.0 * h)
    d[-1] = (4.0 * (v[-1] - v[-2]) - (v[-1] - v[-3])) / (2.0 * h)
    return d


def gradient_values(grid: ChannelGrid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d/dx, d/dy) by centered differences, one-sided second order at edges."""
    dx = _diff_axis0(values, grid.hx)
    dy = _diff_axis0(values.T, grid.hy).T
    return dx, dy


def gradient(f: Field) -> tuple[Field, Field]:
    dx, dy = gradient_values(f.grid, f.values)
    return Field(f.grid, dx), Field(f.grid, dy)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(integrate_values(f.grid, f.values**2)))


def save_field(f: Field, path) -> None:
    """Write flat little-endian float64 binary with a 32-byte header."""
    header = struct.pack("<4sII d", FIELD_MAGIC, f.grid.nx, f.grid.ny, f.grid.Lx)
    header = header.ljust(FIELD_HEADER_BYTES, b"\x00")
    data = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + data)


def load_field(path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < FIELD_HEADER_BYTES:
        raise GridError(f"{path}: truncated field file")
    magic, nx, ny, Lx = struct.unpack("<4sII d", raw[:20])
    if magic != FIELD_MAGIC:
        raise GridError(f"{path}: bad magic {magic!r}")
    grid = ChannelGrid(nx, ny, Lx)
    expect = FIELD_HEADER_BYTES + 8 * nx * ny
    if len(raw) != expect:
        raise GridError(f"{path}: expected {expect} bytes, got {len(raw)}")
    vals = np.frombuffer(raw[FIELD_HEADER_BYTES:], dtype="<f8").reshape(nx, ny)
    return Field(grid, vals.astype(float))


def export_csv(f: Field, path) -> None:
    """(x, y, value) triples, x-major, for plotting."""
    X, Y = f.grid.meshgrid()
    table = np.column_stack([X.ravel(), Y.ravel(), f.values.ravel()])
    np.savetxt(path, table, delimiter=",", header="x,y,value", comments="")
