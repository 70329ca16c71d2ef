"""Scalar fields sampled on uniform Cartesian grids over the disk.

The grid convention used throughout: ``values[iy, ix]`` with
``x = linspace(-extent, extent, nx)`` and ``y = linspace(-extent, extent, ny)``
(node-centered, endpoints included).  Evaluation off the nodes is bilinear and
points outside the rectangle evaluate to zero (compact-support convention).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridSpec", "ScalarField", "write_pgm", "write_csv"]


def _symmetric_linspace(extent: float, n: int) -> np.ndarray:
    """Uniform nodes on [-extent, extent] with exact x[i] == -x[n-1-i].

    Plain linspace is not bitwise symmetric, which would spoil the exact
    cancellation contracts of odd phantoms; mirroring one half fixes that.
    """
    dx = 2.0 * extent / (n - 1)
    left = -(extent - np.arange(n // 2) * dx)
    mid = np.zeros(1) if n % 2 else np.empty(0)
    return np.concatenate([left, mid, -left[::-1]])


@dataclass(frozen=True)
class GridSpec:
    """Uniform square-cell grid over [-extent, extent]^2."""

    nx: int
    ny: int
    extent: float = 1.0

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise ValueError("grids need at least 16 nodes per axis")

    @property
    def xs(self) -> np.ndarray:
        return _symmetric_linspace(self.extent, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return _symmetric_linspace(self.extent, self.ny)

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / (self.nx - 1)

    @property
    def dy(self) -> float:
        return 2.0 * self.extent / (self.ny - 1)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def meshgrid(self):
        return np.meshgrid(self.xs, self.ys)

    def points(self) -> np.ndarray:
        """All nodes as an (ny, nx, 2) array."""
        X, Y = self.meshgrid()
        return np.stack([X, Y], axis=-1)

    def disk_mask(self, radius: float = 1.0) -> np.ndarray:
        X, Y = self.meshgrid()
        return X**2 + Y**2 <= radius**2


@dataclass
class ScalarField:
    """A function on the plane given by grid samples, optionally with the
    closed-form callable it was sampled from.

    When ``analytic`` is set it is only used by consumers that explicitly ask
    for it; the default evaluation model everywhere is bilinear interpolation
    of ``values`` with zero extension outside the grid.
    """

    grid: GridSpec
    values: np.ndarray
    support_mask: np.ndarray | None = None
    analytic: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise ValueError(
                f"values shape {self.values.shape} != grid ({self.grid.ny}, {self.grid.nx})"
            )

    @classmethod
    def from_function(cls, fn, grid: GridSpec, keep_analytic: bool = True):
        vals = fn(grid.points())
        return cls(grid, vals, analytic=fn if keep_analytic else None)

    @classmethod
    def zeros(cls, grid: GridSpec):
        return cls(grid, np.zeros((grid.ny, grid.nx)))

    def copy_with(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, support_mask=self.support_mask)

    def __call__(self, pts) -> np.ndarray:
        """Bilinear evaluation at points (..., 2); zero outside the grid."""
        pts = np.asarray(pts, dtype=float)
        g = self.grid
        fx = (pts[..., 0] + g.extent) / g.dx
        fy = (pts[..., 1] + g.extent) / g.dy
        inside = (fx >= 0) & (fx <= g.nx - 1) & (fy >= 0) & (fy <= g.ny - 1)
        fx = np.clip(fx, 0, g.nx - 1 - 1e-12)
        fy = np.clip(fy, 0, g.ny - 1 - 1e-12)
        ix = fx.astype(np.intp)
        iy = fy.astype(np.intp)
        tx = fx - ix
        ty = fy - iy
        v = self.values
        out = (
            v[iy, ix] * (1 - tx) * (1 - ty)
            + v[iy, ix + 1] * tx * (1 - ty)
            + v[iy + 1, ix] * (1 - tx) * ty
            + v[iy + 1, ix + 1] * tx * ty
        )
        return np.where(inside, out, 0.0)

    def l2_norm(self) -> float:
        """L2(R^2) norm by the grid quadrature."""
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell_area))

    def rel_l2_error(self, other: "ScalarField", mask=None) -> float:
        a, b = self.values, other.values
        if mask is not None:
            a, b = a[mask], b[mask]
        denom = np.sqrt(np.sum(b**2))
        if denom == 0.0:
            return float(np.sqrt(np.sum(a**2)))
        return float(np.sqrt(np.sum((a - b) ** 2)) / denom)


def write_pgm(path, values, bits: int = 8) -> None:
    """Export an array as a binary portable graymap (8- or 16-bit).

    Values are min-max normalized; rows are written top to bottom.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    norm = (values - lo) / span
    maxval = 255 if bits == 8 else 65535
    img = np.rint(norm * maxval).astype(">u2" if bits == 16 else np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{values.shape[1]} {values.shape[0]}\n{maxval}\n".encode())
        fh.write(img[::-1].tobytes())


def write_csv(path, values) -> None:
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")
