"""Discretized single-particle Hilbert space over bounded regions.

Wave functions are complex samples on a uniform tensor grid of cell
centers; inner products are Riemann sums, so lattice translations are
exact index shifts and the discrete plane-wave modes of a box are
exactly orthonormal.  Normalization always uses the discrete (grid)
volume of the support region so that unit norms hold at machine
precision at any resolution; the analytic volume is reported separately
by :class:`Region`.

Translation convention: ``translate(f, x)`` produces the function
``z -> f(z - x)``, i.e. the support moves by ``+x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache, reduce

import numpy as np

from .errors import (
    GridMismatchError,
    PreconditionError,
    SupportRangeError,
)

SHAPES = ("interval", "box", "ball")

_LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class Region:
    """Open bounded region: an interval, an axis-aligned box (side L),
    or a ball (diameter L)."""

    dimension: int
    shape: str
    diameter: float
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise PreconditionError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.shape not in SHAPES:
            raise PreconditionError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.shape == "interval" and self.dimension != 1:
            raise PreconditionError("interval regions are one-dimensional")
        if not self.diameter > 0:
            raise PreconditionError(f"diameter must be positive, got {self.diameter}")
        center = tuple(float(c) for c in self.center) if self.center else (0.0,) * self.dimension
        if len(center) != self.dimension:
            raise PreconditionError("center length does not match dimension")
        object.__setattr__(self, "center", center)

    @property
    def volume(self) -> float:
        """Analytic volume |O| of the region."""
        d, L = self.dimension, self.diameter
        if self.shape in ("interval", "box"):
            return L**d
        r = L / 2.0
        return {1: 2 * r, 2: math.pi * r**2, 3: 4 * math.pi / 3 * r**3}[d]

    def translated(self, x) -> "Region":
        x = np.asarray(x, dtype=float)
        return replace(self, center=tuple(np.asarray(self.center) + x))

    def bounding_box(self):
        """(lo, hi) corner vectors of the closure's bounding box."""
        c = np.asarray(self.center)
        half = self.diameter / 2.0
        return c - half, c + half

    def contains_points(self, pts) -> np.ndarray:
        """Strict (open-set) membership test, vectorized over rows of pts."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        delta = pts - np.asarray(self.center)
        if self.shape == "ball":
            return np.einsum("ij,ij->i", delta, delta) < (self.diameter / 2.0) ** 2
        return np.all(np.abs(delta) < self.diameter / 2.0, axis=1)

    def compactly_contains(self, other: "Region") -> bool:
        """Whether closure(other) lies inside this open region (the
        relation written O0 ⋐ O)."""
        if other.dimension != self.dimension:
            return False
        dc = np.asarray(other.center) - np.asarray(self.center)
        ro, ri = self.diameter / 2.0, other.diameter / 2.0
        if self.shape == "ball":
            if other.shape == "ball":
                return float(np.linalg.norm(dc)) + ri < ro
            # box corners inside the ball
            corner = np.abs(dc) + ri
            return float(np.linalg.norm(corner)) < ro
        if other.shape == "ball":
            return bool(np.all(np.abs(dc) + ri < ro))
        return bool(np.all(np.abs(dc) + ri < ro))


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid of cell centers covering a bounding box.

    Point t along axis i sits at lo[i] + (t + 1/2) * spacing[i]; all
    supported translations are integer multiples of the spacing.
    """

    lo: tuple[float, ...]
    spacing: tuple[float, ...]
    npoints: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "npoints", tuple(int(v) for v in self.npoints))
        if not (len(self.lo) == len(self.spacing) == len(self.npoints)):
            raise PreconditionError("lo, spacing and npoints must have equal length")
        if any(h <= 0 for h in self.spacing) or any(n < 1 for n in self.npoints):
            raise PreconditionError("spacing must be positive and npoints >= 1")

    @classmethod
    def covering(cls, region: Region, points_per_axis: int, margin: float = 0.0) -> "Grid":
        """Grid whose box covers `region` plus `margin` on each side.

        With margin 0 the grid box coincides with the region's bounding
        box, so box/interval regions fill the grid exactly.
        """
        lo, hi = region.bounding_box()
        lo, hi = lo - margin, hi + margin
        n = int(points_per_axis)
        h = (hi - lo) / n
        return cls(lo=tuple(lo), spacing=tuple(h), npoints=(n,) * region.dimension)

    @property
    def dimension(self) -> int:
        return len(self.npoints)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.npoints

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple(l + h * n for l, h, n in zip(self.lo, self.spacing, self.npoints))

    def axes(self) -> list[np.ndarray]:
        """Cell-center coordinates per axis."""
        return [
            self.lo[i] + (np.arange(self.npoints[i]) + 0.5) * self.spacing[i]
            for i in range(self.dimension)
        ]

    def covers(self, region: Region) -> bool:
        lo, hi = region.bounding_box()
        glo, ghi = np.asarray(self.lo), np.asarray(self.hi)
        # half-cell slack: only cell centers matter for sampled data
        slack = 0.5 * np.asarray(self.spacing)
        return bool(np.all(lo >= glo - slack) and np.all(hi <= ghi + slack))

    def mask(self, region: Region) -> np.ndarray:
        """Boolean array marking cell centers strictly inside `region`."""
        return _region_mask(self, region)

    def index_shift(self, x) -> tuple[int, ...]:
        """Integer index shift for a lattice translation x, or raise."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise PreconditionError(f"translation must have {self.dimension} components")
        steps = x / np.asarray(self.spacing)
        rounded = np.rint(steps)
        if np.any(np.abs(steps - rounded) > _LATTICE_TOL * np.maximum(1.0, np.abs(steps))):
            raise PreconditionError(f"translation {x.tolist()} is not a lattice vector")
        return tuple(int(s) for s in rounded)


@lru_cache(maxsize=128)
def _region_mask(grid: Grid, region: Region) -> np.ndarray:
    axes = grid.axes()
    c = region.center
    half = region.diameter / 2.0
    if region.shape == "ball" and region.dimension > 1:
        r2 = reduce(
            np.add,
            (
                np.square(ax - c[i]).reshape([-1 if j == i else 1 for j in range(grid.dimension)])
                for i, ax in enumerate(axes)
            ),
        )
        m = r2 < half * half
    else:
        m = reduce(
            np.logical_and,
            (
                (np.abs(ax - c[i]) < half).reshape(
                    [-1 if j == i else 1 for j in range(grid.dimension)]
                )
                for i, ax in enumerate(axes)
            ),
        )
        m = np.broadcast_to(m, grid.shape).copy()
    m.flags.writeable = False
    return m


def discrete_volume(grid: Grid, region: Region) -> float:
    """Grid-level volume of the region: (number of covered cells) * h^d."""
    return float(np.count_nonzero(grid.mask(region))) * grid.cell_volume


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex samples on a grid, exactly zero outside a declared support."""

    grid: Grid
    values: np.ndarray
    support: Region

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise PreconditionError(
                f"sample shape {vals.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", vals)
        m = self.grid.mask(self.support)
        if np.count_nonzero(vals[~m]):
            raise SupportRangeError("samples are nonzero outside the declared support")
        object.__setattr__(self, "_norm_sq", None)

    @property
    def norm_sq(self) -> float:
        """Riemann-sum squared norm h^d * sum |f|^2 (cached)."""
        if self._norm_sq is None:
            object.__setattr__(
                self, "_norm_sq", float(np.sum(np.abs(self.values) ** 2)) * self.grid.cell_volume
            )
        return self._norm_sq

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)

    def _with_values(self, values, support=None, norm_sq=None) -> "WaveFunction":
        wf = WaveFunction(self.grid, values, support or self.support)
        if norm_sq is not None:
            object.__setattr__(wf, "_norm_sq", norm_sq)
        return wf

    def normalized(self) -> "WaveFunction":
        n = self.norm
        if n == 0.0:
            raise PreconditionError("cannot normalize the zero function")
        return self._with_values(self.values / n, norm_sq=1.0)

    def _common_support(self, other: "WaveFunction") -> Region:
        if self.support == other.support:
            return self.support
        for a, b in ((self, other), (other, self)):
            if a.support.compactly_contains(b.support):
                return a.support
        raise SupportRangeError(
            "cannot combine wave functions with unrelated support regions"
        )

    def __add__(self, other: "WaveFunction") -> "WaveFunction":
        _require_same_grid(self, other)
        return WaveFunction(self.grid, self.values + other.values, self._common_support(other))

    def __sub__(self, other: "WaveFunction") -> "WaveFunction":
        _require_same_grid(self, other)
        return WaveFunction(self.grid, self.values - other.values, self._common_support(other))

    def __mul__(self, scalar) -> "WaveFunction":
        return self._with_values(self.values * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "WaveFunction":
        return self._with_values(self.values / complex(scalar))

    def to_csv(self, path) -> None:
        """Debug dump: one row per cell, columns index per axis, re, im."""
        idx = np.indices(self.grid.shape).reshape(self.grid.dimension, -1).T
        flat = self.values.ravel()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(f"i{a}" for a in range(self.grid.dimension)) + ",re,im\n")
            for row, v in zip(idx, flat):
                cols = ",".join(str(int(i)) for i in row)
                fh.write(f"{cols},{v.real:.17g},{v.imag:.17g}\n")


def _require_same_grid(f: WaveFunction, g: WaveFunction) -> None:
    if f.grid != g.grid:
        raise GridMismatchError("wave functions live on different grids")


def inner(f: WaveFunction, g: WaveFunction) -> complex:
    """Riemann-sum scalar product h^d * sum conj(f) g.

    Antilinear in the first argument, linear in the second.
    """
    _require_same_grid(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.cell_volume)


def translate(f: WaveFunction, x) -> WaveFunction:
    """Shift a wave function by the lattice vector x: (z -> f(z - x)).

    The shift is an exact index permutation; the norm is preserved
    bit-for-bit and the support region moves along.
    """
    shift = f.grid.index_shift(x)
    if all(s == 0 for s in shift):
        return f
    moved = f.support.translated(np.asarray(shift) * np.asarray(f.grid.spacing))
    if not f.grid.covers(moved):
        raise SupportRangeError("translated support leaves the grid")
    out = np.zeros_like(f.values)
    src = []
    dst = []
    for s, n in zip(shift, f.grid.shape):
        if abs(s) >= n:
            raise SupportRangeError("translation exceeds the grid extent")
        if s >= 0:
            src.append(slice(0, n - s))
            dst.append(slice(s, n))
        else:
            src.append(slice(-s, n))
            dst.append(slice(0, n + s))
    out[tuple(dst)] = f.values[tuple(src)]
    if np.count_nonzero(f.values) != np.count_nonzero(out):
        raise SupportRangeError("nonzero samples were shifted off the grid")
    return f._with_values(out, support=moved, norm_sq=f.norm_sq)


def _phase(grid: Grid, k, sign: float) -> np.ndarray:
    """Separable plane-wave phase exp(sign * i k.x) on the full grid."""
    k = np.asarray(k, dtype=float)
    axes = grid.axes()
    factors = [np.exp(sign * 1j * k[i] * axes[i]) for i in range(grid.dimension)]
    return reduce(np.multiply.outer, factors) if grid.dimension > 1 else factors[0]


def plane_wave_mode(region: Region, k, grid: Grid) -> WaveFunction:
    """Localized plane wave |O|^(-1/2) e^(i k.x) on the region, zero outside.

    The discrete volume is used for normalization, so the grid norm is
    exactly one.
    """
    if not grid.covers(region):
        raise SupportRangeError("region is not covered by the grid")
    m = grid.mask(region)
    vol = np.count_nonzero(m) * grid.cell_volume
    if vol == 0.0:
        raise SupportRangeError("region contains no grid cells")
    vals = _phase(grid, k, +1.0) / math.sqrt(vol)
    vals = np.where(m, vals, 0.0)
    return WaveFunction(grid, vals, region)


def fourier_amplitude(f: WaveFunction, p) -> complex:
    """Fourier transform value (2 pi)^(-d/2) h^d sum e^(-i p.x) f(x)."""
    p = np.asarray(p, dtype=float)
    d = f.grid.dimension
    axes = f.grid.axes()
    v = f.values
    for i in range(d - 1, -1, -1):
        v = np.tensordot(v, np.exp(-1j * p[i] * axes[i]), axes=([i], [0]))
    return complex(v) * f.grid.cell_volume * (2 * math.pi) ** (-d / 2.0)


def project_out_mode(f: WaveFunction, mode: WaveFunction) -> WaveFunction:
    """Orthogonal complement f - <mode, f> mode for a normalized mode."""
    _require_same_grid(f, mode)
    c = inner(mode, f)
    return WaveFunction(f.grid, f.values - c * mode.values, mode.support)


def zero_mean_project(f: WaveFunction, region: Region) -> WaveFunction:
    """Project onto the zero-mean subspace of L2(region).

    Subtracts the component along the normalized constant mode; the
    output has vanishing Riemann-sum mean whenever supp(f) lies in the
    region.
    """
    if f.support != region and not region.compactly_contains(f.support):
        m_f = f.grid.mask(f.support)
        m_r = f.grid.mask(region)
        if np.count_nonzero(m_f & ~m_r):
            raise PreconditionError("support of f is not contained in the projection region")
    s0 = plane_wave_mode(region, np.zeros(region.dimension), f.grid)
    return project_out_mode(f, s0)


def bump_probe(region: Region, grid: Grid) -> WaveFunction:
    """Normalized smooth raised-cosine bump supported on the region.

    Product of per-axis raised cosines on boxes/intervals, radial raised
    cosine on balls; keeps Fourier amplitudes well conditioned compared
    to a sharp indicator.
    """
    m = grid.mask(region)
    axes = grid.axes()
    c = region.center
    L = region.diameter
    if region.shape == "ball" and region.dimension > 1:
        r2 = reduce(
            np.add,
            (
                np.square(ax - c[i]).reshape([-1 if j == i else 1 for j in range(grid.dimension)])
                for i, ax in enumerate(axes)
            ),
        )
        prof = 0.5 * (1.0 + np.cos(2.0 * math.pi * np.sqrt(r2) / L))
    else:
        prof = reduce(
            np.multiply.outer,
            [0.5 * (1.0 + np.cos(2.0 * math.pi * (ax - c[i]) / L)) for i, ax in enumerate(axes)],
        )
    vals = np.where(m, prof.astype(complex), 0.0)
    return WaveFunction(grid, vals, region).normalized()
