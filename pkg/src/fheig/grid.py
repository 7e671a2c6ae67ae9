"""Staggered cell-centered grids with an exterior collar.

The domain is covered by uniform cells whose centers carry the unknowns;
the collar continues the same cells outward so the Dirichlet condition
u = 0 outside the domain enters the nonlocal energy through explicit
exterior nodes.  Beyond the collar the far field is handled analytically
by the form assembly, so the grid only records how far the discretized
box reaches.

Cell centers never sit on the origin: if a requested layout would place
one there (odd cell count on a symmetric interval, for instance), the
colliding axis is shifted by half a cell.  The shift keeps every cell
measure and the total volume intact at the cost of a half-cell bias of
the covered region, which is recorded in the docstring of the builders
rather than silently hidden.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError

__all__ = [
    "Grid",
    "SubdomainRelation",
    "build_interval_grid",
    "build_box_grid",
    "restrict",
]

_ORIGIN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable node set: coordinates, cell measures and interior flags."""

    dimension: int
    coords: np.ndarray            # (m, dimension)
    weights: np.ndarray           # (m,) cell measures
    interior: np.ndarray          # (m,) bool, False = exterior collar
    spacing: tuple[float, ...]    # uniform cell width per axis
    bounds: tuple[tuple[float, float], ...]       # domain box
    disc_bounds: tuple[tuple[float, float], ...]  # domain + collar box
    r_ext: float
    origin_excluded: bool = field(default=True)

    def __post_init__(self):
        for arr in (self.coords, self.weights, self.interior):
            arr.setflags(write=False)
        if np.any(self.weights <= 0.0):
            raise ValidationError("cell measures must be positive")
        if not np.any(self.interior):
            raise ValidationError("grid needs at least one interior node")

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def interior_coords(self) -> np.ndarray:
        return self.coords[self.interior]

    @property
    def interior_weights(self) -> np.ndarray:
        return self.weights[self.interior]

    @property
    def cell_diameter(self) -> float:
        return float(np.linalg.norm(self.spacing))

    @property
    def domain_measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    def radii(self, which: str = "all") -> np.ndarray:
        pts = self.interior_coords if which == "interior" else self.coords
        return np.linalg.norm(pts, axis=1)

    def scaled(self, factor: float) -> "Grid":
        """Geometrically similar grid: x -> factor * x."""
        if factor <= 0.0:
            raise ValidationError("scaling factor must be positive")
        return Grid(
            dimension=self.dimension,
            coords=self.coords * factor,
            weights=self.weights * factor ** self.dimension,
            interior=self.interior.copy(),
            spacing=tuple(h * factor for h in self.spacing),
            bounds=tuple((lo * factor, hi * factor) for lo, hi in self.bounds),
            disc_bounds=tuple((lo * factor, hi * factor) for lo, hi in self.disc_bounds),
            r_ext=self.r_ext * factor,
            origin_excluded=self.origin_excluded,
        )

    def refined(self) -> "Grid":
        """Split every cell in two per axis; interior flags are inherited.

        Works for restricted grids as well, since no cell changes class.
        Children of a staggered parent stay staggered: a child center is
        an odd multiple of a quarter cell away from the parent's lattice,
        so it cannot land on the origin.
        """
        offsets = np.array(np.meshgrid(
            *([[-0.25, 0.25]] * self.dimension), indexing="ij"
        )).reshape(self.dimension, -1).T * np.asarray(self.spacing)
        coords = (self.coords[:, None, :] + offsets[None, :, :]).reshape(-1, self.dimension)
        splits = offsets.shape[0]
        return Grid(
            dimension=self.dimension,
            coords=coords,
            weights=np.repeat(self.weights / splits, splits),
            interior=np.repeat(self.interior, splits),
            spacing=tuple(h / 2.0 for h in self.spacing),
            bounds=self.bounds,
            disc_bounds=self.disc_bounds,
            r_ext=self.r_ext,
            origin_excluded=self.origin_excluded,
        )

    def to_node_table(self) -> str:
        """Plain-text node table, one node per line."""
        buf = io.StringIO()
        cols = " ".join(f"x{k + 1}" for k in range(self.dimension))
        buf.write("# fheig grid node table\n")
        buf.write(f"# dimension: {self.dimension}\n")
        buf.write(f"# columns: index {cols} weight interior(1=domain,0=collar)\n")
        for i in range(self.n_nodes):
            xs = " ".join(repr(float(c)) for c in self.coords[i])
            buf.write(f"{i} {xs} {float(self.weights[i])!r} {int(self.interior[i])}\n")
        return buf.getvalue()

    def write_node_table(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_node_table())


@dataclass(frozen=True, eq=False)
class SubdomainRelation:
    """Child grid obtained by demoting some interior nodes to the collar."""

    parent: Grid
    child: Grid
    child_to_parent: np.ndarray   # indices into parent's interior vector

    def inject(self, u_child: np.ndarray) -> np.ndarray:
        """Zero-extend child interior values onto the parent interior."""
        u_child = np.asarray(u_child, dtype=float)
        if len(u_child) != self.child.n_interior:
            raise ValidationError("child function length mismatch")
        out = np.zeros(self.parent.n_interior)
        out[self.child_to_parent] = u_child
        return out


def _axis_centers(lo: float, hi: float, m: int, n_collar: int) -> np.ndarray:
    h = (hi - lo) / m
    idx = np.arange(-n_collar, m + n_collar)
    return lo + (idx + 0.5) * h


def build_interval_grid(a: float, b: float, m: int, collar: float) -> Grid:
    """Uniform staggered grid on (a, b) with an exterior collar.

    Nodes are cell centers in ascending order, collar cells included, so
    index neighbors are geometric neighbors.  If a center would land on
    the origin the whole line is shifted by half a cell (volume and cell
    measures are unchanged; the covered interval is biased by h/2).
    """
    if not a < b:
        raise ValidationError(f"need a < b, got ({a}, {b})")
    if m < 2:
        raise ValidationError(f"need at least 2 cells, got m={m}")
    if collar <= 0.0:
        raise ValidationError(f"collar width must be positive, got {collar}")
    h = (b - a) / m
    n_collar = max(1, int(np.ceil(collar / h - 1e-12)))
    xs = _axis_centers(a, b, m, n_collar)
    shift = 0.0
    if np.min(np.abs(xs)) < _ORIGIN_TOL * h:
        shift = 0.5 * h
        xs = xs + shift
    interior = np.zeros(len(xs), dtype=bool)
    interior[n_collar:n_collar + m] = True
    coords = xs.reshape(-1, 1)
    weights = np.full(len(xs), h)
    return Grid(
        dimension=1,
        coords=coords,
        weights=weights,
        interior=interior,
        spacing=(h,),
        bounds=((a + shift, b + shift),),
        disc_bounds=((a + shift - n_collar * h, b + shift + n_collar * h),),
        r_ext=collar,
        origin_excluded=bool(np.min(np.abs(xs)) > 0.0),
    )


def build_box_grid(
    center: tuple[float, float],
    half_widths: tuple[float, float],
    m_per_axis: tuple[int, int],
    collar: float,
) -> Grid:
    """Uniform staggered grid on a planar box with an exterior frame.

    Same staggering guarantee as the interval builder: an axis whose
    centers would hit the origin is shifted by half a cell.
    """
    center = tuple(float(c) for c in center)
    half_widths = tuple(float(hw) for hw in half_widths)
    m_per_axis = tuple(int(m) for m in m_per_axis)
    if len(center) != 2 or len(half_widths) != 2 or len(m_per_axis) != 2:
        raise ValidationError("box grids are planar: need 2 entries per tuple")
    if any(hw <= 0.0 for hw in half_widths):
        raise ValidationError("half widths must be positive")
    if any(m < 2 for m in m_per_axis):
        raise ValidationError("need at least 2 cells per axis")
    if collar <= 0.0:
        raise ValidationError(f"collar width must be positive, got {collar}")

    axes = []
    bounds = []
    disc_bounds = []
    spacing = []
    for c, hw, m in zip(center, half_widths, m_per_axis):
        lo, hi = c - hw, c + hw
        h = (hi - lo) / m
        n_collar = max(1, int(np.ceil(collar / h - 1e-12)))
        xs = _axis_centers(lo, hi, m, n_collar)
        shift = 0.5 * h if np.min(np.abs(xs)) < _ORIGIN_TOL * h else 0.0
        xs = xs + shift
        mask = np.zeros(len(xs), dtype=bool)
        mask[n_collar:n_collar + m] = True
        axes.append((xs, mask, h))
        bounds.append((lo + shift, hi + shift))
        disc_bounds.append((lo + shift - n_collar * h, hi + shift + n_collar * h))
        spacing.append(h)

    (x1, m1, h1), (x2, m2, h2) = axes
    g1, g2 = np.meshgrid(x1, x2, indexing="ij")
    coords = np.column_stack([g1.ravel(), g2.ravel()])
    interior = (np.outer(m1, m2)).ravel()
    weights = np.full(len(coords), h1 * h2)
    radii = np.linalg.norm(coords, axis=1)
    return Grid(
        dimension=2,
        coords=coords,
        weights=weights,
        interior=interior,
        spacing=(h1, h2),
        bounds=tuple(bounds),
        disc_bounds=tuple(disc_bounds),
        r_ext=collar,
        origin_excluded=bool(np.min(radii) > 0.0),
    )


def restrict(parent: Grid, predicate: Callable[[np.ndarray], bool]) -> SubdomainRelation:
    """Demote interior nodes failing ``predicate`` to the exterior collar.

    The node set, the cell measures and the discretized box stay fixed,
    which makes extension by zero exact at the discrete level.
    """
    keep = np.array([bool(predicate(x)) for x in parent.coords])
    new_interior = parent.interior & keep
    kept = int(new_interior.sum())
    if kept == 0:
        raise ValidationError("predicate drops every interior node")
    if kept == parent.n_interior:
        raise ValidationError("predicate keeps every interior node; child must be proper")
    child = Grid(
        dimension=parent.dimension,
        coords=parent.coords,
        weights=parent.weights,
        interior=new_interior,
        spacing=parent.spacing,
        bounds=parent.bounds,
        disc_bounds=parent.disc_bounds,
        r_ext=parent.r_ext,
        origin_excluded=parent.origin_excluded,
    )
    parent_idx = np.flatnonzero(parent.interior)
    pos_in_parent = {node: k for k, node in enumerate(parent_idx)}
    child_nodes = np.flatnonzero(new_interior)
    child_to_parent = np.array([pos_in_parent[nd] for nd in child_nodes], dtype=int)
    return SubdomainRelation(parent=parent, child=child, child_to_parent=child_to_parent)
