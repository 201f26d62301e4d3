"""Simulation-cage construction from splat centers.

Pipeline: voxelize points on a dense grid with an empty margin, flood-fill
enclosed voids, extract a watertight surface for inspection, and build a
conforming tetrahedral mesh on a body-centered-cubic lattice over the
occupied (and slightly dilated) cells. A bisection search picks the cell
size that lands the cage vertex count in a target band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# (direction vector, corner offsets of the face quad in doubled lattice
# coordinates, cyclic order). Doubled coords: corners even, centers odd.
_FACES = []
for axis in range(3):
    for sign in (1, -1):
        d = np.zeros(3, dtype=np.int64)
        d[axis] = sign
        a, b = (axis + 1) % 3, (axis + 2) % 3
        quad = np.zeros((4, 3), dtype=np.int64)
        quad[:, axis] = 2 if sign > 0 else 0
        quad[0, a], quad[0, b] = 0, 0
        quad[1, a], quad[1, b] = 2, 0
        quad[2, a], quad[2, b] = 2, 2
        quad[3, a], quad[3, b] = 0, 2
        _FACES.append((d, quad))


@dataclass(frozen=True)
class VoxelGrid:
    """Dense occupancy grid; a one-cell empty margin surrounds all occupancy."""

    origin: np.ndarray      # (3,) world position of the (0,0,0) cell corner
    cell_size: float
    occupancy: np.ndarray   # (nx, ny, nz) bool

    @property
    def dims(self):
        return self.occupancy.shape

    def __post_init__(self):
        occ = self.occupancy
        if occ.ndim != 3 or occ.dtype != bool:
            raise ValueError("occupancy must be a 3-d bool array")
        if min(occ.shape) < 1 or self.cell_size <= 0:
            raise ValueError("bad grid dims or cell size")
        for ax in range(3):
            first = np.take(occ, 0, axis=ax)
            last = np.take(occ, occ.shape[ax] - 1, axis=ax)
            if first.any() or last.any():
                raise ValueError("occupied cell touches the grid margin")


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray    # (V, 3) float64
    triangles: np.ndarray   # (F, 3) int32

    def save_obj(self) -> str:
        lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in self.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"


class TetMesh:
    """Conforming tet mesh with precomputed rest-state data per tet."""

    def __init__(self, vertices, tets):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.tets = np.ascontiguousarray(tets, dtype=np.int32).reshape(-1, 4)
        if self.tets.size and (self.tets.min() < 0 or self.tets.max() >= len(self.vertices)):
            raise ValueError("tet index out of range")
        basis = self.edge_basis(self.vertices)
        vol = np.linalg.det(basis) / 6.0
        flipped = vol < 0
        if np.any(flipped):
            self.tets[flipped] = self.tets[flipped][:, [0, 1, 3, 2]]
            basis = self.edge_basis(self.vertices)
            vol = np.linalg.det(basis) / 6.0
        if np.any(vol <= 0):
            raise ValueError("degenerate tet (zero volume)")
        self.rest_volume = vol
        self.rest_inverse_basis = np.linalg.inv(basis) if len(basis) else basis.reshape(0, 3, 3)

    def edge_basis(self, positions):
        """(T,3,3) matrices with edge vectors x_i - x_0 as columns."""
        p = positions[self.tets]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=2)

    def __len__(self):
        return len(self.tets)

    def save_text(self) -> str:
        out = ["tetmesh v1", f"verts {len(self.vertices)}"]
        out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in self.vertices]
        out.append(f"tets {len(self.tets)}")
        out += [f"{a} {b} {c} {d}" for a, b, c, d in self.tets]
        return "\n".join(out) + "\n"

    @classmethod
    def load_text(cls, text: str) -> "TetMesh":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or lines[0] != "tetmesh v1":
            raise ValueError("not a 'tetmesh v1' file")
        pos = 1

        def expect_count(tag):
            nonlocal pos
            if pos >= len(lines) or not lines[pos].startswith(tag + " "):
                raise ValueError(f"line {pos + 1}: expected '{tag} N'")
            try:
                n = int(lines[pos].split()[1])
            except (IndexError, ValueError):
                raise ValueError(f"line {pos + 1}: bad count after '{tag}'")
            pos += 1
            return n

        nv = expect_count("verts")
        if pos + nv > len(lines):
            raise ValueError(f"expected {nv} vertex lines")
        verts = np.array([[float(t) for t in lines[pos + i].split()] for i in range(nv)])
        pos += nv
        nt = expect_count("tets")
        if pos + nt > len(lines):
            raise ValueError(f"expected {nt} tet lines")
        tets = np.array([[int(t) for t in lines[pos + i].split()] for i in range(nt)],
                        dtype=np.int32).reshape(nt, 4)
        return cls(verts.reshape(nv, 3), tets)


def voxelize(points, cell_size: float) -> VoxelGrid:
    """Occupancy grid over the points with a one-cell empty margin.

    A cell is occupied iff at least one point falls in it; points on the far
    boundary clamp into the last cell.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("no points to voxelize")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite points")
    if not (cell_size > 0):
        raise ValueError("cell_size must be positive")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    ncells = np.maximum(1, np.ceil((hi - lo) / cell_size - 1e-12).astype(np.int64))
    idx = np.floor((pts - lo) / cell_size).astype(np.int64)
    idx = np.clip(idx, 0, ncells - 1)
    occ = np.zeros(ncells + 2, dtype=bool)
    occ[idx[:, 0] + 1, idx[:, 1] + 1, idx[:, 2] + 1] = True
    return VoxelGrid(origin=lo - cell_size, cell_size=float(cell_size), occupancy=occ)


def fill_interior(grid: VoxelGrid) -> VoxelGrid:
    """Turn enclosed empty pockets solid.

    Empty cells 6-connected to the margin stay empty; every other empty cell
    becomes occupied.
    """
    empty = ~grid.occupancy
    labels, _ = ndimage.label(empty, structure=ndimage.generate_binary_structure(3, 1))
    outside = labels == labels[0, 0, 0]
    return VoxelGrid(grid.origin, grid.cell_size, ~outside)


def make_edge_well_composed(occ: np.ndarray) -> np.ndarray:
    """Break diagonal occupied pairs in every 2x2 slice square by adding cells.

    Two cells touching only along an edge pinch the isosurface into a
    non-manifold edge; filling one empty cell of each such square (the
    lexicographically first) removes the configuration. Additions are always
    edge neighbors of occupied cells, so a one-cell dilation covers them.
    """
    occ = occ.copy()
    while True:
        changed = False
        for a, b in ((0, 1), (0, 2), (1, 2)):
            sl = [slice(None)] * 3

            def sq(da, db):
                s = list(sl)
                s[a] = slice(1, None) if da else slice(None, -1)
                s[b] = slice(1, None) if db else slice(None, -1)
                return tuple(s)

            c00, c01 = occ[sq(0, 0)], occ[sq(0, 1)]
            c10, c11 = occ[sq(1, 0)], occ[sq(1, 1)]
            diag1 = c00 & c11 & ~c01 & ~c10
            diag2 = c01 & c10 & ~c00 & ~c11
            if diag1.any():
                occ[sq(0, 1)] |= diag1
                changed = True
            if diag2.any():
                occ[sq(0, 0)] |= diag2
                changed = True
        if not changed:
            return occ


def marching_cubes(grid: VoxelGrid) -> TriMesh:
    """Closed isosurface of the occupancy field (level 0.5, midpoint vertices)."""
    if not grid.occupancy.any():
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int32))
    from skimage import measure
    occ = make_edge_well_composed(grid.occupancy)
    verts, faces, _, _ = measure.marching_cubes(occ.astype(np.float32), level=0.5)
    world = grid.origin + (verts + 0.5) * grid.cell_size
    return TriMesh(world, faces.astype(np.int32))


def dilate_occupancy(grid: VoxelGrid, steps: int = 1) -> VoxelGrid:
    """Grow occupancy by full-cube dilation, re-padding to keep the margin."""
    if steps <= 0:
        return grid
    occ = np.pad(grid.occupancy, steps)
    occ = ndimage.binary_dilation(occ, structure=np.ones((3, 3, 3), bool), iterations=steps)
    occ = np.pad(occ, 1)
    origin = grid.origin - (steps + 1) * grid.cell_size
    return VoxelGrid(origin, grid.cell_size, occ)


def tetrahedralize(grid: VoxelGrid, dilate: int = 1) -> TetMesh:
    """Body-centered-cubic tet mesh covering the (dilated) occupied cells.

    Vertices are cell corners and cell centers. A face shared by two occupied
    cells yields 4 tets (both centers + each quad edge); a boundary face
    yields 2 (center + split quad), so the union of tets is exactly the
    occupied volume and the mesh is conforming.
    """
    grid = dilate_occupancy(grid, dilate)
    occ = grid.occupancy
    cells = np.argwhere(occ)  # lexicographic order, deterministic
    if len(cells) == 0:
        return TetMesh(np.zeros((0, 3)), np.zeros((0, 4), np.int32))

    key_blocks = []
    for d, quad in _FACES:
        nbr = cells + d
        inside = np.all((nbr >= 0) & (nbr < occ.shape), axis=1)
        nbr_occ = np.zeros(len(cells), dtype=bool)
        nbr_occ[inside] = occ[nbr[inside, 0], nbr[inside, 1], nbr[inside, 2]]

        center = 2 * cells + 1
        corners = 2 * cells[:, None, :] + quad[None, :, :]  # (N,4,3)

        if d.sum() > 0:  # positive directions own the interior faces
            sel = nbr_occ
            if sel.any():
                ca = center[sel]
                cb = 2 * nbr[sel] + 1
                q = corners[sel]
                for i in range(4):
                    j = (i + 1) % 4
                    key_blocks.append(np.stack([ca, cb, q[:, i], q[:, j]], axis=1))
        sel = ~nbr_occ
        if sel.any():  # boundary faces: 2 tets per quad
            ca = center[sel]
            q = corners[sel]
            key_blocks.append(np.stack([ca, q[:, 0], q[:, 1], q[:, 2]], axis=1))
            key_blocks.append(np.stack([ca, q[:, 0], q[:, 2], q[:, 3]], axis=1))

    keys = np.concatenate(key_blocks, axis=0)          # (T, 4, 3) doubled coords
    flat = keys.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    verts = grid.origin + uniq * (grid.cell_size / 2.0)
    tets = inverse.reshape(-1, 4).astype(np.int32)
    return TetMesh(verts, tets)


def build_cage(points, vertex_band=(10_000, 30_000), cell_size=None, dilate=1,
               max_iter=40):
    """Full cage pipeline; returns (TetMesh, filled VoxelGrid, cell_size).

    With cell_size=None, bisect the cell size until the cage vertex count
    lands inside vertex_band (count grows as cells shrink).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)

    def attempt(cell):
        extent = pts.max(axis=0) - pts.min(axis=0)
        cells = float(np.prod(np.ceil(extent / cell) + 6))
        if cells > 2.5e8:
            raise RuntimeError(
                f"cell size {cell:.3g} implies a {cells:.2g}-cell grid; "
                f"the vertex band is unattainable for this input")
        grid = fill_interior(voxelize(pts, cell))
        mesh = tetrahedralize(grid, dilate)
        return grid, mesh

    if cell_size is not None:
        grid, mesh = attempt(cell_size)
        return mesh, grid, float(cell_size)

    lo_count, hi_count = vertex_band
    if not 0 < lo_count < hi_count:
        raise ValueError("vertex_band must be increasing positive integers")
    span = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
    if span == 0:
        span = 1.0
    cell = span / 16.0
    grid, mesh = attempt(cell)

    # Bracket the band: big cells give few vertices, small cells give many.
    big, small = None, None  # cell sizes giving counts below / above the band
    for _ in range(max_iter):
        n = len(mesh.vertices)
        if lo_count <= n <= hi_count:
            return mesh, grid, cell
        if n < lo_count:
            big = cell
            cell = cell / 2 if small is None else np.sqrt(cell * small)
        else:
            small = cell
            cell = cell * 2 if big is None else np.sqrt(cell * big)
        grid, mesh = attempt(cell)
    raise RuntimeError(
        f"cell-size search failed: last count {len(mesh.vertices)} outside "
        f"[{lo_count}, {hi_count}]")
