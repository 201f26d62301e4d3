"""Compliant position-based dynamics for the tetrahedral cage.

Each substep predicts positions symplectically, then runs Gauss-Seidel
passes of two per-tet constraints (deviatoric frobenius-norm and volume
determinant, compliances mapped from the Lame parameters), then projects
attachments and collisions, and finally rebuilds velocities from the
position change. Tets are graph-colored so that a color never shares a
vertex, which keeps sweeps data-parallel and bit-deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from splatdyn.meshgen import TetMesh, VoxelGrid

GRAVITY_DEFAULT = np.array([0.0, -9.8, 0.0])


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Material:
    youngs_modulus: float = 1000.0   # Pa
    poisson_ratio: float = 0.3
    density: float = 1000.0          # kg/m^3
    damping: float = 0.0             # 1/s

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError("youngs_modulus must be positive")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must be in [0, 0.5)")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")


def lame_parameters(youngs_modulus: float, poisson_ratio: float):
    """(mu, lambda) from E and nu."""
    e, nu = float(youngs_modulus), float(poisson_ratio)
    if nu >= 0.5:
        raise ValueError("incompressible limit nu=0.5 not representable")
    mu = e / (2.0 * (1.0 + nu))
    lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


def assemble_masses(cage: TetMesh, density) -> np.ndarray:
    """Lumped vertex masses: each tet spreads rho*V over its 4 corners.

    density may be a scalar or a per-tet array.
    """
    rho = np.broadcast_to(np.asarray(density, np.float64), (len(cage),))
    masses = np.zeros(len(cage.vertices))
    share = rho * cage.rest_volume / 4.0
    np.add.at(masses, cage.tets.ravel(), np.repeat(share, 4))
    return masses


def color_tets(cage: TetMesh) -> list[np.ndarray]:
    """Greedy coloring; tets in one color share no vertices."""
    nv = len(cage.vertices)
    vert_tets = [[] for _ in range(nv)]
    for t, tet in enumerate(cage.tets):
        for v in tet:
            vert_tets[v].append(t)
    colors = np.full(len(cage), -1, dtype=np.int64)
    for t, tet in enumerate(cage.tets):
        used = set()
        for v in tet:
            for u in vert_tets[v]:
                if colors[u] >= 0:
                    used.add(colors[u])
        c = 0
        while c in used:
            c += 1
        colors[t] = c
    return [np.flatnonzero(colors == c).astype(np.int64)
            for c in range(colors.max() + 1)]


@dataclass
class StaticField:
    """Signed distance sampled on a regular grid (negative inside solids)."""

    origin: np.ndarray
    cell_size: float
    values: np.ndarray  # (nx, ny, nz)

    @classmethod
    def from_grid(cls, grid: VoxelGrid) -> "StaticField":
        occ = grid.occupancy
        inside = ndimage.distance_transform_edt(occ, sampling=grid.cell_size)
        outside = ndimage.distance_transform_edt(~occ, sampling=grid.cell_size)
        sdf = np.where(occ, -inside, outside)
        if not np.all(np.isfinite(sdf)):
            raise ValueError("non-finite distance field")
        return cls(origin=grid.origin + 0.5 * grid.cell_size,
                   cell_size=grid.cell_size, values=sdf.astype(np.float64))

    def sample(self, points):
        """Trilinear signed distance; queries beyond the grid clamp."""
        rel = (np.asarray(points, np.float64) - self.origin) / self.cell_size
        out = np.empty(len(rel))
        _trilinear(self.values, rel, out)
        return out

    def gradient(self, points, eps=None):
        eps = eps or 0.5 * self.cell_size
        p = np.asarray(points, np.float64)
        g = np.empty_like(p)
        for ax in range(3):
            d = np.zeros(3)
            d[ax] = eps
            g[:, ax] = self.sample(p + d) - self.sample(p - d)
        n = np.linalg.norm(g, axis=1, keepdims=True)
        n[n < 1e-12] = 1.0
        return g / n


@dataclass
class CollisionEnv:
    ground_height: float | None = None
    friction: float = 0.0
    static_field: StaticField | None = None
    repulsion_radius: float = 0.0
    vertex_object: np.ndarray | None = None  # object id per cage vertex

    def __post_init__(self):
        if not 0.0 <= self.friction <= 1.0:
            raise ValueError("friction must lie in [0, 1]")
        if self.repulsion_radius < 0:
            raise ValueError("repulsion radius must be non-negative")


@dataclass
class Attachment:
    vertex_ids: np.ndarray
    offsets: np.ndarray   # grabbed positions relative to the anchor
    anchor: np.ndarray    # current drag target


@dataclass
class SimState:
    positions: np.ndarray
    velocities: np.ndarray
    inv_mass: np.ndarray
    prev_positions: np.ndarray = None
    lambdas: np.ndarray = None          # (T, 2) multipliers, reset per substep
    attachments: dict = field(default_factory=dict)
    time: float = 0.0
    _next_handle: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, np.float64)
        self.inv_mass = np.ascontiguousarray(self.inv_mass, np.float64)
        if np.any(self.inv_mass < 0):
            raise ValueError("inverse masses must be non-negative")
        if self.prev_positions is None:
            self.prev_positions = self.positions.copy()

    @classmethod
    def at_rest(cls, cage: TetMesh, masses, pinned=None) -> "SimState":
        inv = np.zeros(len(masses))
        free = np.asarray(masses) > 0
        inv[free] = 1.0 / np.asarray(masses)[free]
        if pinned is not None:
            inv[np.asarray(pinned)] = 0.0
        return cls(positions=cage.vertices.copy(),
                   velocities=np.zeros_like(cage.vertices),
                   inv_mass=inv,
                   lambdas=np.zeros((len(cage), 2)))


class Solver:
    """Precomputed cage constraint data plus the substep loop."""

    def __init__(self, cage: TetMesh, mu, lam, masses, damping=0.0,
                 env: CollisionEnv | None = None, gravity=GRAVITY_DEFAULT):
        self.cage = cage
        t = len(cage)
        mu = np.broadcast_to(np.asarray(mu, np.float64), (t,))
        lam = np.broadcast_to(np.asarray(lam, np.float64), (t,))
        if np.any(mu < 0) or np.any(lam < 0):
            raise ValueError("negative Lame parameters")
        vol = cage.rest_volume
        # compliance 1/(k*V); zero stiffness disables a constraint (alpha<0)
        self.alpha_d = np.where(mu > 0, 1.0 / np.maximum(mu * vol, 1e-300), -1.0)
        self.alpha_h = np.where(lam > 0, 1.0 / np.maximum(lam * vol, 1e-300), -1.0)
        self.masses = np.asarray(masses, np.float64)
        self.damping = np.broadcast_to(np.asarray(damping, np.float64),
                                       (len(cage.vertices),))
        self.env = env or CollisionEnv()
        self.gravity = np.asarray(gravity, np.float64)
        self.colors = color_tets(cage)
        self.inv_rest = np.ascontiguousarray(cage.rest_inverse_basis)
        self.tets = np.ascontiguousarray(cage.tets.astype(np.int64))

    def make_state(self, pinned=None) -> SimState:
        return SimState.at_rest(self.cage, self.masses, pinned)

    # -- user attachments ---------------------------------------------------

    def attach(self, state: SimState, anchor, radius: float, mask=None):
        """Bind all vertices within radius of anchor; returns a handle or
        None when nothing is captured. An optional boolean mask restricts
        the candidates (e.g. to one object's vertices)."""
        if radius <= 0:
            raise ValueError("grab radius must be positive")
        anchor = np.asarray(anchor, np.float64)
        d = np.linalg.norm(state.positions - anchor, axis=1)
        eligible = (d <= radius) & (state.inv_mass > 0)
        if mask is not None:
            eligible &= np.asarray(mask, bool)
        ids = np.flatnonzero(eligible)
        if len(ids) == 0:
            warnings.warn("grab captured no vertices", stacklevel=2)
            return None
        handle = state._next_handle
        state._next_handle += 1
        state.attachments[handle] = Attachment(
            vertex_ids=ids, offsets=state.positions[ids] - anchor,
            anchor=anchor.copy())
        return handle

    def drag(self, state: SimState, handle, anchor):
        state.attachments[handle].anchor = np.asarray(anchor, np.float64)

    def release(self, state: SimState, handle):
        state.attachments.pop(handle, None)

    # -- stepping -----------------------------------------------------------

    def substep(self, state: SimState, dt: float, iterations: int = 10):
        if dt <= 0 or iterations < 1:
            raise ValueError("dt must be positive and iterations >= 1")
        x, v, w = state.positions, state.velocities, state.inv_mass
        free = w > 0
        v[free] += self.gravity * dt
        state.prev_positions[:] = x
        x[free] += v[free] * dt

        if state.lambdas is None or len(state.lambdas) != len(self.tets):
            state.lambdas = np.zeros((len(self.tets), 2))
        state.lambdas[:] = 0.0
        dt2 = dt * dt
        for _ in range(iterations):
            for order in self.colors:
                _project_tets(x, w, self.tets, self.inv_rest,
                              self.alpha_d, self.alpha_h, state.lambdas,
                              order, dt2)
        self._project_attachments(state)
        project_collisions(state, self.env)

        if not np.all(np.isfinite(x)):
            bad_vert = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0])
            owners = np.flatnonzero((self.tets == bad_vert).any(axis=1))
            tet = int(owners[0]) if len(owners) else -1
            raise SimulationError(
                f"non-finite position at vertex {bad_vert} (constraint tet {tet})")

        v[:] = (x - state.prev_positions) / dt
        v *= np.maximum(0.0, 1.0 - self.damping * dt)[:, None]
        state.time += dt
        return state

    def step_frame(self, state: SimState, frame_dt: float, dt: float,
                   iterations: int = 10):
        """Advance one rendered frame = ceil(frame_dt/dt) substeps."""
        n = max(1, int(np.ceil(frame_dt / dt - 1e-9)))
        for _ in range(n):
            self.substep(state, dt, iterations)
        return n

    def _project_attachments(self, state: SimState):
        for att in state.attachments.values():
            ids = att.vertex_ids
            target = att.anchor + att.offsets
            movable = state.inv_mass[ids] > 0
            state.positions[ids[movable]] = target[movable]

    def constraint_residual(self, positions) -> float:
        """L2 norm of all active constraint values at given positions."""
        p = np.asarray(positions, np.float64)[self.tets]
        basis = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0],
                          p[:, 3] - p[:, 0]], axis=2)
        f = basis @ self.inv_rest
        fro = np.sqrt(np.einsum("tij,tij->t", f, f))
        c_d = np.where(self.alpha_d > 0, fro - np.sqrt(3.0), 0.0)
        c_h = np.where(self.alpha_h > 0, np.linalg.det(f) - 1.0, 0.0)
        return float(np.sqrt(np.sum(c_d**2) + np.sum(c_h**2)))


def project_collisions(state: SimState, env: CollisionEnv) -> SimState:
    """Push penetrating vertices to the surface; damp tangential slide by
    (1 - friction); separate close vertices of different objects."""
    x, w = state.positions, state.inv_mass
    prev = state.prev_positions
    free = w > 0
    if env.ground_height is not None:
        below = (x[:, 1] < env.ground_height) & free
        if np.any(below):
            if env.friction > 0:
                slide = x[below][:, [0, 2]] - prev[below][:, [0, 2]]
                x[below, 0] = prev[below, 0] + (1 - env.friction) * slide[:, 0]
                x[below, 2] = prev[below, 2] + (1 - env.friction) * slide[:, 1]
            x[below, 1] = env.ground_height
    if env.static_field is not None:
        d = env.static_field.sample(x)
        hit = (d < 0) & free
        if np.any(hit):
            n = env.static_field.gradient(x[hit])
            if env.friction > 0:
                delta = x[hit] - prev[hit]
                normal_part = (delta * n).sum(axis=1, keepdims=True) * n
                x[hit] = prev[hit] + normal_part \
                    + (1 - env.friction) * (delta - normal_part)
                d2 = env.static_field.sample(x[hit])
                x[hit] -= np.minimum(d2, 0.0)[:, None] * n
            else:
                x[hit] -= d[hit][:, None] * n
    if env.repulsion_radius > 0 and env.vertex_object is not None:
        _pair_repulsion(state, env)
    return state


def _pair_repulsion(state: SimState, env: CollisionEnv):
    r = env.repulsion_radius
    x, w = state.positions, state.inv_mass
    pairs = cKDTree(x).query_pairs(r, output_type="ndarray")
    if len(pairs) == 0:
        return
    obj = env.vertex_object
    pairs = pairs[obj[pairs[:, 0]] != obj[pairs[:, 1]]]
    if len(pairs) == 0:
        return
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    for a, b in pairs:
        delta = x[b] - x[a]
        dist = np.linalg.norm(delta)
        wsum = w[a] + w[b]
        if dist >= r or dist < 1e-12 or wsum == 0:
            continue
        push = (r - dist) / wsum * (delta / dist)
        x[a] -= w[a] * push
        x[b] += w[b] * push


_SOLVER_CACHE: dict = {}


def substep(state: SimState, cage: TetMesh, material: Material,
            env: CollisionEnv | None = None, dt: float = 1e-4,
            iterations: int = 10) -> SimState:
    """One-shot form of Solver.substep for single-material cages."""
    key = (id(cage), material, id(env))
    solver = _SOLVER_CACHE.get(key)
    if solver is None:
        mu, lam = lame_parameters(material.youngs_modulus,
                                  material.poisson_ratio)
        solver = Solver(cage, mu, lam, assemble_masses(cage, material.density),
                        damping=material.damping, env=env)
        _SOLVER_CACHE.clear()
        _SOLVER_CACHE[key] = solver
    return solver.substep(state, dt, iterations)


@numba.njit(parallel=True, cache=True)
def _project_tets(x, w, tets, inv_rest, alpha_d, alpha_h, lambdas, order, dt2):
    sqrt3 = np.sqrt(3.0)
    for k in numba.prange(order.shape[0]):
        t = order[k]
        ia, ib, ic, id_ = tets[t, 0], tets[t, 1], tets[t, 2], tets[t, 3]
        wa, wb, wc, wd = w[ia], w[ib], w[ic], w[id_]
        if wa + wb + wc + wd == 0.0:
            continue
        b = inv_rest[t]
        d00 = x[ib, 0] - x[ia, 0]
        d10 = x[ib, 1] - x[ia, 1]
        d20 = x[ib, 2] - x[ia, 2]
        d01 = x[ic, 0] - x[ia, 0]
        d11 = x[ic, 1] - x[ia, 1]
        d21 = x[ic, 2] - x[ia, 2]
        d02 = x[id_, 0] - x[ia, 0]
        d12 = x[id_, 1] - x[ia, 1]
        d22 = x[id_, 2] - x[ia, 2]
        # F = D @ B
        f00 = d00 * b[0, 0] + d01 * b[1, 0] + d02 * b[2, 0]
        f01 = d00 * b[0, 1] + d01 * b[1, 1] + d02 * b[2, 1]
        f02 = d00 * b[0, 2] + d01 * b[1, 2] + d02 * b[2, 2]
        f10 = d10 * b[0, 0] + d11 * b[1, 0] + d12 * b[2, 0]
        f11 = d10 * b[0, 1] + d11 * b[1, 1] + d12 * b[2, 1]
        f12 = d10 * b[0, 2] + d11 * b[1, 2] + d12 * b[2, 2]
        f20 = d20 * b[0, 0] + d21 * b[1, 0] + d22 * b[2, 0]
        f21 = d20 * b[0, 1] + d21 * b[1, 1] + d22 * b[2, 1]
        f22 = d20 * b[0, 2] + d21 * b[1, 2] + d22 * b[2, 2]

        # deviatoric constraint: |F|_F - sqrt(3)
        if alpha_d[t] >= 0.0:
            fro = np.sqrt(f00 * f00 + f01 * f01 + f02 * f02
                          + f10 * f10 + f11 * f11 + f12 * f12
                          + f20 * f20 + f21 * f21 + f22 * f22)
            if fro > 1e-12:
                c = fro - sqrt3
                s = 1.0 / fro
                # G = (F/fro) @ B^T; columns are gradients wrt x_b, x_c, x_d
                g10 = s * (f00 * b[0, 0] + f01 * b[0, 1] + f02 * b[0, 2])
                g11 = s * (f10 * b[0, 0] + f11 * b[0, 1] + f12 * b[0, 2])
                g12 = s * (f20 * b[0, 0] + f21 * b[0, 1] + f22 * b[0, 2])
                g20 = s * (f00 * b[1, 0] + f01 * b[1, 1] + f02 * b[1, 2])
                g21 = s * (f10 * b[1, 0] + f11 * b[1, 1] + f12 * b[1, 2])
                g22 = s * (f20 * b[1, 0] + f21 * b[1, 1] + f22 * b[1, 2])
                g30 = s * (f00 * b[2, 0] + f01 * b[2, 1] + f02 * b[2, 2])
                g31 = s * (f10 * b[2, 0] + f11 * b[2, 1] + f12 * b[2, 2])
                g32 = s * (f20 * b[2, 0] + f21 * b[2, 1] + f22 * b[2, 2])
                g00 = -(g10 + g20 + g30)
                g01 = -(g11 + g21 + g31)
                g02 = -(g12 + g22 + g32)
                wsum = (wa * (g00 * g00 + g01 * g01 + g02 * g02)
                        + wb * (g10 * g10 + g11 * g11 + g12 * g12)
                        + wc * (g20 * g20 + g21 * g21 + g22 * g22)
                        + wd * (g30 * g30 + g31 * g31 + g32 * g32))
                at = alpha_d[t] / dt2
                if wsum + at > 0.0:
                    dl = (-c - at * lambdas[t, 0]) / (wsum + at)
                    lambdas[t, 0] += dl
                    x[ia, 0] += wa * dl * g00
                    x[ia, 1] += wa * dl * g01
                    x[ia, 2] += wa * dl * g02
                    x[ib, 0] += wb * dl * g10
                    x[ib, 1] += wb * dl * g11
                    x[ib, 2] += wb * dl * g12
                    x[ic, 0] += wc * dl * g20
                    x[ic, 1] += wc * dl * g21
                    x[ic, 2] += wc * dl * g22
                    x[id_, 0] += wd * dl * g30
                    x[id_, 1] += wd * dl * g31
                    x[id_, 2] += wd * dl * g32

        # hydrostatic constraint: det(F) - 1
        if alpha_h[t] >= 0.0:
            d00 = x[ib, 0] - x[ia, 0]
            d10 = x[ib, 1] - x[ia, 1]
            d20 = x[ib, 2] - x[ia, 2]
            d01 = x[ic, 0] - x[ia, 0]
            d11 = x[ic, 1] - x[ia, 1]
            d21 = x[ic, 2] - x[ia, 2]
            d02 = x[id_, 0] - x[ia, 0]
            d12 = x[id_, 1] - x[ia, 1]
            d22 = x[id_, 2] - x[ia, 2]
            f00 = d00 * b[0, 0] + d01 * b[1, 0] + d02 * b[2, 0]
            f01 = d00 * b[0, 1] + d01 * b[1, 1] + d02 * b[2, 1]
            f02 = d00 * b[0, 2] + d01 * b[1, 2] + d02 * b[2, 2]
            f10 = d10 * b[0, 0] + d11 * b[1, 0] + d12 * b[2, 0]
            f11 = d10 * b[0, 1] + d11 * b[1, 1] + d12 * b[2, 1]
            f12 = d10 * b[0, 2] + d11 * b[1, 2] + d12 * b[2, 2]
            f20 = d20 * b[0, 0] + d21 * b[1, 0] + d22 * b[2, 0]
            f21 = d20 * b[0, 1] + d21 * b[1, 1] + d22 * b[2, 1]
            f22 = d20 * b[0, 2] + d21 * b[1, 2] + d22 * b[2, 2]
            det = (f00 * (f11 * f22 - f12 * f21)
                   - f01 * (f10 * f22 - f12 * f20)
                   + f02 * (f10 * f21 - f11 * f20))
            c = det - 1.0
            # cof(F)
            k00 = f11 * f22 - f12 * f21
            k01 = f12 * f20 - f10 * f22
            k02 = f10 * f21 - f11 * f20
            k10 = f02 * f21 - f01 * f22
            k11 = f00 * f22 - f02 * f20
            k12 = f01 * f20 - f00 * f21
            k20 = f01 * f12 - f02 * f11
            k21 = f02 * f10 - f00 * f12
            k22 = f00 * f11 - f01 * f10
            # gradients: columns of cof(F) @ B^T  (cof in row-major k[r][c])
            g10 = k00 * b[0, 0] + k01 * b[0, 1] + k02 * b[0, 2]
            g11 = k10 * b[0, 0] + k11 * b[0, 1] + k12 * b[0, 2]
            g12 = k20 * b[0, 0] + k21 * b[0, 1] + k22 * b[0, 2]
            g20 = k00 * b[1, 0] + k01 * b[1, 1] + k02 * b[1, 2]
            g21 = k10 * b[1, 0] + k11 * b[1, 1] + k12 * b[1, 2]
            g22 = k20 * b[1, 0] + k21 * b[1, 1] + k22 * b[1, 2]
            g30 = k00 * b[2, 0] + k01 * b[2, 1] + k02 * b[2, 2]
            g31 = k10 * b[2, 0] + k11 * b[2, 1] + k12 * b[2, 2]
            g32 = k20 * b[2, 0] + k21 * b[2, 1] + k22 * b[2, 2]
            g00 = -(g10 + g20 + g30)
            g01 = -(g11 + g21 + g31)
            g02 = -(g12 + g22 + g32)
            wsum = (wa * (g00 * g00 + g01 * g01 + g02 * g02)
                    + wb * (g10 * g10 + g11 * g11 + g12 * g12)
                    + wc * (g20 * g20 + g21 * g21 + g22 * g22)
                    + wd * (g30 * g30 + g31 * g31 + g32 * g32))
            at = alpha_h[t] / dt2
            if wsum + at > 0.0:
                dl = (-c - at * lambdas[t, 1]) / (wsum + at)
                lambdas[t, 1] += dl
                x[ia, 0] += wa * dl * g00
                x[ia, 1] += wa * dl * g01
                x[ia, 2] += wa * dl * g02
                x[ib, 0] += wb * dl * g10
                x[ib, 1] += wb * dl * g11
                x[ib, 2] += wb * dl * g12
                x[ic, 0] += wc * dl * g20
                x[ic, 1] += wc * dl * g21
                x[ic, 2] += wc * dl * g22
                x[id_, 0] += wd * dl * g30
                x[id_, 1] += wd * dl * g31
                x[id_, 2] += wd * dl * g32


@numba.njit(cache=True)
def _trilinear(values, rel, out):
    nx, ny, nz = values.shape
    for i in range(rel.shape[0]):
        fx = min(max(rel[i, 0], 0.0), nx - 1.000001)
        fy = min(max(rel[i, 1], 0.0), ny - 1.000001)
        fz = min(max(rel[i, 2], 0.0), nz - 1.000001)
        x0, y0, z0 = int(fx), int(fy), int(fz)
        tx, ty, tz = fx - x0, fy - y0, fz - z0
        c000 = values[x0, y0, z0]
        c100 = values[x0 + 1, y0, z0]
        c010 = values[x0, y0 + 1, z0]
        c110 = values[x0 + 1, y0 + 1, z0]
        c001 = values[x0, y0, z0 + 1]
        c101 = values[x0 + 1, y0, z0 + 1]
        c011 = values[x0, y0 + 1, z0 + 1]
        c111 = values[x0 + 1, y0 + 1, z0 + 1]
        c00 = c000 * (1 - tx) + c100 * tx
        c10 = c010 * (1 - tx) + c110 * tx
        c01 = c001 * (1 - tx) + c101 * tx
        c11 = c011 * (1 - tx) + c111 * tx
        out[i] = (c00 * (1 - ty) + c10 * ty) * (1 - tz) \
            + (c01 * (1 - ty) + c11 * ty) * tz
