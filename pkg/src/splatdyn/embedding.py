"""Two-level splat binding: every splat owns a snug local tetrahedron whose
vertices ride the global cage barycentrically.

Deformation flows cage -> local tet vertices -> per-splat deformation
gradient -> pushed-forward mean/covariance, which keeps neighboring-cage-tet
disagreements from stretching individual splats into spikes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from splatdyn.meshgen import TetMesh
from splatdyn.splats import SplatScene, covariances, quat_to_matrix

# Regular reference tetrahedron, centroid 0, insphere radius exactly 1.
T_REF = np.sqrt(3.0) * np.array(
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])

EMB_MAGIC = b"EMB1"


class DegenerateTetError(ValueError):
    pass


class EmbeddingError(ValueError):
    pass


def deformation_gradient(rest, current) -> np.ndarray:
    """F mapping rest tet edge vectors onto current ones."""
    r = np.asarray(rest, dtype=np.float64).reshape(4, 3)
    c = np.asarray(current, dtype=np.float64).reshape(4, 3)
    dr = (r[1:] - r[0]).T
    scale = np.max(np.linalg.norm(dr, axis=0))
    det = np.linalg.det(dr)
    if abs(det) <= 1e-12 * scale**3 or scale == 0.0:
        raise DegenerateTetError(f"rest tet is singular (det {det:.3e})")
    return (c[1:] - c[0]).T @ np.linalg.inv(dr)


@dataclass(frozen=True)
class LocalTet:
    rest_vertices: np.ndarray            # (4, 3)
    rest_barycentric_of_mean: np.ndarray  # (4,)


def build_local_tet(splat, k: float = 2.0) -> LocalTet:
    """Regular tetrahedron circumscribing the splat's k-sigma ellipsoid.

    The reference tet's insphere is the unit sphere, so its image under
    mu + k R diag(exp(log_scale)) maps the insphere exactly onto the
    k-sigma ellipsoid: containment is tight by construction.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    verts = local_tet_vertices(
        np.asarray(splat.mean, np.float64)[None],
        np.asarray(splat.rotation, np.float64)[None],
        np.asarray(splat.log_scale, np.float64)[None], k)[0]
    return LocalTet(rest_vertices=verts,
                    rest_barycentric_of_mean=np.full(4, 0.25))


def local_tet_vertices(means, rotations, log_scales, k: float) -> np.ndarray:
    """(N,4,3) local tet vertices for arrays of splat parameters."""
    r = quat_to_matrix(rotations).reshape(-1, 3, 3)
    scaled = T_REF[None, :, :] * np.exp(np.asarray(log_scales, np.float64))[:, None, :]
    return np.asarray(means, np.float64)[:, None, :] + k * np.einsum(
        "nij,nvj->nvi", r, scaled)


class TetLocator:
    """Uniform spatial hash over tet bounding boxes for point location."""

    def __init__(self, cage: TetMesh):
        self.cage = cage
        p = cage.vertices[cage.tets]          # (T,4,3)
        self.tet_lo = p.min(axis=1)
        self.tet_hi = p.max(axis=1)
        ext = self.tet_hi - self.tet_lo
        self.cell = float(np.median(ext[ext > 0])) if np.any(ext > 0) else 1.0
        self.origin = self.tet_lo.min(axis=0)
        lo = np.floor((self.tet_lo - self.origin) / self.cell).astype(np.int64)
        hi = np.floor((self.tet_hi - self.origin) / self.cell).astype(np.int64)
        buckets: dict[tuple, list] = {}
        for t in range(len(cage)):
            for i in range(lo[t, 0], hi[t, 0] + 1):
                for j in range(lo[t, 1], hi[t, 1] + 1):
                    for kk in range(lo[t, 2], hi[t, 2] + 1):
                        buckets.setdefault((i, j, kk), []).append(t)
        self.buckets = {c: np.array(ts, dtype=np.int64) for c, ts in buckets.items()}
        self.centroid_tree = cKDTree(p.mean(axis=1))

    def barycentric(self, tets, points):
        """(M,4) barycentric coords of points[i] in cage tet tets[i]."""
        v0 = self.cage.vertices[self.cage.tets[tets, 0]]
        rel = np.einsum("tij,tj->ti", self.cage.rest_inverse_basis[tets],
                        points - v0)
        return np.concatenate([1.0 - rel.sum(axis=1, keepdims=True), rel], axis=1)

    def locate(self, points, tol: float = 1e-6):
        """Containing tet per point (lowest index on ties), -1 if none."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.full(len(points), -1, dtype=np.int64)
        cells = np.floor((points - self.origin) / self.cell).astype(np.int64)
        order = np.lexsort(cells.T[::-1])
        i = 0
        while i < len(order):
            j = i
            key = tuple(cells[order[i]])
            while j < len(order) and tuple(cells[order[j]]) == key:
                j += 1
            cand = self.buckets.get(key)
            if cand is not None:
                idx = order[i:j]
                pts = points[idx]
                best = np.full(len(idx), -1, dtype=np.int64)
                for t in cand:  # ascending: first hit is the lowest index
                    open_slots = best < 0
                    if not open_slots.any():
                        break
                    b = self.barycentric(np.full(open_slots.sum(), t), pts[open_slots])
                    ok = (b >= -tol).all(axis=1)
                    sel = np.flatnonzero(open_slots)[ok]
                    best[sel] = t
                out[idx] = best
            i = j
        return out

    def nearest(self, points):
        """Tet with nearest centroid, for out-of-cage fallback binding."""
        _, idx = self.centroid_tree.query(np.asarray(points, np.float64))
        return np.asarray(idx, dtype=np.int64)


class EmbeddingTable:
    """Per-splat local tets plus the cage bindings of their vertices."""

    def __init__(self, local_rest, mean_weights, tet_index, weights, sigma0,
                 n_cage_vertices, flagged=None):
        n = len(local_rest)
        self.local_rest = np.ascontiguousarray(local_rest, np.float64).reshape(n, 4, 3)
        self.mean_weights = np.ascontiguousarray(mean_weights, np.float64).reshape(n, 4)
        self.tet_index = np.ascontiguousarray(tet_index, np.int64).reshape(n, 4)
        self.weights = np.ascontiguousarray(weights, np.float64).reshape(n, 4, 4)
        self.sigma0 = np.ascontiguousarray(sigma0, np.float64).reshape(n, 3, 3)
        self.n_cage_vertices = int(n_cage_vertices)
        if flagged is None:
            flagged = np.zeros((n, 4), dtype=bool)
        self.flagged = np.ascontiguousarray(flagged, bool).reshape(n, 4)
        self._rest_inv = None
        self._check()

    def _check(self):
        if np.any(np.abs(self.mean_weights.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("mean weights must sum to 1")
        if np.any(np.abs(self.weights.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("binding weights must sum to 1")
        if self.tet_index.size and self.tet_index.min() < 0:
            raise ValueError("negative tet index")

    def __len__(self):
        return len(self.local_rest)

    @property
    def rest_inverse_basis(self):
        """(N,3,3) inverses of local rest edge bases, cached."""
        if self._rest_inv is None:
            r = self.local_rest
            basis = np.stack([r[:, 1] - r[:, 0], r[:, 2] - r[:, 0],
                              r[:, 3] - r[:, 0]], axis=2)
            self._rest_inv = np.linalg.inv(basis)
        return self._rest_inv


def build_embedding(scene: SplatScene, cage: TetMesh, k: float = 2.0) -> EmbeddingTable:
    """Bind every splat's local tet vertices into the cage.

    Vertices that fall outside every cage tet bind to the
    nearest-centroid tet with extrapolated (possibly negative) weights and
    are flagged. A splat mean outside the cage is a hard error: the cage
    was built too tight.
    """
    n = len(scene)
    locator = TetLocator(cage)

    mean_tets = locator.locate(scene.means.astype(np.float64))
    missing = np.flatnonzero(mean_tets < 0)
    if len(missing):
        raise EmbeddingError(
            f"splat {int(missing[0])} mean lies outside every cage tet "
            f"({len(missing)} total); rebuild the cage with more dilation")

    local = local_tet_vertices(scene.means, scene.rotations, scene.log_scales, k)
    flat = local.reshape(-1, 3)
    tet_of = locator.locate(flat)
    flagged = tet_of < 0
    if flagged.any():
        tet_of = tet_of.copy()
        tet_of[flagged] = locator.nearest(flat[flagged])
    weights = locator.barycentric(tet_of, flat)

    return EmbeddingTable(
        local_rest=local,
        mean_weights=np.full((n, 4), 0.25),
        tet_index=tet_of.reshape(n, 4),
        weights=weights.reshape(n, 4, 4),
        sigma0=covariances(scene),
        n_cage_vertices=len(cage.vertices),
        flagged=flagged.reshape(n, 4),
    )


@dataclass
class DeformedSplats:
    means: np.ndarray          # (N,3)
    covariances: np.ndarray    # (N,3,3)
    sh_rotations: np.ndarray   # (N,3,3) world-from-rest rotation per splat
    degenerate: np.ndarray     # (N,) bool, det(F) <= 0 this frame
    local_vertices: np.ndarray  # (N,4,3) deformed local tet vertices
    deformation_gradients: np.ndarray  # (N,3,3)

    @property
    def degenerate_count(self) -> int:
        return int(self.degenerate.sum())


def polar_rotations(f: np.ndarray) -> np.ndarray:
    """Rotation factors of (N,3,3) matrices via SVD, det forced to +1."""
    u, _, vt = np.linalg.svd(f)
    r = u @ vt
    neg = np.linalg.det(r) < 0
    if np.any(neg):
        u = u.copy()
        u[neg, :, 2] *= -1
        r[neg] = u[neg] @ vt[neg]
    return r


def deform_splats(table: EmbeddingTable, cage: TetMesh, cage_positions,
                  previous: DeformedSplats | None = None,
                  reorient_sh: bool = True) -> DeformedSplats:
    """Push splats through the deformed cage.

    Local tet vertices follow their barycentric bindings, each splat's
    deformation gradient comes from its own local tet, and covariance
    updates as F sigma0 F^T. Inverted local tets (det F <= 0) keep their
    previous covariance and rotation; the degenerate mask reports them.
    """
    pos = np.asarray(cage_positions, np.float64).reshape(-1, 3)
    if len(pos) != table.n_cage_vertices:
        raise ValueError(
            f"cage has {table.n_cage_vertices} vertices, got {len(pos)}")
    corner = cage.tets[table.tet_index]          # (N,4,4) vertex ids
    v = np.einsum("nvc,nvci->nvi", table.weights, pos[corner])

    basis = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]],
                     axis=2)
    f = basis @ table.rest_inverse_basis
    means = np.einsum("nv,nvi->ni", table.mean_weights, v)

    det = np.linalg.det(f)
    bad = det <= 0.0
    cov = f @ table.sigma0 @ np.swapaxes(f, 1, 2)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    if reorient_sh:
        rot = np.broadcast_to(np.eye(3), f.shape).copy()
        good = ~bad
        if good.any():
            rot[good] = polar_rotations(f[good])
    else:
        rot = np.broadcast_to(np.eye(3), f.shape).copy()
    if bad.any():
        hold_cov = previous.covariances if previous is not None else table.sigma0
        hold_rot = (previous.sh_rotations if previous is not None
                    else np.broadcast_to(np.eye(3), f.shape))
        cov[bad] = hold_cov[bad]
        rot[bad] = hold_rot[bad]
    return DeformedSplats(means=means, covariances=cov, sh_rotations=rot,
                          degenerate=bad, local_vertices=v,
                          deformation_gradients=f)


def naive_deformation_gradients(scene: SplatScene, cage: TetMesh,
                                cage_positions) -> np.ndarray:
    """Single-level baseline: each splat takes F of the cage tet holding its
    mean. The two-level path should never be spikier than this."""
    locator = TetLocator(cage)
    tets = locator.locate(scene.means.astype(np.float64))
    if np.any(tets < 0):
        tets = tets.copy()
        miss = tets < 0
        tets[miss] = locator.nearest(scene.means[miss].astype(np.float64))
    pos = np.asarray(cage_positions, np.float64).reshape(-1, 3)
    p = pos[cage.tets[tets]]
    basis = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]],
                     axis=2)
    return basis @ cage.rest_inverse_basis[tets]


# ---------------------------------------------------------------------------
# Binary interchange (shipped verbatim to viewers)

def save_embedding(table: EmbeddingTable) -> bytes:
    """Pack the table as the EMB1 little-endian blob (float32 payload)."""
    n = len(table)
    s = table.sigma0
    packed = np.stack([s[:, 0, 0], s[:, 0, 1], s[:, 0, 2],
                       s[:, 1, 1], s[:, 1, 2], s[:, 2, 2]], axis=1)
    parts = [
        EMB_MAGIC,
        struct.pack("<II", n, table.n_cage_vertices),
        table.local_rest.astype("<f4").tobytes(),
        table.mean_weights.astype("<f4").tobytes(),
        table.tet_index.astype("<u4").tobytes(),
        table.weights.astype("<f4").tobytes(),
        packed.astype("<f4").tobytes(),
    ]
    return b"".join(parts)


def load_embedding(data: bytes) -> EmbeddingTable:
    if data[:4] != EMB_MAGIC:
        raise ValueError("not an EMB1 blob")
    n, ncv = struct.unpack_from("<II", data, 4)
    off = 12
    sizes = [(n * 4 * 3, "<f4"), (n * 4, "<f4"), (n * 4, "<u4"),
             (n * 4 * 4, "<f4"), (n * 6, "<f4")]
    need = off + sum(cnt * 4 for cnt, _ in sizes)
    if len(data) < need:
        raise ValueError(f"EMB1 blob truncated: need {need} bytes, have {len(data)}")
    arrays = []
    for cnt, dt in sizes:
        arrays.append(np.frombuffer(data, dtype=dt, count=cnt, offset=off))
        off += cnt * 4
    local, mean_w, tet_idx, weights, packed = arrays
    # float32 storage perturbs the weight sums; rebuild the first component
    # so partitions of unity survive the round trip exactly
    mean_w = mean_w.reshape(n, 4).astype(np.float64).copy()
    mean_w[:, 0] = 1.0 - mean_w[:, 1:].sum(axis=1)
    weights = weights.reshape(n, 4, 4).astype(np.float64).copy()
    weights[:, :, 0] = 1.0 - weights[:, :, 1:].sum(axis=2)
    packed = packed.reshape(n, 6).astype(np.float64)
    sigma0 = np.empty((n, 3, 3))
    sigma0[:, 0, 0] = packed[:, 0]
    sigma0[:, 0, 1] = sigma0[:, 1, 0] = packed[:, 1]
    sigma0[:, 0, 2] = sigma0[:, 2, 0] = packed[:, 2]
    sigma0[:, 1, 1] = packed[:, 3]
    sigma0[:, 1, 2] = sigma0[:, 2, 1] = packed[:, 4]
    sigma0[:, 2, 2] = packed[:, 5]
    return EmbeddingTable(
        local_rest=local.reshape(n, 4, 3).astype(np.float64),
        mean_weights=mean_w,
        tet_index=tet_idx.reshape(n, 4).astype(np.int64),
        weights=weights,
        sigma0=sigma0,
        n_cage_vertices=ncv,
    )
