"""Gaussian splat data model, binary PLY interchange, and the covariance /
spherical-harmonics / opacity math shared by the rest of the engine.

A scene is stored struct-of-arrays (float32, matching the on-disk layout) so
that a few hundred thousand kernels stay cheap to slice; math helpers upcast
to float64.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

# Degree-3 real spherical harmonics constants (the standard splat-asset basis).
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

SH_COEFFS = 16  # (deg+1)^2 at degree 3

# Vertex property layout every splat PLY must carry, in this exact order.
REQUIRED_PROPERTIES = (
    ["x", "y", "z", "nx", "ny", "nz"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(45)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)
OPTIONAL_LABEL_PROPERTY = "segment_label"


class PlyParseError(ValueError):
    """Malformed PLY container. Carries the byte offset of the offending data."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class PlySchemaError(ValueError):
    """Structurally valid PLY that does not match the splat vertex layout."""

    def __init__(self, message: str, prop: str | None = None):
        super().__init__(message)
        self.property = prop


@dataclass(frozen=True)
class GaussianSplat:
    """One anisotropic Gaussian kernel."""

    mean: np.ndarray          # (3,) world position, m
    rotation: np.ndarray      # (4,) unit quaternion, (w, x, y, z)
    log_scale: np.ndarray     # (3,) log of per-axis std-dev, m
    opacity_logit: float
    sh: np.ndarray            # (3, 16) RGB x SH coefficients
    segment_label: int = 0


@dataclass(frozen=True)
class ObjectInfo:
    name: str
    dynamic: bool = True


class SplatScene:
    """Ordered splat collection plus the segment-label -> object table.

    Arrays are float32 (int32 for labels) and keep PLY order, so a
    load/save round trip is bit-exact.
    """

    def __init__(self, means, rotations, log_scales, opacity_logits, sh,
                 segment_labels=None, objects=None):
        self.means = np.ascontiguousarray(means, dtype=np.float32).reshape(-1, 3)
        n = len(self.means)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float32).reshape(n, 4)
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float32).reshape(n, 3)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=np.float32).reshape(n)
        self.sh = np.ascontiguousarray(sh, dtype=np.float32).reshape(n, 3, SH_COEFFS)
        if segment_labels is None:
            segment_labels = np.zeros(n, dtype=np.int32)
        self.segment_labels = np.ascontiguousarray(segment_labels, dtype=np.int32).reshape(n)
        if objects is None:
            objects = {int(l): ObjectInfo(name=f"object_{int(l)}")
                       for l in np.unique(self.segment_labels)}
        self.objects = dict(objects)
        self._check()

    def _check(self):
        for name, arr in (("means", self.means), ("rotations", self.rotations),
                          ("log_scales", self.log_scales),
                          ("opacity_logits", self.opacity_logits), ("sh", self.sh)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in splat field '{name}'")
        if len(self.rotations):
            norms = np.linalg.norm(self.rotations.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("splat quaternions are not normalized")
            if not np.all(np.isfinite(np.exp(self.log_scales.astype(np.float64)))):
                raise ValueError("exp(log_scale) overflows")
        missing = set(np.unique(self.segment_labels)) - set(self.objects)
        if missing:
            raise ValueError(f"segment labels without object entries: {sorted(missing)}")

    def __len__(self):
        return len(self.means)

    def splat(self, i: int) -> GaussianSplat:
        return GaussianSplat(
            mean=self.means[i].copy(),
            rotation=self.rotations[i].copy(),
            log_scale=self.log_scales[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            sh=self.sh[i].copy(),
            segment_label=int(self.segment_labels[i]),
        )

    @classmethod
    def from_splats(cls, splats, objects=None) -> "SplatScene":
        splats = list(splats)
        return cls(
            means=np.array([s.mean for s in splats], dtype=np.float32).reshape(-1, 3),
            rotations=np.array([s.rotation for s in splats], dtype=np.float32).reshape(-1, 4),
            log_scales=np.array([s.log_scale for s in splats], dtype=np.float32).reshape(-1, 3),
            opacity_logits=np.array([s.opacity_logit for s in splats], dtype=np.float32),
            sh=np.array([s.sh for s in splats], dtype=np.float32).reshape(-1, 3, SH_COEFFS),
            segment_labels=np.array([s.segment_label for s in splats], dtype=np.int32),
            objects=objects,
        )

    def select(self, mask) -> "SplatScene":
        """Sub-scene with the same object table."""
        return SplatScene(self.means[mask], self.rotations[mask], self.log_scales[mask],
                          self.opacity_logits[mask], self.sh[mask],
                          self.segment_labels[mask], self.objects)


def normalize_quaternions(q: np.ndarray) -> np.ndarray:
    """Normalize quaternion rows, leaving already-unit rows bit-untouched.

    Skipping the divide inside the 1e-6 tolerance keeps save/load round trips
    exact while still forcing denormalized inputs onto the unit sphere.
    """
    q = np.asarray(q, dtype=np.float32).reshape(-1, 4)
    norms = np.linalg.norm(q.astype(np.float64), axis=1)
    if np.any(norms < 1e-12) or not np.all(np.isfinite(norms)):
        bad = int(np.argmin(np.nan_to_num(norms, nan=-1.0)))
        raise ValueError(f"quaternion {bad} has zero or non-finite norm")
    out = q.copy()
    off = np.abs(norms - 1.0) >= 1e-6
    if np.any(off):
        out[off] = (q[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return out


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) (w,x,y,z) -> rotation matrix/matrices, float64."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = q.reshape(-1, 4)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((len(q), 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m[0] if single else m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix/matrices -> unit quaternion(s) (w,x,y,z), w >= 0."""
    m = np.asarray(m, dtype=np.float64)
    single = m.ndim == 2
    m = m.reshape(-1, 3, 3)
    q = np.empty((len(m), 4))
    # Shepperd's method, branch per element on the largest diagonal term.
    t = np.einsum("nii->n", m)
    for i in range(len(m)):
        a = m[i]
        if t[i] > 0:
            r = np.sqrt(1.0 + t[i])
            s = 0.5 / r
            q[i] = (0.5 * r, (a[2, 1] - a[1, 2]) * s, (a[0, 2] - a[2, 0]) * s,
                    (a[1, 0] - a[0, 1]) * s)
        else:
            j = int(np.argmax(np.diag(a)))
            k, l = (j + 1) % 3, (j + 2) % 3
            r = np.sqrt(1.0 + a[j, j] - a[k, k] - a[l, l])
            s = 0.5 / r
            vec = np.empty(3)
            vec[j] = 0.5 * r
            vec[k] = (a[k, j] + a[j, k]) * s
            vec[l] = (a[l, j] + a[j, l]) * s
            q[i] = (float((a[l, k] - a[k, l]) * s), vec[0], vec[1], vec[2])
        if q[i, 0] < 0:
            q[i] = -q[i]
        q[i] /= np.linalg.norm(q[i])
    return q[0] if single else q


def covariance(log_scale, rotation) -> np.ndarray:
    """World-space covariance R S S^T R^T with S = diag(exp(log_scale))."""
    ls = np.asarray(log_scale, dtype=np.float64)
    q = np.asarray(rotation, dtype=np.float64)
    if not (np.all(np.isfinite(ls)) and np.all(np.isfinite(q))):
        raise ValueError("non-finite covariance inputs")
    r = quat_to_matrix(q)
    a = r * np.exp(ls)[None, :]  # columns scaled: R @ diag(s)
    cov = a @ a.T
    return 0.5 * (cov + cov.T)  # exact symmetry


def covariances(scene: SplatScene) -> np.ndarray:
    """(N,3,3) rest covariances for a whole scene."""
    r = quat_to_matrix(scene.rotations)
    s = np.exp(scene.log_scales.astype(np.float64))
    a = r * s[:, None, :]
    cov = a @ np.swapaxes(a, 1, 2)
    return 0.5 * (cov + np.swapaxes(cov, 1, 2))


def opacity(opacity_logit) -> np.ndarray:
    """Sigmoid activation of the stored logit."""
    x = np.asarray(opacity_logit, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite opacity logit")
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def eval_sh(sh, view_dir, degree: int = 3) -> np.ndarray:
    """Evaluate view-dependent color; returns rgb clamped to [0,1]."""
    sh = np.asarray(sh, dtype=np.float64).reshape(1, 3, SH_COEFFS)
    d = np.asarray(view_dir, dtype=np.float64).reshape(1, 3)
    return eval_sh_batch(sh, d, degree)[0]


def eval_sh_batch(sh: np.ndarray, dirs: np.ndarray, degree: int = 3) -> np.ndarray:
    """(N,3,16) coefficients x (N,3) unit directions -> (N,3) rgb in [0,1]."""
    if not 0 <= degree <= 3:
        raise ValueError(f"SH degree {degree} out of range")
    sh = np.asarray(sh, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    res = SH_C0 * sh[:, :, 0]
    if degree >= 1:
        res = (res - SH_C1 * y[:, None] * sh[:, :, 1]
               + SH_C1 * z[:, None] * sh[:, :, 2]
               - SH_C1 * x[:, None] * sh[:, :, 3])
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        res = (res + SH_C2[0] * xy[:, None] * sh[:, :, 4]
               + SH_C2[1] * yz[:, None] * sh[:, :, 5]
               + SH_C2[2] * (2 * zz - xx - yy)[:, None] * sh[:, :, 6]
               + SH_C2[3] * xz[:, None] * sh[:, :, 7]
               + SH_C2[4] * (xx - yy)[:, None] * sh[:, :, 8])
    if degree >= 3:
        res = (res + SH_C3[0] * (y * (3 * xx - yy))[:, None] * sh[:, :, 9]
               + SH_C3[1] * (xy * z)[:, None] * sh[:, :, 10]
               + SH_C3[2] * (y * (4 * zz - xx - yy))[:, None] * sh[:, :, 11]
               + SH_C3[3] * (z * (2 * zz - 3 * xx - 3 * yy))[:, None] * sh[:, :, 12]
               + SH_C3[4] * (x * (4 * zz - xx - yy))[:, None] * sh[:, :, 13]
               + SH_C3[5] * (z * (xx - yy))[:, None] * sh[:, :, 14]
               + SH_C3[6] * (x * (xx - 3 * yy))[:, None] * sh[:, :, 15])
    return np.clip(res + 0.5, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PLY interchange

def _parse_header(data: bytes):
    """Returns (vertex_count, has_label, body_offset)."""
    if not data.startswith(b"ply"):
        raise PlyParseError("missing 'ply' magic", 0)
    end = data.find(b"end_header\n")
    if end < 0:
        raise PlyParseError("header has no 'end_header'", len(data))
    body_offset = end + len(b"end_header\n")
    lines = []
    pos = 0
    for raw in data[:end].split(b"\n"):
        lines.append((pos, raw))
        pos += len(raw) + 1

    fmt_seen = False
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for off, raw in lines[1:]:
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyParseError("non-ascii header line", off)
        if not line or line.startswith("comment"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise PlyParseError(f"unsupported format '{line}'", off)
            fmt_seen = True
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyParseError(f"malformed element line '{line}'", off)
            if parts[1] != "vertex":
                raise PlySchemaError(f"unsupported element '{parts[1]}'")
            try:
                count = int(parts[2])
            except ValueError:
                raise PlyParseError(f"bad vertex count '{parts[2]}'", off)
            if count < 0:
                raise PlyParseError(f"negative vertex count {count}", off)
            in_vertex = True
        elif parts[0] == "property":
            if not in_vertex:
                raise PlyParseError("property before any element", off)
            if len(parts) != 3:
                raise PlyParseError(f"malformed property line '{line}'", off)
            props.append((parts[1], parts[2]))
        else:
            raise PlyParseError(f"unrecognized header line '{line}'", off)
    if not fmt_seen:
        raise PlyParseError("header missing format line", body_offset)
    if count is None:
        raise PlySchemaError("header missing vertex element")

    names = [p[1] for p in props]
    for i, want in enumerate(REQUIRED_PROPERTIES):
        if i >= len(names):
            raise PlySchemaError(f"missing required property '{want}'", prop=want)
        if names[i] != want:
            raise PlySchemaError(
                f"property {i} is '{names[i]}', expected '{want}'", prop=want)
        if props[i][0] not in ("float", "float32"):
            raise PlySchemaError(f"property '{want}' must be float32", prop=want)
    extra = props[len(REQUIRED_PROPERTIES):]
    has_label = False
    if extra:
        if len(extra) > 1 or extra[0][1] != OPTIONAL_LABEL_PROPERTY:
            raise PlySchemaError(
                f"unexpected trailing properties {[p[1] for p in extra]}")
        if extra[0][0] not in ("int", "int32"):
            raise PlySchemaError("'segment_label' must be int32",
                                 prop=OPTIONAL_LABEL_PROPERTY)
        has_label = True
    return count, has_label, body_offset


def load_splats(data: bytes, objects=None) -> SplatScene:
    """Parse a binary-little-endian splat PLY into a scene.

    Normals are read and discarded. A missing `segment_label` property
    defaults every splat to label 0.
    """
    count, has_label, body = _parse_header(data)
    fields = [(name, "<f4") for name in REQUIRED_PROPERTIES]
    if has_label:
        fields.append((OPTIONAL_LABEL_PROPERTY, "<i4"))
    dtype = np.dtype(fields)
    need = count * dtype.itemsize
    if len(data) - body < need:
        raise PlyParseError(
            f"body truncated: need {need} bytes, have {len(data) - body}",
            len(data))
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=body)

    def cols(names):
        return np.stack([rec[n] for n in names], axis=1) if count else np.zeros((0, len(names)), np.float32)

    means = cols(["x", "y", "z"])
    rotations = normalize_quaternions(cols([f"rot_{i}" for i in range(4)]))
    log_scales = cols([f"scale_{i}" for i in range(3)])
    opac = rec["opacity"].copy() if count else np.zeros(0, np.float32)
    sh = np.zeros((count, 3, SH_COEFFS), dtype=np.float32)
    for c in range(3):
        sh[:, c, 0] = rec[f"f_dc_{c}"]
        for j in range(15):
            sh[:, c, 1 + j] = rec[f"f_rest_{c * 15 + j}"]
    labels = (rec[OPTIONAL_LABEL_PROPERTY].copy() if has_label
              else np.zeros(count, dtype=np.int32))
    return SplatScene(means, rotations, log_scales, opac, sh, labels, objects)


def save_splats(scene: SplatScene, with_labels: bool | None = None) -> bytes:
    """Serialize a scene to binary PLY; inverse of load_splats.

    Labels are written whenever any are nonzero (or when forced on).
    """
    n = len(scene)
    if with_labels is None:
        with_labels = bool(np.any(scene.segment_labels != 0))
    props = REQUIRED_PROPERTIES
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in props]
    if with_labels:
        header.append(f"property int {OPTIONAL_LABEL_PROPERTY}")
    header.append("end_header")
    buf = io.BytesIO()
    buf.write(("\n".join(header) + "\n").encode("ascii"))

    fields = [(name, "<f4") for name in props]
    if with_labels:
        fields.append((OPTIONAL_LABEL_PROPERTY, "<i4"))
    rec = np.zeros(n, dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = scene.means.T
    for c in range(3):
        rec[f"f_dc_{c}"] = scene.sh[:, c, 0]
        for j in range(15):
            rec[f"f_rest_{c * 15 + j}"] = scene.sh[:, c, 1 + j]
    rec["opacity"] = scene.opacity_logits
    for i in range(3):
        rec[f"scale_{i}"] = scene.log_scales[:, i]
    for i in range(4):
        rec[f"rot_{i}"] = scene.rotations[:, i]
    if with_labels:
        rec[OPTIONAL_LABEL_PROPERTY] = scene.segment_labels
    buf.write(rec.tobytes())
    return buf.getvalue()
