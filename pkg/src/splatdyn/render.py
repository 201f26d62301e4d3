"""CPU splat rasterizer with a directional shadow map.

Splats project to screen as 2D Gaussians (perspective Jacobian at the
mean, 0.3 px^2 dilation) and blend front to back in a single global
depth order. Shadows come from an expected-depth map rendered from the
light in an orthographic frame fitted to the scene; a splat is shadowed
when its light depth exceeds the bilinearly sampled map plus a bias.
Everything is plain numpy and deterministic.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from splatdyn.splats import eval_sh_batch

ALPHA_CUTOFF = 1.0 / 255.0
TRANSMITTANCE_CUTOFF = 1e-4
COV2D_DILATION = 0.3  # px^2, keeps tiny splats at least a pixel wide


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_y: float = np.deg2rad(50.0)
    width: int = 640
    height: int = 480
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, np.float64))
        object.__setattr__(self, "look_at", np.asarray(self.look_at, np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, np.float64))
        if not 0.0 < self.fov_y < np.pi:
            raise ValueError("vertical fov must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        if not 0.0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        if np.allclose(self.look_at, self.position):
            raise ValueError("camera position and look-at coincide")
        self.rotation  # degenerate up vector fails here

    @property
    def rotation(self) -> np.ndarray:
        """World-to-view rotation; rows are right, up, forward."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(self.up, fwd)
        n = np.linalg.norm(right)
        if n < 1e-12:
            raise ValueError("up vector parallel to view direction")
        right /= n
        return np.stack([right, np.cross(fwd, right), fwd])

    @property
    def focal_px(self) -> float:
        return 0.5 * self.height / np.tan(0.5 * self.fov_y)

    @property
    def principal_point(self):
        return 0.5 * (self.width - 1), 0.5 * (self.height - 1)


@dataclass(frozen=True)
class Light:
    direction: np.ndarray  # unit vector, travel direction of the light
    resolution: int = 256
    strength: float = 0.35
    bias: float | None = None  # None: 2x shadow texel world size

    def __post_init__(self):
        d = np.asarray(self.direction, np.float64)
        n = np.linalg.norm(d)
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("light direction must be a nonzero vector")
        object.__setattr__(self, "direction", d / n)
        if self.resolution < 1:
            raise ValueError("shadow map resolution must be positive")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError("shadow strength must lie in [0, 1]")


@dataclass(frozen=True)
class DepthMap:
    """Expected light-space depth per texel; +inf marks empty texels."""

    values: np.ndarray   # (res, res)
    origin: np.ndarray   # world corner of texel (0, 0)
    axes: np.ndarray     # rows: right, up, forward of the light frame
    texel: float

    def light_coords(self, points):
        rel = np.asarray(points, np.float64) - self.origin
        u = rel @ self.axes[0] / self.texel - 0.5
        v = rel @ self.axes[1] / self.texel - 0.5
        depth = rel @ self.axes[2]
        return u, v, depth

    def sample(self, points):
        """Bilinear depth; texels off the map or +inf dominate to +inf."""
        u, v, depth = self.light_coords(points)
        res = self.values.shape[0]
        inside = (u >= 0) & (u <= res - 1) & (v >= 0) & (v <= res - 1)
        out = np.full(len(u), np.inf)
        if np.any(inside):
            ui, vi = u[inside], v[inside]
            u0 = np.minimum(ui.astype(np.int64), res - 2)
            v0 = np.minimum(vi.astype(np.int64), res - 2)
            tu = ui - u0
            tv = vi - v0
            corners = np.stack([self.values[v0, u0], self.values[v0, u0 + 1],
                                self.values[v0 + 1, u0], self.values[v0 + 1, u0 + 1]])
            weights = np.stack([(1 - tu) * (1 - tv), tu * (1 - tv),
                                (1 - tu) * tv, tu * tv])
            hole = np.any(np.isinf(corners) & (weights > 0), axis=0)
            blend = np.where(np.isinf(corners), 0.0, corners)
            val = (weights * blend).sum(axis=0)
            out[inside] = np.where(hole, np.inf, val)
        return out, depth, inside


def project_splats(means, covariances, camera: Camera):
    """EWA projection of all splats; returns (xy px, 2x2 cov px, depth, keep)."""
    r = camera.rotation
    view = (np.asarray(means, np.float64) - camera.position) @ r.T
    z = view[:, 2]
    keep = z > camera.near
    f = camera.focal_px
    cx, cy = camera.principal_point
    zs = np.where(keep, z, 1.0)
    xy = np.empty((len(view), 2))
    xy[:, 0] = cx + f * view[:, 0] / zs
    xy[:, 1] = cy - f * view[:, 1] / zs
    # jacobian rows of (px, py) wrt view coords
    j = np.zeros((len(view), 2, 3))
    j[:, 0, 0] = f / zs
    j[:, 0, 2] = -f * view[:, 0] / zs**2
    j[:, 1, 1] = -f / zs
    j[:, 1, 2] = f * view[:, 1] / zs**2
    cov_view = np.einsum("ij,njk,lk->nil", r, np.asarray(covariances, np.float64), r)
    cov2d = np.einsum("nij,njk,nlk->nil", j, cov_view, j)
    cov2d[:, 0, 0] += COV2D_DILATION
    cov2d[:, 1, 1] += COV2D_DILATION
    return xy, cov2d, z, keep


def project_splat(mean, covariance, camera: Camera):
    """Single-splat projection; None when the splat is culled."""
    xy, cov2d, z, keep = project_splats(mean[None], covariance[None], camera)
    if not keep[0]:
        return None
    return xy[0], cov2d[0], float(z[0])


def _splat_colors(means, sh, camera_position, sh_rotations=None):
    dirs = np.asarray(means, np.float64) - camera_position
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    dirs /= norms
    if sh_rotations is not None:
        dirs = np.einsum("nji,nj->ni", sh_rotations, dirs)
    return eval_sh_batch(sh, dirs)


def _blend(xy, cov2d, depths, order, colors, opacities, width, height):
    image = np.zeros((height, width, 3))
    transmittance = np.ones((height, width))
    for i in order:
        a, b, c = cov2d[i, 0, 0], cov2d[i, 0, 1], cov2d[i, 1, 1]
        det = a * c - b * b
        if det <= 0:
            continue
        lam_max = 0.5 * (a + c) + np.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
        radius = 3.5 * np.sqrt(lam_max)
        x0 = max(int(np.floor(xy[i, 0] - radius)), 0)
        x1 = min(int(np.ceil(xy[i, 0] + radius)) + 1, width)
        y0 = max(int(np.floor(xy[i, 1] - radius)), 0)
        y1 = min(int(np.ceil(xy[i, 1] + radius)) + 1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        px = np.arange(x0, x1) - xy[i, 0]
        py = np.arange(y0, y1) - xy[i, 1]
        dx, dy = np.meshgrid(px, py)
        # quadratic form with the inverse 2x2 covariance
        q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
        alpha = opacities[i] * np.exp(-0.5 * q)
        t = transmittance[y0:y1, x0:x1]
        alpha = np.where((alpha >= ALPHA_CUTOFF) & (t > TRANSMITTANCE_CUTOFF),
                         alpha, 0.0)
        if not np.any(alpha > 0):
            continue
        image[y0:y1, x0:x1] += (t * alpha)[:, :, None] * colors[i]
        transmittance[y0:y1, x0:x1] = t * (1.0 - alpha)
    return image, transmittance


def render(means, covariances, sh, opacities, camera: Camera, light: Light = None,
           sh_rotations=None, depth_map: DepthMap = None):
    """Front-to-back alpha blend over a black background; returns float RGB
    in [0, 1]. With a light, splat colors are darkened by the shadow map
    (computed here unless a precomputed one is passed)."""
    xy, cov2d, depths, keep = project_splats(means, covariances, camera)
    colors = np.clip(_splat_colors(means, sh, camera.position, sh_rotations),
                     0.0, 1.0)
    if light is not None:
        if depth_map is None:
            depth_map = shadow_depth(means, covariances, opacities, light)
        colors = colors * shadow_factor(means, depth_map, light)[:, None]
    idx = np.flatnonzero(keep)
    order = idx[np.argsort(depths[idx], kind="stable")]
    image, _ = _blend(xy, cov2d, depths, order, colors, np.asarray(opacities),
                      camera.width, camera.height)
    return np.clip(image, 0.0, 1.0)


def _light_axes(direction):
    fwd = direction
    ref = np.zeros(3)
    ref[np.argmin(np.abs(fwd))] = 1.0
    right = np.cross(ref, fwd)
    right /= np.linalg.norm(right)
    return np.stack([right, np.cross(fwd, right), fwd])


def shadow_depth(means, covariances, opacities, light: Light) -> DepthMap:
    """Expected depth from the light, Eq.1-weighted and normalized:
    D = sum(d_i a_i T_i) / sum(a_i T_i); empty texels +inf."""
    means = np.asarray(means, np.float64)
    axes = _light_axes(light.direction)
    res = light.resolution
    if len(means) == 0:
        return DepthMap(np.full((res, res), np.inf), np.zeros(3), axes, 1.0)
    proj = means @ axes.T
    sigma = np.sqrt(np.maximum(np.linalg.eigvalsh(covariances).max(axis=1), 0.0))
    pad = 3.0 * sigma.max() + 1e-6
    lo = proj[:, :2].min(axis=0) - pad
    hi = proj[:, :2].max(axis=0) + pad
    texel = (hi - lo).max() / res
    center = 0.5 * (lo + hi)
    lo = center - 0.5 * res * texel
    depth0 = proj[:, 2].min() - pad
    origin = lo[0] * axes[0] + lo[1] * axes[1] + depth0 * axes[2]

    rel = means - origin
    uv = np.stack([rel @ axes[0], rel @ axes[1]], axis=1) / texel
    depths = rel @ axes[2]
    cov_light = np.einsum("ij,njk,lk->nil", axes, np.asarray(covariances, np.float64), axes)
    cov2d = cov_light[:, :2, :2] / texel**2
    cov2d[:, 0, 0] += COV2D_DILATION
    cov2d[:, 1, 1] += COV2D_DILATION

    order = np.argsort(depths, kind="stable")
    num = np.zeros((res, res))
    den = np.zeros((res, res))
    transmittance = np.ones((res, res))
    op = np.asarray(opacities)
    for i in order:
        a, b, c = cov2d[i, 0, 0], cov2d[i, 0, 1], cov2d[i, 1, 1]
        det = a * c - b * b
        if det <= 0:
            continue
        lam_max = 0.5 * (a + c) + np.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
        radius = 3.5 * np.sqrt(lam_max)
        x0 = max(int(np.floor(uv[i, 0] - radius)), 0)
        x1 = min(int(np.ceil(uv[i, 0] + radius)) + 1, res)
        y0 = max(int(np.floor(uv[i, 1] - radius)), 0)
        y1 = min(int(np.ceil(uv[i, 1] + radius)) + 1, res)
        if x0 >= x1 or y0 >= y1:
            continue
        # texel centers are at half-integer offsets
        px = np.arange(x0, x1) + 0.5 - uv[i, 0]
        py = np.arange(y0, y1) + 0.5 - uv[i, 1]
        dx, dy = np.meshgrid(px, py)
        q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
        alpha = op[i] * np.exp(-0.5 * q)
        t = transmittance[y0:y1, x0:x1]
        alpha = np.where((alpha >= ALPHA_CUTOFF) & (t > TRANSMITTANCE_CUTOFF),
                         alpha, 0.0)
        if not np.any(alpha > 0):
            continue
        w = t * alpha
        num[y0:y1, x0:x1] += w * depths[i]
        den[y0:y1, x0:x1] += w
        transmittance[y0:y1, x0:x1] = t * (1.0 - alpha)

    values = np.full((res, res), np.inf)
    covered = den > 1e-12
    values[covered] = num[covered] / den[covered]
    return DepthMap(values, origin, axes, texel)


def shadow_factor(points, depth_map: DepthMap, light: Light):
    """1 for lit points, 1-strength for shadowed ones; points outside the
    light frustum stay lit."""
    bias = light.bias if light.bias is not None else 2.0 * depth_map.texel
    sampled, depth, inside = depth_map.sample(points)
    shadowed = inside & (depth > sampled + bias)
    return np.where(shadowed, 1.0 - light.strength, 1.0)


def to_uint8(image) -> np.ndarray:
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(image, path=None) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(to_uint8(image), mode="RGB").save(buf, format="PNG")
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def save_ppm(image, path=None) -> bytes:
    u8 = to_uint8(image)
    header = f"P6\n{u8.shape[1]} {u8.shape[0]}\n255\n".encode()
    data = header + u8.tobytes()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data
