"""Procedural splat objects for demos and tests.

Everything is seeded, so a given call produces bit-identical scenes on
every run; demo scripts and golden-frame tests rely on that.
"""

from __future__ import annotations

import os
import urllib.parse

import numpy as np

from .splats import SH_C0, SH_COEFFS, ObjectInfo, SplatScene, load_splats


class AssetError(ValueError):
    """Missing or malformed splat asset."""


def _finish_scene(rng, means, base_color, spacing, label, name, dynamic,
                  opacity_logit, scale_factor):
    n = len(means)
    quats = rng.standard_normal((n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)

    log_scales = np.full((n, 3), np.log(spacing * scale_factor))
    log_scales += rng.uniform(-0.2, 0.2, size=(n, 3))

    color = np.clip(np.asarray(base_color, dtype=np.float64)
                    + rng.uniform(-0.08, 0.08, size=(n, 3)), 0.02, 0.98)
    sh = np.zeros((n, 3, SH_COEFFS))
    sh[:, :, 0] = (color - 0.5) / SH_C0

    objects = {int(label): ObjectInfo(name=name, dynamic=dynamic)}
    return SplatScene(
        means=means,
        rotations=quats,
        log_scales=log_scales,
        opacity_logits=np.full(n, float(opacity_logit)),
        sh=sh,
        segment_labels=np.full(n, label, dtype=np.int32),
        objects=objects,
    )


def splat_box(count, center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 1.0),
              color=(0.8, 0.35, 0.25), seed=0, label=0, name="box",
              dynamic=True, opacity_logit=3.0, scale_factor=0.7) -> SplatScene:
    """Axis-aligned box filled with `count` splats."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    size = np.asarray(size, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if np.any(size <= 0):
        raise ValueError("box size must be positive")
    means = center + size * rng.uniform(-0.5, 0.5, size=(count, 3))
    spacing = float((np.prod(size) / count) ** (1.0 / 3.0))
    return _finish_scene(rng, means, color, spacing, label, name, dynamic,
                         opacity_logit, scale_factor)


def splat_ball(count, center=(0.0, 0.0, 0.0), radius=0.5,
               color=(0.3, 0.5, 0.85), seed=0, label=0, name="ball",
               dynamic=True, opacity_logit=3.0, scale_factor=0.7) -> SplatScene:
    """Solid ball: uniform density via the r ~ u^(1/3) radial law."""
    if count < 1:
        raise ValueError("count must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / 3.0)
    means = np.asarray(center, dtype=np.float64) + dirs * r
    vol = 4.0 / 3.0 * np.pi * radius ** 3
    spacing = float((vol / count) ** (1.0 / 3.0))
    return _finish_scene(rng, means, color, spacing, label, name, dynamic,
                         opacity_logit, scale_factor)


def splat_ground(count=2000, center=(0.0, 0.0, 0.0), extent=(4.0, 4.0),
                 thickness=0.05, color=(0.55, 0.55, 0.5), seed=1, label=0,
                 name="ground", opacity_logit=4.0) -> SplatScene:
    """Thin static slab in the xz plane, top surface at center[1]."""
    cx, cy, cz = center
    size = (extent[0], thickness, extent[1])
    return splat_box(count, center=(cx, cy - 0.5 * thickness, cz), size=size,
                     color=color, seed=seed, label=label, name=name,
                     dynamic=False, opacity_logit=opacity_logit,
                     scale_factor=1.4)


def _vec(text, n):
    parts = text.split(",")
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


_BUILTIN = {
    "box": (splat_box, {"count": int, "seed": int,
                        "center": lambda t: _vec(t, 3),
                        "size": lambda t: _vec(t, 3),
                        "color": lambda t: _vec(t, 3),
                        "opacity_logit": float, "scale_factor": float}),
    "ball": (splat_ball, {"count": int, "seed": int,
                          "center": lambda t: _vec(t, 3),
                          "radius": float,
                          "color": lambda t: _vec(t, 3),
                          "opacity_logit": float, "scale_factor": float}),
    "ground": (splat_ground, {"count": int, "seed": int,
                              "center": lambda t: _vec(t, 3),
                              "extent": lambda t: _vec(t, 2),
                              "thickness": float,
                              "color": lambda t: _vec(t, 3),
                              "opacity_logit": float}),
}


def _parse_builtin(uri: str):
    """'builtin:box?count=500&size=1,1,2' -> (generator, kwargs)."""
    parts = urllib.parse.urlsplit(uri)
    if parts.scheme != "builtin":
        raise AssetError(f"not a builtin asset uri: {uri}")
    try:
        make, converters = _BUILTIN[parts.path]
    except KeyError:
        raise AssetError(f"unknown builtin asset kind {parts.path!r}; "
                         f"one of {sorted(_BUILTIN)}") from None
    kwargs = {}
    for key, values in urllib.parse.parse_qs(parts.query,
                                             strict_parsing=bool(parts.query)).items():
        if key not in converters:
            raise AssetError(f"builtin asset {parts.path!r}: unknown "
                             f"parameter {key!r}")
        try:
            kwargs[key] = converters[key](values[-1])
        except ValueError as exc:
            raise AssetError(f"builtin asset parameter {key!r}: {exc}") from None
    return make, kwargs


def asset_available(path: str, base_dir: str = ".") -> bool:
    if path.startswith("builtin:"):
        try:
            _parse_builtin(path)
            return True
        except AssetError:
            return False
    return os.path.isfile(os.path.join(base_dir, path))


def resolve_asset(path: str, base_dir: str = ".", label: int = 0,
                  name: str | None = None, dynamic: bool = True) -> SplatScene:
    """Load one object's splats from a PLY path or a builtin: uri.

    The result carries a single segment label (the caller's object index)
    regardless of any labels stored in the file.
    """
    if path.startswith("builtin:"):
        make, kwargs = _parse_builtin(path)
        try:
            scene = make(**kwargs)
        except ValueError as exc:
            raise AssetError(f"builtin asset {path!r}: {exc}") from None
    else:
        full = os.path.join(base_dir, path)
        try:
            with open(full, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise AssetError(f"cannot read splat asset {full}: {exc}") from None
        try:
            scene = load_splats(data)
        except ValueError as exc:
            raise AssetError(f"{full}: {exc}") from None
    if name is None:
        name = os.path.splitext(os.path.basename(path.split("?")[0]))[0]
    return SplatScene(
        means=scene.means, rotations=scene.rotations,
        log_scales=scene.log_scales, opacity_logits=scene.opacity_logits,
        sh=scene.sh,
        segment_labels=np.full(len(scene), label, dtype=np.int32),
        objects={int(label): ObjectInfo(name=name, dynamic=dynamic)},
    )


def concat(scenes) -> SplatScene:
    """Merge scenes; segment labels must not collide across inputs."""
    scenes = list(scenes)
    if not scenes:
        raise ValueError("nothing to concatenate")
    objects = {}
    for scene in scenes:
        for label, info in scene.objects.items():
            if label in objects and objects[label] != info:
                raise ValueError(f"segment label {label} used by both "
                                 f"'{objects[label].name}' and '{info.name}'")
            objects[label] = info
    return SplatScene(
        means=np.concatenate([s.means for s in scenes]),
        rotations=np.concatenate([s.rotations for s in scenes]),
        log_scales=np.concatenate([s.log_scales for s in scenes]),
        opacity_logits=np.concatenate([s.opacity_logits for s in scenes]),
        sh=np.concatenate([s.sh for s in scenes]),
        segment_labels=np.concatenate([s.segment_labels for s in scenes]),
        objects=objects,
    )
