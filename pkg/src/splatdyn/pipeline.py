"""Scene assembly and the headless simulation loop.

Turns a parsed interaction script into a merged splat scene, a merged
simulation cage with per-object materials, and an embedding table, then
drives substeps, timeline events, deformation, and frame output.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .assets import AssetError, asset_available, concat, resolve_asset
from .embedding import EmbeddingTable, build_embedding, deform_splats, save_embedding
from .meshgen import TetMesh, build_cage, fill_interior, voxelize
from .render import Camera, Light, render, save_png, shadow_depth
from .script import (DragEvent, GrabEvent, InteractionScript, KinematicEvent,
                     PinEvent, ReleaseEvent, ScriptError, SetParamEvent,
                     validate)
from .splats import (SplatScene, matrix_to_quat, opacity, quat_to_matrix,
                     save_splats)
from .xpbd import (CollisionEnv, SimulationError, Solver, StaticField,
                   assemble_masses, lame_parameters)

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)
STATIC_CAGE_CELLS = 8  # static cages tile the longest extent into this many cells


class PipelineError(RuntimeError):
    """Scene assembly or frame-loop failure outside script/asset handling."""


def _pose_scene(scene: SplatScene, translation, quaternion):
    """Rigid transform of a whole object; returns (scene, (3,3) rotation)."""
    rot = quat_to_matrix(np.asarray(quaternion, np.float64))
    if (np.allclose(quaternion, IDENTITY_QUAT, atol=0.0)
            and not np.any(np.asarray(translation))):
        return scene, np.eye(3)
    means = scene.means.astype(np.float64) @ rot.T + np.asarray(translation)
    quats = matrix_to_quat(rot @ quat_to_matrix(scene.rotations))
    return SplatScene(
        means=means, rotations=quats, log_scales=scene.log_scales,
        opacity_logits=scene.opacity_logits, sh=scene.sh,
        segment_labels=scene.segment_labels, objects=scene.objects,
    ), rot


def _merge_tables(tables, tet_offsets, n_cage_vertices) -> EmbeddingTable:
    return EmbeddingTable(
        local_rest=np.concatenate([t.local_rest for t in tables]),
        mean_weights=np.concatenate([t.mean_weights for t in tables]),
        tet_index=np.concatenate([t.tet_index + off
                                  for t, off in zip(tables, tet_offsets)]),
        weights=np.concatenate([t.weights for t in tables]),
        sigma0=np.concatenate([t.sigma0 for t in tables]),
        n_cage_vertices=n_cage_vertices,
        flagged=np.concatenate([t.flagged for t in tables]),
    )


@dataclass
class SceneBundle:
    """Everything load_scene produces; the simulation loop's working set."""

    script: InteractionScript
    scene: SplatScene             # merged, posed, labels = object index
    cage: TetMesh                 # merged cage, static objects included
    vertex_object: np.ndarray     # (V,) object index per cage vertex
    tet_object: np.ndarray        # (T,) object index per tet
    table: EmbeddingTable
    pose_rotations: np.ndarray    # (N,3,3) per-splat rigid pose rotation
    solver: Solver
    state: object                 # xpbd.SimState
    camera: Camera
    light: Light | None
    label_of: dict                # object name -> label
    materials: dict               # label -> dict(youngs, poisson, density, damping)
    immovable: np.ndarray         # (V,) bool: static object or pinned by event

    def scene_init_payload(self):
        """(splat blob, tetmesh blob, embedding blob, object table)."""
        objects = tuple((self.scene.objects[i].name, self.scene.objects[i].dynamic)
                        for i in sorted(self.scene.objects))
        return (save_splats(self.scene), self.cage.save_text().encode(),
                save_embedding(self.table), objects)


def load_scene(script: InteractionScript, base_dir: str = ".") -> SceneBundle:
    if not script.objects:
        raise ScriptError("script declares no objects")
    diags = validate(script, resolver=lambda p: True)
    if diags:
        raise ScriptError("", diagnostics=diags)
    for obj in script.objects:
        if not asset_available(obj.splats, base_dir):
            raise AssetError(f"object {obj.name!r}: asset not found: {obj.splats}")

    sim = script.sim
    scenes, pose_rots = [], []
    cages, grids, cells = [], [], []
    for label, obj in enumerate(script.objects):
        scene = resolve_asset(obj.splats, base_dir, label=label, name=obj.name,
                              dynamic=obj.dynamic)
        scene, rot = _pose_scene(scene, obj.pose_t, obj.pose_r)
        scenes.append(scene)
        pose_rots.append(np.broadcast_to(rot, (len(scene), 3, 3)))
        pts = scene.means.astype(np.float64)
        if obj.dynamic:
            cage, grid, cell = build_cage(pts, vertex_band=sim.cell_band)
        else:
            extent = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
            cell = max(extent, 1e-6) / STATIC_CAGE_CELLS
            cage, grid, cell = build_cage(pts, cell_size=cell)
        cages.append(cage)
        grids.append(grid)
        cells.append(cell)

    merged = concat(scenes)
    pose_rotations = np.concatenate(pose_rots)

    counts = [len(c.vertices) for c in cages]
    v_off = np.concatenate([[0], np.cumsum(counts)])[:-1]
    cage = TetMesh(
        vertices=np.concatenate([c.vertices for c in cages]),
        tets=np.concatenate([c.tets + off for c, off in zip(cages, v_off)]),
    )
    vertex_object = np.concatenate(
        [np.full(len(c.vertices), i, np.int32) for i, c in enumerate(cages)])
    tet_object = np.concatenate(
        [np.full(len(c.tets), i, np.int32) for i, c in enumerate(cages)])

    tables = [build_embedding(s, c, k=sim.k_sigma)
              for s, c in zip(scenes, cages)]
    t_off = np.concatenate([[0], np.cumsum([len(c.tets) for c in cages])])[:-1]
    table = _merge_tables(tables, t_off, len(cage.vertices))

    static_labels = [i for i, o in enumerate(script.objects) if not o.dynamic]
    static_field = None
    if static_labels:
        pts = np.concatenate([scenes[i].means.astype(np.float64)
                              for i in static_labels])
        static_field = StaticField.from_grid(
            fill_interior(voxelize(pts, min(cells[i] for i in static_labels))))

    env = CollisionEnv(
        ground_height=sim.ground, friction=sim.friction,
        static_field=static_field, repulsion_radius=sim.repulsion,
        vertex_object=vertex_object if sim.repulsion > 0 else None)

    materials = {}
    mu_t = np.empty(len(cage.tets))
    lam_t = np.empty(len(cage.tets))
    rho_t = np.empty(len(cage.tets))
    damping_v = np.zeros(len(cage.vertices))
    for label, obj in enumerate(script.objects):
        materials[label] = {"youngs": obj.youngs, "poisson": obj.poisson,
                            "density": obj.density, "damping": obj.damping}
        mu, lam = lame_parameters(obj.youngs, obj.poisson)
        mu_t[tet_object == label] = mu
        lam_t[tet_object == label] = lam
        rho_t[tet_object == label] = obj.density
        damping_v[vertex_object == label] = obj.damping

    masses = assemble_masses(cage, rho_t)
    solver = Solver(cage, mu_t, lam_t, masses, damping=damping_v, env=env,
                    gravity=sim.gravity)
    immovable = np.isin(vertex_object, static_labels)
    state = solver.make_state(pinned=np.flatnonzero(immovable))

    cam = script.camera
    camera = Camera(position=cam.position, look_at=cam.lookat, up=cam.up,
                    fov_y=float(np.deg2rad(cam.fov_deg)), width=cam.width,
                    height=cam.height, near=cam.near, far=cam.far)
    light = None
    if script.light is not None:
        light = Light(direction=script.light.direction,
                      resolution=script.light.resolution,
                      strength=script.light.strength,
                      bias=script.light.bias)

    return SceneBundle(
        script=script, scene=merged, cage=cage, vertex_object=vertex_object,
        tet_object=tet_object, table=table, pose_rotations=pose_rotations,
        solver=solver, state=state, camera=camera, light=light,
        label_of={o.name: i for i, o in enumerate(script.objects)},
        materials=materials, immovable=immovable)


@dataclass
class _Kinematic:
    vertex_ids: np.ndarray
    offsets: np.ndarray
    times: np.ndarray    # (k,)
    points: np.ndarray   # (k,3)

    def target(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.points[:, i])
                         for i in range(3)])


class Simulation:
    """Substep driver: timeline events, kinematic boundaries, deformation."""

    def __init__(self, bundle: SceneBundle):
        self.b = bundle
        sim = bundle.script.sim
        self.dt = sim.dt
        self.iterations = sim.iterations
        self.frame_dt = 1.0 / sim.fps
        self.events = list(bundle.script.timeline)
        self.event_idx = 0
        self.grab_handle = None
        self.kinematics = []
        self.previous_deformed = None
        self.opacities = opacity(bundle.scene.opacity_logits)

    # -- events -------------------------------------------------------------

    def _object_mask(self, label):
        return self.b.vertex_object == label

    def _capture(self, label, point, radius):
        pos = self.b.state.positions
        d = np.linalg.norm(pos - np.asarray(point, np.float64), axis=1)
        return np.flatnonzero((d <= radius) & self._object_mask(label))

    def apply_event(self, ev):
        b = self.b
        if isinstance(ev, GrabEvent):
            if self.grab_handle is not None:
                b.solver.release(b.state, self.grab_handle)
            label = b.label_of[ev.obj]
            self.grab_handle = b.solver.attach(
                b.state, ev.point, ev.radius, mask=self._object_mask(label))
        elif isinstance(ev, DragEvent):
            if self.grab_handle is not None:
                b.solver.drag(b.state, self.grab_handle, ev.target)
        elif isinstance(ev, ReleaseEvent):
            if self.grab_handle is not None:
                b.solver.release(b.state, self.grab_handle)
                self.grab_handle = None
        elif isinstance(ev, SetParamEvent):
            self.set_param(b.label_of[ev.obj], ev.param, ev.value)
        elif isinstance(ev, PinEvent):
            ids = self._capture(b.label_of[ev.obj], ev.point, ev.radius)
            b.state.inv_mass[ids] = 0.0
            b.immovable[ids] = True
        elif isinstance(ev, KinematicEvent):
            ids = self._capture(b.label_of[ev.obj], ev.point, ev.radius)
            if len(ids) == 0:
                return
            b.state.inv_mass[ids] = 0.0
            b.immovable[ids] = True
            samples = np.asarray([list(s) for s in ev.samples], np.float64)
            self.kinematics.append(_Kinematic(
                vertex_ids=ids,
                offsets=b.state.positions[ids]
                - np.asarray(ev.point, np.float64),
                times=samples[:, 0] + ev.time,
                points=samples[:, 1:4]))
        else:
            raise PipelineError(f"unhandled event {type(ev).__name__}")

    def set_param(self, label: int, param: str, value: float):
        b = self.b
        if label not in b.materials:
            raise PipelineError(f"set_param targets unknown object {label}")
        mat = b.materials[label]
        value = float(value)
        if param not in mat:
            raise PipelineError(f"unknown material field {param!r}")
        mat[param] = value
        tmask = b.tet_object == label
        if param in ("youngs", "poisson"):
            if not (mat["youngs"] > 0 and 0 <= mat["poisson"] < 0.5):
                raise PipelineError(
                    f"object {label}: youngs {mat['youngs']}, poisson "
                    f"{mat['poisson']} out of range")
            mu, lam = lame_parameters(mat["youngs"], mat["poisson"])
            vol = b.cage.rest_volume[tmask]
            b.solver.alpha_d[tmask] = (1.0 / np.maximum(mu * vol, 1e-300)
                                       if mu > 0 else -1.0)
            b.solver.alpha_h[tmask] = (1.0 / np.maximum(lam * vol, 1e-300)
                                       if lam > 0 else -1.0)
        elif param == "density":
            if value <= 0:
                raise PipelineError(f"object {label}: density must be positive")
            rho_t = np.empty(len(b.cage.tets))
            for lbl, m in b.materials.items():
                rho_t[b.tet_object == lbl] = m["density"]
            masses = assemble_masses(b.cage, rho_t)
            b.solver.masses = masses
            inv = np.zeros_like(masses)
            free = (masses > 0) & ~b.immovable
            inv[free] = 1.0 / masses[free]
            b.state.inv_mass = inv
        elif param == "damping":
            if value < 0:
                raise PipelineError(f"object {label}: damping must be non-negative")
            damping = np.array(np.broadcast_to(b.solver.damping,
                                               len(b.cage.vertices)))
            damping[b.vertex_object == label] = value
            b.solver.damping = damping

    # -- stepping -----------------------------------------------------------

    def substep(self):
        b = self.b
        t = b.state.time
        while (self.event_idx < len(self.events)
               and self.events[self.event_idx].time <= t + 1e-12):
            self.apply_event(self.events[self.event_idx])
            self.event_idx += 1
        for kin in self.kinematics:
            target = kin.target(t + self.dt)
            b.state.positions[kin.vertex_ids] = target + kin.offsets
        b.solver.substep(b.state, self.dt, self.iterations)

    def step_frame(self) -> int:
        n = max(1, int(np.ceil(self.frame_dt / self.dt - 1e-9)))
        for _ in range(n):
            self.substep()
        return n

    def deformed(self):
        out = deform_splats(self.b.table, self.b.cage, self.b.state.positions,
                            previous=self.previous_deformed)
        self.previous_deformed = out
        return out

    def render_frame(self, deformed) -> np.ndarray:
        b = self.b
        sh_rot = deformed.sh_rotations @ b.pose_rotations
        depth_map = None
        if b.light is not None:
            depth_map = shadow_depth(deformed.means, deformed.covariances,
                                     self.opacities, b.light)
        return render(deformed.means, deformed.covariances, b.scene.sh,
                      self.opacities, b.camera, light=b.light,
                      sh_rotations=sh_rot, depth_map=depth_map)


def deformed_scene(base: SplatScene, deformed) -> SplatScene:
    """Deformed splats as a storable scene (covariance -> quat + scales)."""
    vals, vecs = np.linalg.eigh(deformed.covariances)
    vals = np.maximum(vals, 1e-24)
    neg = np.linalg.det(vecs) < 0
    vecs[neg, :, 0] *= -1.0
    return SplatScene(
        means=deformed.means,
        rotations=matrix_to_quat(vecs),
        log_scales=0.5 * np.log(vals),
        opacity_logits=base.opacity_logits,
        sh=base.sh,
        segment_labels=base.segment_labels,
        objects=base.objects,
    )


def object_centroids(scene: SplatScene, means) -> dict:
    """Mean deformed splat position per object label."""
    out = {}
    for label in sorted(scene.objects):
        mask = scene.segment_labels == label
        out[label] = (np.asarray(means)[mask].mean(axis=0) if mask.any()
                      else np.full(3, np.nan))
    return out


def run_headless(script: InteractionScript, out_dir: str, base_dir: str = ".",
                 write_ply: bool = False, fps: float | None = None,
                 progress=None) -> dict:
    """Execute a script offline; returns a small report dict.

    Writes frame_#####.png, frames.csv (deterministic per-frame object
    centroids), timing.csv (wall-clock stage times, excluded from any
    determinism contract), and optionally frame_#####.ply.
    """
    if fps is not None:
        script = replace(script, sim=replace(script.sim, fps=float(fps)))
    bundle = load_scene(script, base_dir)
    sim = Simulation(bundle)
    os.makedirs(out_dir, exist_ok=True)

    n_frames = max(1, int(round(script.sim.duration * script.sim.fps)))
    names = [bundle.scene.objects[i].name for i in sorted(bundle.scene.objects)]
    frame_rows = ["frame,time," + ",".join(
        f"{n}_{axis}" for n in names for axis in "xyz")]
    timing_rows = ["frame,physics_ms,deform_ms,render_ms,io_ms"]

    for i in range(n_frames):
        t0 = time.perf_counter()
        sim.step_frame()
        t1 = time.perf_counter()
        deformed = sim.deformed()
        t2 = time.perf_counter()
        image = sim.render_frame(deformed)
        t3 = time.perf_counter()

        save_png(image, os.path.join(out_dir, f"frame_{i:05d}.png"))
        if write_ply:
            scene_i = deformed_scene(bundle.scene, deformed)
            with open(os.path.join(out_dir, f"frame_{i:05d}.ply"), "wb") as fh:
                fh.write(save_splats(scene_i))
        t4 = time.perf_counter()

        centroids = object_centroids(bundle.scene, deformed.means)
        cells = [str(i), repr(float(bundle.state.time))]
        for label in sorted(centroids):
            cells.extend(repr(float(v)) for v in centroids[label])
        frame_rows.append(",".join(cells))
        timing_rows.append(",".join([str(i)] + [
            f"{1e3 * d:.3f}" for d in (t1 - t0, t2 - t1, t3 - t2, t4 - t3)]))
        if progress is not None:
            progress(i, n_frames)

    with open(os.path.join(out_dir, "frames.csv"), "w") as fh:
        fh.write("\n".join(frame_rows) + "\n")
    with open(os.path.join(out_dir, "timing.csv"), "w") as fh:
        fh.write("\n".join(timing_rows) + "\n")
    return {"frames": n_frames, "out_dir": out_dir,
            "cage_vertices": len(bundle.cage.vertices),
            "splats": len(bundle.scene)}
