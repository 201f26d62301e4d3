import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from splatdyn.embedding import (
    T_REF,
    DegenerateTetError,
    EmbeddingError,
    EmbeddingTable,
    TetLocator,
    build_embedding,
    build_local_tet,
    deform_splats,
    deformation_gradient,
    load_embedding,
    local_tet_vertices,
    naive_deformation_gradients,
    save_embedding,
)
from splatdyn.meshgen import TetMesh, build_cage
from splatdyn.splats import GaussianSplat, SplatScene, covariances, quat_to_matrix
from conftest import random_scene

REST_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def compact_scene(n, rng, spread=1.0, log_lo=-4.0, log_hi=-2.5):
    """Scene whose local tets stay small relative to the cage cells."""
    s = random_scene(n, rng, spread=spread)
    s.log_scales[:] = rng.uniform(log_lo, log_hi, size=(n, 3)).astype(np.float32)
    return SplatScene(s.means, s.rotations, s.log_scales, s.opacity_logits,
                      s.sh, s.segment_labels, s.objects)


@pytest.fixture
def scene_and_cage(rng):
    scene = compact_scene(120, rng)
    cage, _, _ = build_cage(scene.means, cell_size=0.5)
    return scene, cage


class TestDeformationGradient:
    def test_identity(self):
        np.testing.assert_allclose(
            deformation_gradient(REST_TET, REST_TET), np.eye(3), atol=1e-15)

    def test_uniform_scale(self):
        cur = REST_TET[0] + 2.0 * (REST_TET - REST_TET[0])
        np.testing.assert_allclose(
            deformation_gradient(REST_TET, cur), 2 * np.eye(3), atol=1e-12)

    def test_recovers_affine_map(self, rng):
        for _ in range(30):
            a = rng.normal(size=(3, 3))
            while abs(np.linalg.det(a)) < 0.1:
                a = rng.normal(size=(3, 3))
            b = rng.normal(size=3)
            rest = rng.normal(size=(4, 3))
            while abs(np.linalg.det((rest[1:] - rest[0]).T)) < 1e-3:
                rest = rng.normal(size=(4, 3))
            cur = rest @ a.T + b
            np.testing.assert_allclose(
                deformation_gradient(rest, cur), a, atol=1e-9)

    def test_degenerate_rest_rejected(self):
        flat = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        with pytest.raises(DegenerateTetError):
            deformation_gradient(flat, flat)


class TestLocalTet:
    def test_reference_at_unit_splat(self):
        s = GaussianSplat(np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3),
                          0.0, np.zeros((3, 16)))
        tet = build_local_tet(s, k=1.0)
        np.testing.assert_allclose(tet.rest_vertices, T_REF, atol=1e-12)
        # insphere radius: distance from centroid to each face plane
        v = tet.rest_vertices
        c = v.mean(axis=0)
        for f in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
            p0, p1, p2 = v[list(f)]
            nrm = np.cross(p1 - p0, p2 - p0)
            nrm /= np.linalg.norm(nrm)
            assert abs(abs(nrm @ (c - p0)) - 1.0) < 1e-12

    def test_mean_barycentric_is_quarter(self, rng):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        s = GaussianSplat(rng.normal(size=3), q, rng.uniform(-2, 0, 3), 0.0,
                          np.zeros((3, 16)))
        tet = build_local_tet(s)
        np.testing.assert_array_equal(tet.rest_barycentric_of_mean,
                                      [0.25, 0.25, 0.25, 0.25])
        np.testing.assert_allclose(tet.rest_vertices.mean(axis=0), s.mean,
                                   atol=1e-9)

    def test_ksigma_ellipsoid_contained(self, rng):
        for k in (1.0, 2.0, 3.0):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            mean = rng.normal(size=3)
            ls = rng.uniform(-2, 0.5, 3)
            s = GaussianSplat(mean, q, ls, 0.0, np.zeros((3, 16)))
            tet = build_local_tet(s, k=k)
            u = rng.normal(size=(200, 3))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            r = quat_to_matrix(q / np.linalg.norm(q))
            pts = mean + k * (u * np.exp(ls)) @ r.T
            basis = (tet.rest_vertices[1:] - tet.rest_vertices[0]).T
            bary = np.linalg.solve(basis, (pts - tet.rest_vertices[0]).T).T
            full = np.concatenate([1 - bary.sum(1, keepdims=True), bary], axis=1)
            assert full.min() >= -1e-9

    def test_rejects_nonpositive_k(self):
        s = GaussianSplat(np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3),
                          0.0, np.zeros((3, 16)))
        with pytest.raises(ValueError):
            build_local_tet(s, k=0.0)


class TestBuildEmbedding:
    def test_single_big_tet(self, rng):
        scene = compact_scene(20, rng, spread=0.3)
        cage = TetMesh(40.0 * REST_TET - 5.0, [[0, 1, 2, 3]])
        table = build_embedding(scene, cage)
        assert np.all(table.tet_index == 0)
        np.testing.assert_allclose(table.weights.sum(axis=2), 1.0, atol=1e-9)
        assert not table.flagged.any()

    def test_face_tie_breaks_to_lowest_index(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
                          [1, 1, 1]])
        cage = TetMesh(verts, [[0, 1, 2, 3], [1, 2, 3, 4]])
        loc = TetLocator(cage)
        on_face = np.array([[1 / 3, 1 / 3, 1 / 3]])  # centroid of shared face
        assert loc.locate(on_face)[0] == 0

    def test_reconstruction_residual(self, scene_and_cage):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        rebuilt = np.einsum("nvc,nvci->nvi", table.weights,
                            cage.vertices[cage.tets[table.tet_index]])
        assert np.max(np.abs(rebuilt - table.local_rest)) < 1e-6

    def test_mean_outside_cage_raises(self, rng):
        scene = compact_scene(5, rng, spread=0.2)
        far = scene.means.copy()
        far[3] = (50.0, 50.0, 50.0)
        bad = SplatScene(far, scene.rotations, scene.log_scales,
                         scene.opacity_logits, scene.sh)
        cage = TetMesh(REST_TET * 4 - 1.0, [[0, 1, 2, 3]])
        with pytest.raises(EmbeddingError) as e:
            build_embedding(bad, cage)
        assert "3" in str(e.value)

    def test_out_of_cage_vertex_flagged_but_affine(self, rng):
        scene = compact_scene(30, rng, spread=0.3, log_lo=-1.0, log_hi=-0.5)
        cage = TetMesh(2.0 * REST_TET - 0.4, [[0, 1, 2, 3]])
        means = 0.05 * rng.normal(size=(30, 3)).astype(np.float32) + 0.1
        scene = SplatScene(means, scene.rotations, scene.log_scales,
                           scene.opacity_logits, scene.sh)
        table = build_embedding(scene, cage, k=3.0)
        assert table.flagged.any()
        rebuilt = np.einsum("nvc,nvci->nvi", table.weights,
                            cage.vertices[cage.tets[table.tet_index]])
        assert np.max(np.abs(rebuilt - table.local_rest)) < 1e-6

    def test_deterministic(self, scene_and_cage):
        scene, cage = scene_and_cage
        a = build_embedding(scene, cage)
        b = build_embedding(scene, cage)
        for x, y in ((a.local_rest, b.local_rest), (a.tet_index, b.tet_index),
                     (a.weights, b.weights), (a.sigma0, b.sigma0)):
            assert x.tobytes() == y.tobytes()


class TestDeformSplats:
    def test_rest_is_identity(self, scene_and_cage):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        out = deform_splats(table, cage, cage.vertices)
        np.testing.assert_allclose(out.means, scene.means.astype(np.float64),
                                   atol=1e-9)
        np.testing.assert_allclose(out.covariances, table.sigma0, atol=1e-9)
        np.testing.assert_allclose(
            out.deformation_gradients,
            np.broadcast_to(np.eye(3), (len(scene), 3, 3)), atol=1e-7)
        assert out.degenerate_count == 0

    def test_rigid_rotation(self, scene_and_cage, rng):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        q = Rotation.from_rotvec([0.3, -0.7, 0.5])
        moved = q.apply(cage.vertices)
        out = deform_splats(table, cage, moved)
        np.testing.assert_allclose(out.means, q.apply(scene.means), atol=1e-6)
        ev0 = np.sort(np.linalg.eigvalsh(table.sigma0), axis=1)
        ev1 = np.sort(np.linalg.eigvalsh(out.covariances), axis=1)
        np.testing.assert_allclose(ev1, ev0, rtol=1e-6, atol=1e-12)
        # SH rotation should match the applied rigid rotation
        np.testing.assert_allclose(out.sh_rotations,
                                   np.broadcast_to(q.as_matrix(), (len(scene), 3, 3)),
                                   atol=1e-6)

    def test_uniform_scale(self, scene_and_cage):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        out = deform_splats(table, cage, 2.0 * cage.vertices)
        np.testing.assert_allclose(out.means, 2.0 * scene.means, atol=1e-6)
        np.testing.assert_allclose(out.covariances, 4.0 * table.sigma0,
                                   rtol=1e-6, atol=1e-12)

    def test_equivariance(self, scene_and_cage, rng):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        bent = cage.vertices + 0.1 * np.sin(cage.vertices[:, [2, 0, 1]] * 3)
        q = Rotation.from_rotvec([1.0, 0.2, -0.4])
        t = np.array([5.0, -2.0, 1.0])
        a = deform_splats(table, cage, bent)
        b = deform_splats(table, cage, q.apply(bent) + t)
        np.testing.assert_allclose(b.means, q.apply(a.means) + t, atol=1e-8)
        rm = q.as_matrix()
        np.testing.assert_allclose(b.covariances,
                                   rm @ a.covariances @ rm.T, atol=1e-9)

    def test_containment_under_deformation(self, scene_and_cage, rng):
        scene, cage = scene_and_cage
        k = 2.0
        table = build_embedding(scene, cage, k=k)
        bent = cage.vertices + 0.15 * np.sin(cage.vertices[:, [1, 2, 0]] * 2.0)
        out = deform_splats(table, cage, bent)
        good = ~out.degenerate
        u = rng.normal(size=(200, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = quat_to_matrix(scene.rotations.astype(np.float64))
        sigma = np.exp(scene.log_scales.astype(np.float64))
        worst = 0.0
        for i in np.flatnonzero(good)[:40]:
            rest_pts = scene.means[i] + k * (u * sigma[i]) @ r[i].T
            f = out.deformation_gradients[i]
            pts = out.means[i] + (rest_pts - scene.means[i].astype(np.float64)) @ f.T
            v = out.local_vertices[i]
            basis = (v[1:] - v[0]).T
            bary = np.linalg.solve(basis, (pts - v[0]).T).T
            full = np.concatenate([1 - bary.sum(1, keepdims=True), bary], axis=1)
            worst = min(worst, full.min())
        assert worst >= -1e-6

    def test_inverted_tet_holds_covariance(self, rng):
        scene = compact_scene(3, rng, spread=0.05)
        cage = TetMesh(4.0 * REST_TET - 1.0, [[0, 1, 2, 3]])
        table = build_embedding(scene, cage)
        rest = deform_splats(table, cage, cage.vertices)
        mirrored = cage.vertices * np.array([-1.0, 1.0, 1.0])
        out = deform_splats(table, cage, mirrored, previous=rest)
        assert out.degenerate.all() and out.degenerate_count == 3
        np.testing.assert_array_equal(out.covariances, rest.covariances)
        np.testing.assert_array_equal(out.sh_rotations, rest.sh_rotations)

    def test_vertex_count_mismatch_rejected(self, scene_and_cage):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        with pytest.raises(ValueError):
            deform_splats(table, cage, cage.vertices[:-1])


def twist_bar(n, sigma, cell, rng, height, profile):
    """Bar of splats along z plus its cage, twisted 90 degrees about z."""
    means = np.stack([rng.uniform(-0.1, 0.1, n), rng.uniform(-0.1, 0.1, n),
                      rng.uniform(0.0, height, n)], axis=1).astype(np.float32)
    base = random_scene(n, rng)
    scene = SplatScene(means, base.rotations,
                       np.full((n, 3), np.log(sigma), np.float32),
                       base.opacity_logits, base.sh)
    cage, _, _ = build_cage(means, cell_size=cell)
    z = cage.vertices[:, 2]
    if profile == "linear":
        ang = 0.5 * np.pi * (z - z.min()) / (z.max() - z.min())
    else:  # all the twist concentrated at the mid plane
        ang = np.where(z > height / 2 + 0.01, 0.5 * np.pi, 0.0)
    c, s = np.cos(ang), np.sin(ang)
    twisted = cage.vertices.copy()
    twisted[:, 0] = c * cage.vertices[:, 0] - s * cage.vertices[:, 1]
    twisted[:, 1] = s * cage.vertices[:, 0] + c * cage.vertices[:, 1]
    return scene, cage, twisted


def spike_ratio(scene, cage, twisted, k=2.0):
    """(fraction of splats where two-level <= naive, two max, naive max)."""
    table = build_embedding(scene, cage, k=k)
    two = deform_splats(table, cage, twisted)
    s_two = np.linalg.svd(two.deformation_gradients, compute_uv=False)[:, 0]
    f_naive = naive_deformation_gradients(scene, cage, twisted)
    s_naive = np.linalg.svd(f_naive, compute_uv=False)[:, 0]
    return np.mean(s_two <= s_naive + 1e-9), s_two.max(), s_naive.max()


class TestSpikeSuppression:
    def test_linear_twist_no_spikier_than_naive(self, rng):
        scene, cage, twisted = twist_bar(3000, 3.4e-4, 0.25, rng,
                                         height=0.6, profile="linear")
        frac, _, _ = spike_ratio(scene, cage, twisted)
        assert frac >= 0.95

    def test_concentrated_twist_clips_extremes(self, rng):
        scene, cage, twisted = twist_bar(3000, 2.5e-3, 0.05, rng,
                                         height=1.2, profile="step")
        frac, max_two, max_naive = spike_ratio(scene, cage, twisted)
        assert frac >= 0.95
        assert max_two < max_naive


class TestBlobFormat:
    def test_round_trip(self, scene_and_cage):
        scene, cage = scene_and_cage
        table = build_embedding(scene, cage)
        blob = save_embedding(table)
        again = load_embedding(blob)
        assert len(again) == len(table)
        assert again.n_cage_vertices == table.n_cage_vertices
        np.testing.assert_array_equal(again.tet_index, table.tet_index)
        np.testing.assert_allclose(again.local_rest, table.local_rest, atol=1e-5)
        np.testing.assert_allclose(again.weights, table.weights, atol=1e-5)
        np.testing.assert_allclose(again.sigma0, table.sigma0, atol=1e-6)
        assert save_embedding(load_embedding(blob))[: 12] == blob[:12]

    def test_magic_checked(self):
        with pytest.raises(ValueError):
            load_embedding(b"NOPE" + b"\0" * 100)

    def test_truncation_detected(self, scene_and_cage):
        scene, cage = scene_and_cage
        blob = save_embedding(build_embedding(scene, cage))
        with pytest.raises(ValueError):
            load_embedding(blob[:-5])
