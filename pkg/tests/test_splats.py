import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from splatdyn.splats import (
    SH_COEFFS,
    GaussianSplat,
    ObjectInfo,
    PlyParseError,
    PlySchemaError,
    SplatScene,
    covariance,
    covariances,
    eval_sh,
    eval_sh_batch,
    load_splats,
    matrix_to_quat,
    normalize_quaternions,
    opacity,
    quat_to_matrix,
    save_splats,
)
from conftest import random_scene


def one_splat_ply(rot=(1, 0, 0, 0), scale=(0, 0, 0), opac=0.0, label=None):
    s = GaussianSplat(
        mean=np.zeros(3, np.float32),
        rotation=np.array(rot, np.float32) / np.linalg.norm(rot),
        log_scale=np.array(scale, np.float32),
        opacity_logit=opac,
        sh=np.zeros((3, SH_COEFFS), np.float32),
        segment_label=0 if label is None else label,
    )
    scene = SplatScene.from_splats([s])
    data = save_splats(scene, with_labels=label is not None)
    if rot != (1, 0, 0, 0):
        # re-encode the raw (unnormalized) quaternion into the body
        body = bytearray(data)
        off = data.index(b"end_header\n") + len(b"end_header\n")
        raw = np.frombuffer(bytes(body[off:]), dtype="<f4").copy()
        raw[58:62] = rot
        body[off:off + raw.nbytes] = raw.tobytes()
        data = bytes(body)
    return data


class TestPlyLoad:
    def test_identity_splat(self):
        scene = load_splats(one_splat_ply())
        assert len(scene) == 1
        s = scene.splat(0)
        np.testing.assert_array_equal(s.rotation, [1, 0, 0, 0])
        np.testing.assert_array_equal(np.exp(s.log_scale), [1, 1, 1])
        assert opacity(s.opacity_logit) == 0.5
        assert s.segment_label == 0

    def test_quaternion_normalized_on_load(self):
        scene = load_splats(one_splat_ply(rot=(2, 0, 0, 0)))
        np.testing.assert_array_equal(scene.rotations[0], [1, 0, 0, 0])

    def test_missing_label_defaults_zero(self):
        scene = load_splats(one_splat_ply())
        assert scene.segment_labels.tolist() == [0]

    def test_label_property_round_trips(self):
        scene = load_splats(one_splat_ply(label=7))
        assert scene.segment_labels.tolist() == [7]

    def test_bad_magic(self):
        with pytest.raises(PlyParseError) as e:
            load_splats(b"plY\nrest")
        assert e.value.offset == 0

    def test_missing_end_header(self):
        data = b"ply\nformat binary_little_endian 1.0\n"
        with pytest.raises(PlyParseError):
            load_splats(data)

    def test_bad_format_line_offset(self):
        data = b"ply\nformat ascii 1.0\nend_header\n"
        with pytest.raises(PlyParseError) as e:
            load_splats(data)
        assert e.value.offset == 4  # points at the format line

    def test_missing_property_names_it(self):
        good = one_splat_ply()
        bad = good.replace(b"property float f_rest_44\n", b"")
        with pytest.raises(PlySchemaError) as e:
            load_splats(bad)
        assert "f_rest_44" in str(e.value)

    def test_truncated_body(self):
        data = one_splat_ply()
        with pytest.raises(PlyParseError):
            load_splats(data[:-8])

    def test_fox_asset_splat_count(self, tmp_path):
        import os
        path = os.environ.get("SPLATDYN_FOX_PLY")
        if not path:
            pytest.skip("set SPLATDYN_FOX_PLY to the fox capture to run")
        scene = load_splats(open(path, "rb").read())
        assert len(scene) == 304_875


class TestPlySave:
    def test_empty_scene(self):
        scene = SplatScene(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
                           np.zeros(0), np.zeros((0, 3, SH_COEFFS)))
        data = save_splats(scene)
        assert b"element vertex 0" in data
        assert len(load_splats(data)) == 0

    def test_round_trip_bit_exact(self, rng):
        scene = random_scene(64, rng, labels=rng.integers(0, 3, 64).astype(np.int32))
        again = load_splats(save_splats(scene), objects=scene.objects)
        np.testing.assert_array_equal(again.means, scene.means)
        np.testing.assert_array_equal(again.rotations, scene.rotations)
        np.testing.assert_array_equal(again.log_scales, scene.log_scales)
        np.testing.assert_array_equal(again.opacity_logits, scene.opacity_logits)
        np.testing.assert_array_equal(again.sh, scene.sh)
        np.testing.assert_array_equal(again.segment_labels, scene.segment_labels)

    def test_labels_emitted_when_present(self, rng):
        scene = random_scene(4, rng, labels=np.array([0, 1, 1, 0], np.int32))
        assert b"property int segment_label" in save_splats(scene)
        plain = random_scene(4, rng)
        assert b"segment_label" not in save_splats(plain)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_round_trip_property(self, seed):
        r = np.random.default_rng(seed)
        scene = random_scene(int(r.integers(1, 20)), r)
        assert save_splats(load_splats(save_splats(scene))) == save_splats(scene)


class TestCovariance:
    def test_identity(self):
        np.testing.assert_array_equal(covariance([0, 0, 0], [1, 0, 0, 0]), np.eye(3))

    def test_rotated_diag(self):
        # stretch x by 2, rotate 90 deg about z: variance moves to the y axis
        q = Rotation.from_euler("z", 90, degrees=True).as_quat()  # (x,y,z,w)
        q = [q[3], q[0], q[1], q[2]]
        cov = covariance([np.log(2), 0, 0], q)
        np.testing.assert_allclose(cov, np.diag([1.0, 4.0, 1.0]), atol=1e-12)

    def test_exact_symmetry(self, rng):
        for _ in range(20):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            cov = covariance(rng.uniform(-2, 1, 3), q)
            assert np.max(np.abs(cov - cov.T)) == 0.0

    def test_eigenvalues_match_scales(self, rng):
        for _ in range(50):
            ls = rng.uniform(-2, 1, 3)
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            ev = np.sort(np.linalg.eigvalsh(covariance(ls, q)))
            np.testing.assert_allclose(ev, np.sort(np.exp(2 * ls)), rtol=1e-9)

    def test_double_cover(self, rng):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        ls = [0.1, -0.3, 0.2]
        np.testing.assert_array_equal(covariance(ls, q), covariance(ls, -q))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            covariance([np.nan, 0, 0], [1, 0, 0, 0])

    def test_batch_matches_single(self, rng):
        scene = random_scene(16, rng)
        batch = covariances(scene)
        for i in range(16):
            np.testing.assert_allclose(
                batch[i], covariance(scene.log_scales[i], scene.rotations[i]),
                rtol=1e-12, atol=1e-15)


class TestQuaternions:
    def test_matrix_against_scipy(self, rng):
        q = rng.normal(size=(40, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        ours = quat_to_matrix(q)
        theirs = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
        np.testing.assert_allclose(ours, theirs, atol=1e-12)

    def test_matrix_quat_round_trip(self, rng):
        q = rng.normal(size=(40, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        q[q[:, 0] < 0] *= -1
        back = matrix_to_quat(quat_to_matrix(q))
        np.testing.assert_allclose(back, q, atol=1e-9)

    def test_normalize_leaves_unit_rows_untouched(self):
        q = np.array([[1, 0, 0, 0], [0.5, 0.5, 0.5, 0.5]], np.float32)
        out = normalize_quaternions(q)
        assert out.tobytes() == q.tobytes()

    def test_normalize_rejects_zero(self):
        with pytest.raises(ValueError):
            normalize_quaternions(np.zeros((1, 4)))


class TestOpacity:
    def test_zero(self):
        assert opacity(0.0) == 0.5

    def test_large_logit(self):
        assert opacity(20.0) >= 0.999999

    def test_symmetry(self, rng):
        for x in rng.normal(scale=4, size=20):
            assert opacity(x) + opacity(-x) == pytest.approx(1.0, abs=1e-15)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            opacity(float("nan"))


class TestEvalSh:
    def test_zero_coefficients_give_gray(self):
        rgb = eval_sh(np.zeros((3, SH_COEFFS)), [0, 0, 1])
        np.testing.assert_array_equal(rgb, [0.5, 0.5, 0.5])

    def test_dc_only(self):
        sh = np.zeros((3, SH_COEFFS))
        sh[:, 0] = [1.0, -0.5, 0.25]
        rgb = eval_sh(sh, [0, 0, 1], degree=0)
        expect = np.clip(0.28209479177387814 * sh[:, 0] + 0.5, 0, 1)
        np.testing.assert_allclose(rgb, expect, rtol=1e-12)

    def test_degree0_direction_independent(self, rng):
        sh = rng.normal(size=(3, SH_COEFFS))
        dirs = rng.normal(size=(100, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        vals = [eval_sh(sh, d, degree=0) for d in dirs]
        assert np.ptp(np.array(vals), axis=0).max() == 0.0

    def test_clamped_to_unit_interval(self, rng):
        sh = rng.normal(scale=10, size=(3, SH_COEFFS))
        rgb = eval_sh(sh, [0, 0, 1])
        assert np.all(rgb >= 0) and np.all(rgb <= 1)

    def test_basis_orthonormal_on_sphere(self, rng):
        # Monte-Carlo Gram matrix of the implemented basis: should be ~I,
        # which pins each constant against the analytic normalization.
        n = 200_000
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        basis = np.zeros((n, SH_COEFFS))
        eye = np.eye(SH_COEFFS)
        for k in range(SH_COEFFS):
            sh = np.tile(eye[k], (3, 1)) * 1e-3  # keep inside the clamp
            vals = eval_sh_batch(np.tile(sh[None], (1, 1, 1)).repeat(n, 0), dirs)
            basis[:, k] = (vals[:, 0] - 0.5) / 1e-3
        gram = basis.T @ basis / n * (4 * np.pi)
        np.testing.assert_allclose(gram, np.eye(SH_COEFFS), atol=0.15)

    def test_rejects_bad_degree(self):
        with pytest.raises(ValueError):
            eval_sh(np.zeros((3, SH_COEFFS)), [0, 0, 1], degree=4)


class TestSceneInvariants:
    def test_label_without_object_rejected(self):
        with pytest.raises(ValueError):
            SplatScene(np.zeros((1, 3)), [[1, 0, 0, 0]], np.zeros((1, 3)),
                       [0.0], np.zeros((1, 3, SH_COEFFS)),
                       np.array([5], np.int32), objects={0: ObjectInfo("bg")})

    def test_denormalized_quaternion_rejected(self):
        with pytest.raises(ValueError):
            SplatScene(np.zeros((1, 3)), [[2, 0, 0, 0]], np.zeros((1, 3)),
                       [0.0], np.zeros((1, 3, SH_COEFFS)))

    def test_select_preserves_objects(self, rng):
        scene = random_scene(10, rng, labels=np.array([0] * 5 + [1] * 5, np.int32))
        sub = scene.select(scene.segment_labels == 1)
        assert len(sub) == 5 and set(sub.objects) == {0, 1}
