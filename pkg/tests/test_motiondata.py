import json

import numpy as np
import pytest

from puppet2d.errors import AnchorError, DataError
from puppet2d.motiondata import (
    CanonicalMotion2D,
    Motion2D,
    MotionDataset,
    canonicalize,
    compute_scale,
    decanonicalize,
    load_motion2d,
    save_motion2d,
    slice_window,
)


def random_motion(rng, t=30, j=8, image=(640, 480)):
    base = rng.uniform(100, 500, size=(1, j, 2))
    drift = np.cumsum(rng.normal(0, 4, size=(t, 1, 2)), axis=0)
    wiggle = rng.normal(0, 12, size=(t, j, 2))
    return Motion2D(fps=30.0, image_size=image, keypoints=base + drift + wiggle)


# -- compute_scale --------------------------------------------------------------


def test_scale_floor_on_coincident_points():
    frame = np.full((5, 2), 17.0)
    s = compute_scale(frame, 0, (640, 480))
    assert s == pytest.approx(1e-3 * np.hypot(640, 480))


def test_scale_two_points_at_distance_d():
    frame = np.array([[0.0, 0.0], [30.0, 0.0], [0.0, 30.0]])
    assert compute_scale(frame, 0, (640, 480)) == pytest.approx(30.0)


def test_scale_matches_loop_oracle():
    rng = np.random.default_rng(0)
    frame = rng.uniform(0, 640, size=(9, 2))
    root = 4
    dists = [np.hypot(*(frame[i] - frame[root])) for i in range(9) if i != root]
    assert compute_scale(frame, root, (640, 480)) == pytest.approx(sum(dists) / len(dists), abs=1e-12)


# -- canonicalize ---------------------------------------------------------------


def test_static_sequence_has_zero_deltas():
    frame = np.array([[100.0, 100.0], [150.0, 100.0], [100.0, 160.0]])
    m = Motion2D(fps=30, image_size=(640, 480), keypoints=np.repeat(frame[None], 6, axis=0))
    c = canonicalize(m)
    np.testing.assert_allclose(c.log_scale, 0.0, atol=1e-12)
    np.testing.assert_allclose(c.root_shift, 0.0, atol=1e-12)
    np.testing.assert_array_equal(c.pose[:, 0, :], 0.0)


def test_uniform_2x_scaling_gives_ln2():
    frame = np.array([[200.0, 200.0], [240.0, 200.0], [200.0, 230.0]])
    scaled = (frame - frame[0]) * 2.0 + frame[0]
    m = Motion2D(fps=30, image_size=(640, 480), keypoints=np.stack([frame, scaled]))
    c = canonicalize(m)
    assert c.log_scale[1] == pytest.approx(np.log(2.0), abs=1e-12)
    np.testing.assert_allclose(c.root_shift[1], 0.0, atol=1e-12)


def test_pure_translation_delta():
    # s = 20 and a (10, 0) px shift -> root_shift (0.5, 0)
    frame = np.array([[0.0, 0.0], [20.0, 0.0], [-20.0, 0.0]])
    m = Motion2D(fps=30, image_size=(640, 480), keypoints=np.stack([frame, frame + [10.0, 0.0]]))
    c = canonicalize(m)
    np.testing.assert_allclose(c.root_shift[1], [0.5, 0.0], atol=1e-12)
    assert c.log_scale[1] == pytest.approx(0.0, abs=1e-12)


# -- decanonicalize / round trip --------------------------------------------------


def test_roundtrip_random_motions():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = random_motion(rng, t=int(rng.integers(2, 60)), j=int(rng.integers(2, 16)))
        rec = decanonicalize(canonicalize(m))
        assert np.abs(rec - m.keypoints).max() < 1e-6


def test_zero_deltas_constant_output():
    pose = np.array([[[0.0, 0.0], [1.0, 0.5]]]).repeat(5, axis=0)
    c = CanonicalMotion2D(
        pose=pose,
        root_shift=np.zeros((5, 2)),
        log_scale=np.zeros(5),
        anchor_root=np.array([320.0, 240.0]),
        anchor_scale=25.0,
    )
    out = decanonicalize(c)
    for t in range(1, 5):
        np.testing.assert_array_equal(out[t], out[0])


def test_reanchoring_shifts_trajectory():
    rng = np.random.default_rng(2)
    m = random_motion(rng, t=20)
    c = canonicalize(m)
    base = decanonicalize(c)
    delta = np.array([12.5, -3.0])
    shifted = decanonicalize(c, anchor_root=c.anchor_root + delta)
    np.testing.assert_allclose(shifted[0, 0] - base[0, 0], delta, atol=1e-9)
    # constant-scale shift propagates to every frame's root identically
    np.testing.assert_allclose(shifted[:, 0, :] - base[:, 0, :], np.tile(delta, (20, 1)), atol=1e-9)


def test_bad_anchor_scale_rejected():
    rng = np.random.default_rng(3)
    c = canonicalize(random_motion(rng))
    with pytest.raises(AnchorError):
        decanonicalize(c, anchor_scale=0.0)
    with pytest.raises(AnchorError):
        CanonicalMotion2D(
            pose=np.zeros((2, 2, 2)),
            root_shift=np.zeros((2, 2)),
            log_scale=np.zeros(2),
            anchor_root=np.zeros(2),
            anchor_scale=-1.0,
        )


# -- equivariance properties -------------------------------------------------------


def test_translation_equivariance():
    rng = np.random.default_rng(4)
    m = random_motion(rng, t=15)
    shift = np.array([37.0, -11.0])
    m2 = Motion2D(fps=m.fps, image_size=m.image_size, keypoints=m.keypoints + shift)
    a, b = canonicalize(m), canonicalize(m2)
    np.testing.assert_allclose(b.anchor_root, a.anchor_root + shift, atol=1e-9)
    np.testing.assert_allclose(b.pose, a.pose, atol=1e-9)
    np.testing.assert_allclose(b.root_shift, a.root_shift, atol=1e-9)
    np.testing.assert_allclose(b.log_scale, a.log_scale, atol=1e-9)
    assert b.anchor_scale == pytest.approx(a.anchor_scale)


def test_scale_equivariance():
    rng = np.random.default_rng(5)
    m = random_motion(rng, t=15)
    lam = 1.7
    m2 = Motion2D(fps=m.fps, image_size=m.image_size, keypoints=m.keypoints * lam)
    a, b = canonicalize(m), canonicalize(m2)
    assert b.anchor_scale == pytest.approx(lam * a.anchor_scale, rel=1e-9)
    np.testing.assert_allclose(b.anchor_root, lam * a.anchor_root, atol=1e-9)
    np.testing.assert_allclose(b.pose, a.pose, atol=1e-6)
    np.testing.assert_allclose(b.root_shift, a.root_shift, atol=1e-6)
    np.testing.assert_allclose(b.log_scale, a.log_scale, atol=1e-6)


# -- slice_window -------------------------------------------------------------------


def test_slice_full_sequence():
    rng = np.random.default_rng(6)
    m = random_motion(rng, t=12)
    np.testing.assert_array_equal(slice_window(m, 0, 12), m.keypoints)


def test_slice_clamps_at_end():
    rng = np.random.default_rng(7)
    m = random_motion(rng, t=10)
    win = slice_window(m, 9, 5)
    for k in range(5):
        np.testing.assert_array_equal(win[k], m.keypoints[9])


def test_slice_mid_matches_indexing():
    rng = np.random.default_rng(8)
    m = random_motion(rng, t=20)
    np.testing.assert_array_equal(slice_window(m, 3, 6), m.keypoints[3:9])


# -- file I/O ------------------------------------------------------------------------


def test_save_load_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    m = random_motion(rng)
    m.confidence = rng.uniform(0, 1, size=m.keypoints.shape[:2])
    m.object_keypoints = rng.uniform(0, 640, size=(m.num_frames, 1, 2))
    path = tmp_path / "clip.json"
    save_motion2d(m, path)
    m2 = load_motion2d(path)
    # payload is float32 on disk; round trip through f32 must be bit-exact
    np.testing.assert_array_equal(m2.keypoints, m.keypoints.astype(np.float32).astype(np.float64))
    np.testing.assert_array_equal(m2.confidence, m.confidence.astype(np.float32).astype(np.float64))
    np.testing.assert_array_equal(
        m2.object_keypoints, m.object_keypoints.astype(np.float32).astype(np.float64)
    )
    assert m2.fps == m.fps and m2.image_size == m.image_size


def test_nan_keypoint_names_frame_and_joint(tmp_path):
    import base64

    rng = np.random.default_rng(10)
    m = random_motion(rng)
    path = tmp_path / "bad.json"
    save_motion2d(m, path)
    kp = m.keypoints.copy()
    kp[7, 3, 0] = np.nan
    doc = json.loads(path.read_text())
    doc["keypoints_b64"] = base64.b64encode(kp.astype("<f4").tobytes()).decode()
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match=r"frame 7, joint 3"):
        load_motion2d(path)


def test_truncated_file_is_parse_error(tmp_path):
    path = tmp_path / "trunc.json"
    rng = np.random.default_rng(11)
    save_motion2d(random_motion(rng), path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(DataError):
        load_motion2d(path)


def test_too_short_sequence_rejected():
    with pytest.raises(DataError):
        Motion2D(fps=30, image_size=(640, 480), keypoints=np.zeros((1, 3, 2)))


def test_dataset_rejects_mixed_joint_counts():
    rng = np.random.default_rng(12)
    with pytest.raises(DataError):
        MotionDataset(clips=[random_motion(rng, j=5), random_motion(rng, j=6)])
