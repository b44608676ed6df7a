import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfdepth import (
    BinaryMask, CameraIntrinsics, DepthMap, DimensionError, DomainError, ImagePlane, ObjectMotion, RigidPose,
    check_same_shape, new_image_plane,
)


def test_new_image_plane_fill():
    p = new_image_plane(2, 2, 1, 0.5)
    assert p.data.shape == (2, 2, 1)
    assert np.all(p.data == 0.5)
    q = new_image_plane(1, 1, 3, 0.0)
    assert q.channels == 3 and np.all(q.data == 0)


def test_new_image_plane_zero_dim():
    with pytest.raises(DimensionError):
        new_image_plane(0, 4, 1, 0.0)


def test_image_plane_rejects_nan():
    with pytest.raises((DomainError, ValueError)):
        ImagePlane(np.array([[np.nan]]))


def test_image_plane_2d_promoted_and_readonly():
    p = ImagePlane(np.zeros((3, 4)))
    assert p.shape == (3, 4) and p.channels == 1
    with pytest.raises(ValueError):
        p.data[0, 0, 0] = 1.0


def test_depth_map_validity_default():
    d = DepthMap(np.array([[1.0, 0.0], [-2.0, np.inf]]))
    assert d.valid.tolist() == [[True, False], [False, False]]
    assert np.all(d.data[~d.valid] == 0)


def test_depth_scaled_keeps_validity():
    d = DepthMap(np.array([[1.0, 0.0]]))
    s = d.scaled(3.0)
    assert s.data[0, 0] == 3.0 and not s.valid[0, 1]


def test_binary_mask_ops():
    a = BinaryMask(np.array([[True, False]]))
    b = BinaryMask(np.array([[True, True]]))
    assert (a & b).data.tolist() == [[True, False]]
    assert (a | b).count == 2
    assert (~a).data.tolist() == [[False, True]]
    assert BinaryMask.full((2, 3), False).count == 0


def test_check_same_shape():
    assert check_same_shape(new_image_plane(2, 3), DepthMap(np.ones((2, 3)))) == (2, 3)
    with pytest.raises(DimensionError):
        check_same_shape(new_image_plane(2, 3), DepthMap(np.ones((3, 2))))


def test_intrinsics_invariants():
    with pytest.raises(DomainError):
        CameraIntrinsics(0.0, 1.0, 0.0, 0.0)
    K = CameraIntrinsics(100.0, 90.0, 64.0, 32.0)
    assert np.allclose(K.matrix @ K.inverse, np.eye(3))


def test_pose_rejects_non_rotation():
    with pytest.raises(DomainError):
        RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DomainError):
        RigidPose(np.eye(3) * 1.001, np.zeros(3))


def test_object_motion_finite():
    with pytest.raises(DomainError):
        ObjectMotion(np.array([np.inf, 0, 0]))
    assert np.all(ObjectMotion.zero().translation == 0)


vec3 = st.tuples(*[st.floats(-1.0, 1.0)] * 3)


@given(vec3, st.tuples(*[st.floats(-5.0, 5.0)] * 3))
def test_pose_compose_inverse_is_identity(aa, t):
    p = RigidPose.from_axis_angle(aa, t)
    ident = p.compose(p.inverse())
    assert np.allclose(ident.matrix, np.eye(4), atol=1e-9)
    ident2 = p.inverse().compose(p)
    assert np.allclose(ident2.matrix, np.eye(4), atol=1e-9)


@given(vec3, vec3, vec3)
def test_pose_compose_applies_other_first(aa1, aa2, pt):
    a = RigidPose.from_axis_angle(aa1, (1.0, 2.0, 3.0))
    b = RigidPose.from_axis_angle(aa2, (-1.0, 0.5, 0.0))
    x = np.array(pt)
    assert np.allclose(a.compose(b).apply(x), a.apply(b.apply(x)), atol=1e-12)


def test_pose_dict_roundtrip():
    from mfdepth.io import pose_from_dict

    p = RigidPose.from_axis_angle((0.1, -0.2, 0.3), (1.0, 2.0, 3.0))
    q = pose_from_dict(p.to_dict())
    assert np.array_equal(p.matrix, q.matrix)
