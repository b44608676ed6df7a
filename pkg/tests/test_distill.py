import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mfdepth import BinaryMask, DepthMap, DimensionError, DomainError, ImagePlane
from mfdepth.costvolume import CostVolume, depth_hints, make_depth_bins
from mfdepth.distill import (
    compose_gate, consistency_loss, robust_mask, static_frame_augment, total_loss, zero_cost_volume_augment,
)


def _m(*vals):
    return BinaryMask(np.array([vals]))


def test_robust_mask_examples(rng):
    assert robust_mask(ImagePlane(np.array([[0.1]])), ImagePlane(np.array([[0.2]]))).data[0, 0]
    assert not robust_mask(ImagePlane(np.array([[0.2]])), ImagePlane(np.array([[0.2]]))).data[0, 0]
    a, b = rng.random((5, 6)), rng.random((5, 6))
    m = robust_mask(ImagePlane(a), ImagePlane(b)).data
    for i in range(5):
        for j in range(6):
            assert m[i, j] == (a[i, j] < b[i, j])


@given(arrays(np.float64, (4, 4), elements=st.integers(0, 3).map(float)),
       arrays(np.float64, (4, 4), elements=st.integers(0, 3).map(float)))
def test_robust_mask_swap(a, b):
    fwd = robust_mask(ImagePlane(a), ImagePlane(b)).data
    back = robust_mask(ImagePlane(b), ImagePlane(a)).data
    assert np.array_equal(fwd, ~back & (a != b))


def test_consistency_loss_examples():
    d = DepthMap(np.full((2, 2), 3.0))
    gate_all = BinaryMask.full((2, 2), True)
    assert consistency_loss(d, d, gate_all) == 0.0
    assert consistency_loss(DepthMap(np.full((2, 2), 4.0)), d, BinaryMask.full((2, 2), False)) == 0.0
    half = BinaryMask(np.array([[True, True], [False, False]]))
    offset_half = DepthMap(np.array([[4.0, 4.0], [3.0, 3.0]]))
    assert consistency_loss(offset_half, d, gate_all) == 0.5
    # normalised by gated pixels, so a gate over the offset half sees the full offset
    assert consistency_loss(DepthMap(np.full((2, 2), 4.0)), d, half) == 1.0
    assert consistency_loss(DepthMap(np.full((2, 2), 4.0)), d, half, normalize="sum") == 2.0 == 0.5 * 4
    with pytest.raises(DomainError):
        consistency_loss(d, d, gate_all, normalize="max")


def test_consistency_loss_zero_iff_agree(rng):
    a = rng.uniform(1, 5, (4, 4))
    gate = BinaryMask(rng.random((4, 4)) > 0.5)
    b = a.copy()
    b[~gate.data] += 1
    assert consistency_loss(DepthMap(a), DepthMap(b), gate) == 0
    b[gate.data.nonzero()[0][0], gate.data.nonzero()[1][0]] += 1e-9
    assert consistency_loss(DepthMap(a), DepthMap(b), gate) > 0


def test_compose_gate_examples():
    assert not compose_gate(_m(True), _m(False), True).data[0, 0]
    assert compose_gate(_m(True), _m(False), False).data[0, 0]
    assert compose_gate(_m(True), None, False).data[0, 0]
    assert compose_gate(_m(True), _m(True), True).data[0, 0]
    with pytest.raises(DomainError):
        compose_gate(_m(True), None, True)


def test_static_frame_augment(rng):
    img = ImagePlane(rng.random((6, 7, 3)))
    a = static_frame_augment(img, 5)
    assert np.array_equal(a.data, static_frame_augment(img, 5).data)
    assert not np.array_equal(a.data, static_frame_augment(img, 6).data)
    assert a.data.min() >= 0 and a.data.max() <= 1
    assert np.array_equal(static_frame_augment(img, 5, 0.0, 0.0).data, img.data)


def test_zero_cost_volume_augment(rng):
    bins = make_depth_bins(2, 9, 8)
    cost = rng.random((8, 3, 4))
    vol = CostVolume(bins, cost, rng.random((8, 3, 4)) > 0.3)
    z = zero_cost_volume_augment(vol)
    assert np.all(z.cost == 0)
    assert np.all(depth_hints(z).data == 2.0)
    zz = zero_cost_volume_augment(z)
    assert np.array_equal(zz.cost, z.cost) and np.array_equal(zz.valid, z.valid)


def _inputs(rng, shape=(6, 8)):
    return (
        ImagePlane(rng.random(shape)), ImagePlane(rng.random(shape)),
        BinaryMask(rng.random(shape) > 0.7), BinaryMask(rng.random(shape) > 0.8),
        float(rng.random()), float(rng.random()), float(rng.random()),
    )


def test_total_loss_recomposition(rng):
    for _ in range(20):
        l_ph, l_ph_s, m, m_i, l_c, l_sm, l_sm_s = _inputs(rng)
        b = total_loss(l_ph, l_ph_s, m, m_i, l_c, l_sm, l_sm_s)
        g1 = ~m.data & ~m_i.data
        g2 = ~m_i.data
        expect = (l_ph.data[..., 0][g1].mean() + l_c + 1e-3 * l_sm + l_ph_s.data[..., 0][g2].mean()
                  + 1e-3 * l_sm_s)
        assert b.total == pytest.approx(expect, abs=1e-9)
        assert b.total == pytest.approx(b.recompose(), abs=1e-12)
        assert json.loads(b.to_json())["beta"] == 1e-3


def test_total_loss_all_dynamic(rng):
    l_ph, l_ph_s, m, _, l_c, l_sm, l_sm_s = _inputs(rng)
    b = total_loss(l_ph, l_ph_s, m, BinaryMask.full(m.shape, True), l_c, l_sm, l_sm_s)
    assert b.l_ph == 0 and b.l_ph_s == 0
    assert b.gate_ph_pixels == 0 and b.gate_ph_s_pixels == 0


def test_total_loss_static_scene():
    zero = ImagePlane(np.zeros((4, 4)))
    none = BinaryMask.full((4, 4), False)
    b = total_loss(zero, zero, none, none, 0.0, 0.3, 0.2)
    assert b.total == pytest.approx(1e-3 * 0.5)


def test_total_loss_shape_mismatch(rng):
    l_ph, l_ph_s, m, m_i, *rest = _inputs(rng)
    with pytest.raises(DimensionError):
        total_loss(l_ph, ImagePlane(np.zeros((3, 3))), m, m_i, *rest)


def test_flagged_pixels_drop_out(rng):
    l_ph, l_ph_s, m, m_i, l_c, l_sm, l_sm_s = _inputs(rng)
    bigger = m_i | BinaryMask(rng.random(m.shape) > 0.5)
    for mask in (m_i, bigger):
        gate = ~m.data & ~mask.data
        b = total_loss(l_ph, l_ph_s, m, mask, l_c, l_sm, l_sm_s)
        assert b.gate_ph_pixels == gate.sum()
    # gate truth table: a flagged pixel never enters the multi-frame term
    l2 = l_ph.data.copy()
    l2[bigger.data | m.data] = 1e6
    b1 = total_loss(l_ph, l_ph_s, m, bigger, l_c, l_sm, l_sm_s)
    b2 = total_loss(ImagePlane(l2), l_ph_s, m, bigger, l_c, l_sm, l_sm_s)
    assert b1.l_ph == b2.l_ph
