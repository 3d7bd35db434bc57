import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspvmunet.numerics import DimensionError, Tensor
from aspvmunet.scan import (
    ScanSpec,
    apply_plan,
    build_across_plan,
    build_atrous_plan,
    build_efficient_plan,
    build_global_plan,
    compute_padding,
    invert_plan,
    raster,
    scan_order,
    scan_order_csv,
)


def enumerate_atrous(H, W, S):
    """Brute-force oracle: walk sub-images row-major, then their patches row-major."""
    Hp = H + (-H) % S
    Wp = W + (-W) % S
    seqs = []
    for a in range(S):
        for b in range(S):
            seq = []
            for r in range(Hp):
                for c in range(Wp):
                    if r % S == a and c % S == b:
                        seq.append(r * Wp + c)
            seqs.append(seq)
    return seqs


@pytest.mark.parametrize("hws,expected", [((8, 8, 2), (0, 0)), ((7, 7, 2), (1, 1)), ((5, 7, 3), (1, 2))])
def test_compute_padding(hws, expected):
    assert compute_padding(*hws) == expected


def test_identity_raster_for_step_one():
    assert build_atrous_plan(4, 4, 1).forward.tolist() == [list(range(16))]


def test_step_two_on_4x4():
    assert build_atrous_plan(4, 4, 2).forward.tolist() == [[0, 2, 8, 10], [1, 3, 9, 11], [4, 6, 12, 14], [5, 7, 13, 15]]
    assert build_atrous_plan(4, 4, 2).forward.tolist() == enumerate_atrous(4, 4, 2)


def test_padding_slots_marked_on_3x3():
    plan = build_atrous_plan(3, 3, 2)
    assert (plan.P_H, plan.P_W) == (1, 1)
    assert plan.forward.shape == (4, 4)
    assert plan.forward.tolist() == enumerate_atrous(3, 3, 2)
    rows, cols = np.divmod(plan.forward[plan.padding_mask()], 4)
    assert set(np.unique(np.where(rows == 3, 3, cols))) == {3}
    assert plan.padding_mask().sum() == 16 - 9


@pytest.mark.parametrize("H", range(1, 18, 3))
@pytest.mark.parametrize("W", [1, 2, 5, 9, 17])
@pytest.mark.parametrize("S", [1, 2, 3, 5, 8])
def test_matches_enumeration_oracle(H, W, S):
    assert build_atrous_plan(H, W, S).forward.tolist() == enumerate_atrous(H, W, S)


def test_apply_ramp_step_two():
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    y = apply_plan(x, build_atrous_plan(4, 4, 2))
    assert y.shape == (4, 4, 1)
    assert y.data[..., 0].tolist() == [[0, 2, 8, 10], [1, 3, 9, 11], [4, 6, 12, 14], [5, 7, 13, 15]]


def test_apply_step_one_is_flatten():
    x = np.random.default_rng(0).standard_normal((2, 3, 4, 5))
    y = apply_plan(Tensor(x), build_atrous_plan(4, 5, 1)).data
    np.testing.assert_array_equal(y, x.transpose(0, 2, 3, 1).reshape(2, 20, 3))


@pytest.mark.parametrize("S", [1, 2, 3, 4, 8])
def test_round_trip(S):
    x = np.random.default_rng(S).standard_normal((2, 3, 7, 5))
    plan = build_atrous_plan(7, 5, S)
    np.testing.assert_array_equal(invert_plan(apply_plan(Tensor(x), plan), plan).data, x)


def test_padding_slots_are_zero():
    x = Tensor(np.ones((1, 2, 3, 3)))
    plan = build_atrous_plan(3, 3, 2)
    y = apply_plan(x, plan).data
    assert np.all(y[plan.padding_mask()] == 0)
    assert np.all(y[~plan.padding_mask()] == 1)


def test_invert_zero_and_single_spike():
    plan = build_atrous_plan(4, 4, 2)
    assert np.all(invert_plan(Tensor(np.zeros((4, 4, 1))), plan).data == 0)
    y = np.zeros((4, 4, 1))
    y[3, 0, 0] = 1.0
    img = invert_plan(Tensor(y), plan).data[0, 0]
    assert img[1, 1] == 1.0 and img.sum() == 1.0


def test_extent_mismatch():
    plan = build_atrous_plan(4, 4, 2)
    with pytest.raises(DimensionError):
        apply_plan(Tensor(np.zeros((1, 1, 4, 5))), plan)
    with pytest.raises(DimensionError):
        invert_plan(Tensor(np.zeros((4, 5, 1))), plan)


def test_across_rasters_on_2x2():
    plans = build_across_plan(2, 2)
    assert [p.forward[0].tolist() for p in plans] == [[0, 1, 2, 3], [0, 2, 1, 3], [3, 2, 1, 0], [3, 1, 2, 0]]


def test_single_row_horizontal_directions_are_reversals():
    fwd, _, back, _ = build_across_plan(1, 6)
    assert fwd.forward[0].tolist() == back.forward[0][::-1].tolist()


def test_across_composes_with_atrous():
    H, W, S = 6, 4, 2
    for plan, d in zip(build_across_plan(H, W, S), ("tl-h", "tl-v", "br-h", "br-v")):
        for k, (a, b) in enumerate((a, b) for a in range(S) for b in range(S)):
            sub = np.array([[r * W + c for c in range(b, W, S)] for r in range(a, H, S)])
            expected = sub.reshape(-1)[raster(*sub.shape, d)]
            assert plan.forward[k].tolist() == expected.tolist()


def test_efficient_plan_on_4x4():
    plan = build_efficient_plan(4, 4)
    assert plan.forward[0].tolist() == [0, 2, 8, 10]
    assert plan.forward[2].tolist() == [4, 12, 6, 14]
    atrous = build_atrous_plan(4, 4, 2)
    for a, b in zip(plan.forward, atrous.forward):
        assert sorted(a) == sorted(b)


def test_efficient_round_trip():
    plan = build_efficient_plan(6, 5)
    x = np.random.default_rng(3).standard_normal((2, 2, 6, 5))
    np.testing.assert_array_equal(invert_plan(apply_plan(Tensor(x), plan), plan).data, x)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 17), st.integers(1, 17), st.integers(1, 8))
def test_partition_length_and_round_trip(H, W, S):
    plan = build_atrous_plan(H, W, S)
    P_H, P_W = compute_padding(H, W, S)
    assert plan.seq_len == (H + P_H) * (W + P_W) // S**2
    assert sorted(plan.forward.reshape(-1).tolist()) == list(range((H + P_H) * (W + P_W)))
    x = np.random.default_rng(H * 100 + W).standard_normal((1, 2, H, W))
    np.testing.assert_array_equal(invert_plan(apply_plan(Tensor(x), plan), plan).data, x)


def test_degenerate_large_step():
    plan = build_atrous_plan(3, 5, 6)
    assert plan.seq_len == 1 and plan.n_seq == 36


def test_step_one_equals_global():
    np.testing.assert_array_equal(build_atrous_plan(5, 7, 1).forward, build_global_plan(5, 7).forward)


def test_stack_orders_invert_identically():
    plan = build_atrous_plan(5, 6, 2)
    x = np.random.default_rng(4).standard_normal((3, 2, 5, 6))
    a = apply_plan(Tensor(x), plan, stack="batch")
    b = apply_plan(Tensor(x), plan, stack="sequence")
    assert not np.array_equal(a.data, b.data)
    np.testing.assert_array_equal(invert_plan(b, plan, stack="sequence").data, x)


def test_gather_gradient_is_scatter():
    plan = build_atrous_plan(3, 3, 2)
    x = Tensor(np.random.default_rng(5).standard_normal((1, 1, 3, 3)), requires_grad=True)
    y = apply_plan(x, plan)
    w = np.random.default_rng(6).standard_normal(y.shape)
    (y * Tensor(w)).sum().backward()
    np.testing.assert_array_equal(x.grad, invert_plan(Tensor(w), plan).data)


def test_scan_spec_validation():
    with pytest.raises(ValueError):
        ScanSpec(step=0)
    with pytest.raises(ValueError):
        ScanSpec(directions=())
    with pytest.raises(ValueError):
        ScanSpec(mode="local")
    with pytest.raises(ValueError):
        ScanSpec(step=2, per_subimage_directions=("tl-h",))
    assert ScanSpec.from_method("across", 2).n_sequences == 16
    assert ScanSpec.from_method("efficient").n_sequences == 4


def test_scan_order_rows_and_csv():
    assert scan_order("atrous", 4, 4, 1) == [list(range(16))]
    assert scan_order("atrous", 4, 4, 2) == enumerate_atrous(4, 4, 2)
    rows = scan_order("atrous", 3, 3, 2)
    assert rows[0] == [0, 2, 8, 10] and rows[3] == [5, -1, -1, -1]
    eff = scan_order("efficient", 4, 4, 2)
    atr = scan_order("atrous", 4, 4, 2)
    assert [i for i in range(4) if eff[i] != atr[i]] == [2, 3]
    assert scan_order_csv("atrous", 4, 4, 2).splitlines()[0] == "0,2,8,10"
