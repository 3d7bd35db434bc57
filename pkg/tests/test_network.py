import json
import zipfile

import numpy as np
import pytest

from aspvmunet.blocks import ASPBlock
from aspvmunet.errors import ConfigError, DimensionError
from aspvmunet.network import (
    REFERENCE_PARAMS,
    ABLATION_ROWS,
    CheckpointError,
    NetworkConfig,
    ablation_config,
    ablation_table,
    accounting_report,
    build,
    count_flops,
    count_parameters,
    flop_breakdown,
    load_checkpoint,
    padding_overhead,
    parameter_breakdown,
    save_checkpoint,
    stage_shapes,
)
from aspvmunet.numerics import Tensor, default_dtype, gradcheck
from aspvmunet.numerics import functional as F

STEPS = (1, 2, 3, 4, 8)
MICRO = NetworkConfig(stage_channels=(8,) * 6, input_size=(32, 32), variant="micro")


def images(shape, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).random(shape).astype(dtype)


@pytest.fixture(scope="module")
def tiny():
    return build(NetworkConfig.tiny(input_size=(64, 64)))


def test_base_forward_shape_and_range():
    net = build(NetworkConfig.base())
    y = net.predict(images((1, 3, 256, 256)))
    assert y.shape == (1, 1, 256, 256)
    assert np.all((y > 0) & (y < 1))


def test_tiny_forward_shape(tiny):
    y = tiny.predict(images((2, 3, 64, 64)))
    assert y.shape == (2, 1, 64, 64) and y.dtype == np.float32
    assert np.all((y > 0) & (y < 1))


def test_encoder_stage_shapes(tiny):
    tiny.eval()
    feats = tiny.encode(Tensor(images((1, 3, 64, 64))))
    got = [f.shape[1:] for f in feats]
    assert got == stage_shapes(tiny.cfg, (64, 64))
    assert got[-1][1:] == (2, 2)  # bottleneck at input/32


def test_stage_layout(tiny):
    assert len(tiny.encoder) == 6 and len(tiny.decoder) == 6
    assert [len(s) for s in tiny.encoder] == [1, 1, 1, 1, 3, 1]
    assert all(isinstance(b, ASPBlock) for s in list(tiny.encoder)[1:] for b in s)
    assert not any(isinstance(b, ASPBlock) for b in tiny.encoder[0])


def test_batch_independence(tiny):
    one = images((1, 3, 64, 64), seed=3)
    batch = np.concatenate([one, images((1, 3, 64, 64), seed=4), one])
    y = tiny.predict(batch)
    np.testing.assert_array_equal(y[0], y[2])
    np.testing.assert_allclose(tiny.predict(one)[0], y[0], atol=1e-6)


def test_inference_deterministic(tiny):
    x = images((1, 3, 64, 64), seed=5)
    np.testing.assert_array_equal(tiny.predict(x), tiny.predict(x))


def test_rejects_bad_input_sizes(tiny):
    with pytest.raises(DimensionError):
        tiny(Tensor(images((1, 3, 48, 64))))
    with pytest.raises(DimensionError):
        tiny(Tensor(images((1, 1, 64, 64))))
    with pytest.raises(DimensionError):
        tiny(Tensor(images((3, 64, 64))))


@pytest.mark.parametrize(
    "overrides, field",
    [
        (dict(stage_channels=(8, 16, 24, 32, 48)), "stage_channels"),
        (dict(stage_channels=(8, 16, 20, 32, 48, 64)), "stage_channels"),
        (dict(input_size=(64, 48)), "input_size"),
        (dict(encoder_depths=(1, 1, 0, 1, 3, 1)), "encoder_depths"),
        (dict(scan_method="zigzag"), "scan_method"),
    ],
)
def test_config_errors_name_field(overrides, field):
    with pytest.raises(ConfigError, match=field):
        build(NetworkConfig.tiny(**overrides))


def test_stage_one_width_exempt():
    cfg = NetworkConfig(stage_channels=(3, 8, 8, 8, 8, 8), input_size=(32, 32))
    assert build(cfg).num_parameters() > 0


def test_config_dict_round_trip():
    cfg = NetworkConfig.tiny(atrous_step=3, use_se=False)
    assert NetworkConfig.from_dict(json.loads(json.dumps(cfg.as_dict()))) == cfg
    with pytest.raises(ConfigError, match="atrous_steps"):
        NetworkConfig.from_dict({"atrous_steps": 2})


def test_parameter_count_is_pure():
    cfg = NetworkConfig.tiny()
    assert count_parameters(build(cfg, seed=0)) == count_parameters(build(cfg, seed=1))


def test_breakdown_sums_to_total():
    net = build(NetworkConfig.tiny())
    parts = parameter_breakdown(net)
    assert sum(parts.values()) == count_parameters(net)


@pytest.fixture(scope="module")
def base_counts():
    return {s: count_parameters(build(NetworkConfig.base(atrous_step=s))) for s in STEPS}


def test_base_size_near_reference(base_counts):
    assert abs(base_counts[2] / REFERENCE_PARAMS["base"] - 1) < 0.25
    tiny = count_parameters(build(NetworkConfig.tiny()))
    assert abs(tiny / REFERENCE_PARAMS["tiny"] - 1) < 0.5


def test_params_increase_with_step(base_counts):
    counts = [base_counts[s] for s in STEPS]
    assert all(a < b for a, b in zip(counts, counts[1:]))
    assert 2.2 <= counts[-1] / counts[0] <= 3.1


def test_step_increment_is_projections_only():
    nets = {s: build(NetworkConfig.base(atrous_step=s)) for s in (1, 3)}
    parts = {s: parameter_breakdown(n) for s, n in nets.items()}
    changed = {k for k in parts[1] if parts[1][k] != parts[3][k]}
    assert changed == {"scan_projection"}


def test_flops_constant_across_steps():
    flops = [count_flops(build(NetworkConfig.base(atrous_step=s))) for s in STEPS]
    assert max(flops) / min(flops) - 1 < 0.01


def test_padding_counted_only_on_request():
    net = build(NetworkConfig.base(atrous_step=3))
    assert count_flops(net, include_padding=True) > count_flops(net)
    assert any(p != (0, 0) for p in padding_overhead(net.cfg).values())


def test_flops_scale_with_pixels():
    net = build(NetworkConfig.tiny(atrous_step=1))
    small, large = flop_breakdown(net, (64, 64)), flop_breakdown(net, (128, 128))
    assert large["conv"] == 4 * small["conv"]
    assert large["sequence"] == 4 * small["sequence"]
    assert large["pooled"] == small["pooled"]
    assert count_flops(net, (64, 64)) == sum(small.values())


def test_tiny_flops_below_base():
    assert count_flops(build(NetworkConfig.tiny()), (256, 256)) < count_flops(build(NetworkConfig.base()), (256, 256))


def test_flop_input_must_divide():
    with pytest.raises(DimensionError):
        count_flops(build(NetworkConfig.tiny()), (100, 100))


def test_accounting_report_explains_gap():
    text = accounting_report()
    assert "base" in text and "tiny" in text
    assert "why" in text.lower()


# -- gradients --------------------------------------------------------------------


def test_micro_network_gradcheck():
    with default_dtype(np.float64):
        net = build(MICRO, seed=2)
    net.eval()  # batch statistics over a 1×1 bottleneck are degenerate
    x = Tensor(np.random.default_rng(3).random((1, 3, 32, 32)), requires_grad=True)
    named = [("input", x)] + list(net.named_parameters())
    rep = gradcheck(lambda: net.logits(x), named, max_per_tensor=1, max_tensors=25, seed=1)
    assert rep.max_rel_error < 1e-4, rep


def test_training_mode_backward_is_finite(tiny):
    tiny.train()
    tiny.zero_grad()
    x = Tensor(images((2, 3, 64, 64)))
    F.mean(tiny(x)).backward()
    grads = [p.grad for p in tiny.parameters()]
    assert all(g is not None and np.isfinite(g).all() for g in grads)
    tiny.zero_grad()


# -- ablations --------------------------------------------------------------------


@pytest.mark.parametrize("row", list(ABLATION_ROWS))
def test_ablation_rows_run_at_tiny_scale(row):
    net = build(ablation_config(row, NetworkConfig.tiny(input_size=(32, 32))))
    x = Tensor(images((2, 3, 32, 32)))
    F.mean(net(x)).backward()
    assert all(p.grad is not None for p in net.parameters())


def test_ablation_table_counts():
    rows = ablation_table(NetworkConfig.tiny())
    assert [r["row"] for r in rows] == list(ABLATION_ROWS)
    n = {r["row"]: r["params"] for r in rows}
    assert n["sr+as"] > n["sr"]  # atrous step 2 adds per-sub-image projections
    assert n["sr+as+cnn"] > n["sr+as"]
    assert n["all"] > n["sr+as+cnn+se"] > n["sr+as+cnn"]
    assert n["shift"] > n["none"]


def test_unknown_ablation_row():
    with pytest.raises(ConfigError):
        ablation_config("sr+xx")


# -- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path, tiny):
    x = images((1, 3, 64, 64), seed=9)
    before = tiny.predict(x)
    opt = {"m/0": np.arange(4, dtype=np.float32)}
    rng_state = np.random.default_rng(5).bit_generator.state
    path = save_checkpoint(tiny, tmp_path / "c.npz", epoch=3, optimizer_state=opt, optimizer_meta={"step": 7}, rng_state=rng_state)
    net, ck = load_checkpoint(path, expected=tiny.cfg)
    np.testing.assert_array_equal(net.predict(x), before)
    assert ck.epoch == 3 and ck.optimizer_meta == {"step": 7}
    np.testing.assert_array_equal(ck.optimizer_state["m/0"], opt["m/0"])
    restored = np.random.default_rng()
    restored.bit_generator.state = ck.rng_state
    assert restored.random() == np.random.default_rng(5).random()


def test_checkpoint_layout(tmp_path, tiny):
    path = save_checkpoint(tiny, tmp_path / "c.npz")
    with zipfile.ZipFile(path) as z:
        names = z.namelist()
    assert "meta.npy" in names
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes())
        arrays = [z[k] for k in z.files if k != "meta"]
    assert meta["format_version"] == 1 and meta["config"]["variant"] == "tiny"
    assert all(a.dtype == np.dtype("<f4") for a in arrays)


def test_checkpoint_config_mismatch_lists_fields(tmp_path, tiny):
    path = save_checkpoint(tiny, tmp_path / "c.npz")
    other = NetworkConfig.tiny(input_size=(64, 64), atrous_step=3)
    with pytest.raises(ConfigError, match="atrous_step: checkpoint=2 expected=3"):
        load_checkpoint(path, expected=other)


def test_checkpoint_errors(tmp_path, tiny):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "missing.npz")
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(bad)
    path = save_checkpoint(tiny, tmp_path / "c.npz")
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(arrays["meta"].tobytes())
    meta["format_version"] = 99
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(tmp_path / "v.npz", **arrays)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v.npz")
    del arrays[next(k for k in arrays if k.startswith("param/"))]
    meta["format_version"] = 1
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(tmp_path / "p.npz", **arrays)
    with pytest.raises(CheckpointError, match="do not match"):
        load_checkpoint(tmp_path / "p.npz")
