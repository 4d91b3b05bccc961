"""Acceptance suite: one verdict line per criterion.

Each test prints "[PASS]"/"[FAIL] <criterion>: <numbers>" before its
asserts, so the measured values are reported even when a criterion is
not met. The forgetting-ordering experiment additionally prints every
per-seed value; it is the only criterion whose outcome depends on
training dynamics rather than arithmetic.
"""

import time
from dataclasses import replace

import numpy as np

from streamcl.autoencoder import ArchSpec, Autoencoder, param_count
from streamcl.config import RunConfig
from streamcl.fieldsim import FieldFrame, SimConfig
from streamcl.metrics import memory_overhead, ssim3d
from streamcl.protocol import (
    MessageKind,
    Scheduler,
    StreamMessage,
    control_message,
    decode_message,
    encode_message,
    frame_message,
)
from streamcl.producer import producer_session
from streamcl.runner import run_experiment
from streamcl.strategies import StrategyKind, project_gradient, project_layerwise
from streamcl.transport import handshake_trainer, inproc_pair


def _verdict(name: str, ok: bool, detail: str) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


# ----------------------------------------------------------------------
# 1. Projection soundness
# ----------------------------------------------------------------------


def test_projection_soundness_bulk():
    t0 = time.monotonic()
    rng = np.random.default_rng(2024)
    n_pairs = 100_000
    # log-uniform dims cover 1..4096; the extremes are forced in
    dims = np.unique(
        np.concatenate(
            [
                [1, 2, 4096],
                np.exp(rng.uniform(0.0, np.log(4096.0), n_pairs)).astype(int),
            ]
        )
    )
    fired = non_fired = 0
    worst = 0.0
    count = 0
    while count < n_pairs:
        d = int(dims[count % len(dims)])
        g = rng.standard_normal(d)
        g_ref = rng.standard_normal(d)
        out = project_gradient(g, g_ref)
        if out is g:
            non_fired += 1
            assert float(np.dot(g, g_ref)) >= 0.0 or float(np.dot(g_ref, g_ref)) < 1e-12
        else:
            fired += 1
            bound = 1e-9 * np.linalg.norm(g) * np.linalg.norm(g_ref)
            residual = abs(float(np.dot(out, g_ref)))
            worst = max(worst, residual / bound if bound > 0 else 0.0)
            assert residual <= bound
        count += 1
    elapsed = time.monotonic() - t0
    ok = fired > 0 and non_fired > 0 and elapsed < 30.0
    assert _verdict(
        "projection soundness",
        ok,
        f"{n_pairs} pairs, {fired} fired / {non_fired} passthrough, "
        f"worst residual {worst:.3e} of the 1e-9 bound, {elapsed:.1f}s",
    )


# ----------------------------------------------------------------------
# 2. Layerwise consistency
# ----------------------------------------------------------------------


def test_layerwise_consistency_bulk():
    t0 = time.monotonic()
    rng = np.random.default_rng(7)

    for _ in range(10_000):
        d = int(rng.integers(1, 257))
        g = rng.standard_normal(d)
        g_ref = rng.standard_normal(d)
        lw = project_layerwise(g, g_ref, [("all", 0, d)])
        gl = project_gradient(g, g_ref)
        assert lw.tobytes() == gl.tobytes()

    mixed_checked = 0
    for _ in range(1_000):
        n_seg = int(rng.integers(2, 6))
        sizes = rng.integers(1, 32, size=n_seg)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        total = int(sizes.sum())
        part = [(f"s{i}", int(offsets[i]), int(sizes[i])) for i in range(n_seg)]
        g = rng.standard_normal(total)
        g_ref = rng.standard_normal(total)
        out = project_layerwise(g, g_ref, part)
        for name, off, size in part:
            seg, ref = g[off : off + size], g_ref[off : off + size]
            expected = project_gradient(seg, ref)
            if expected is seg:
                assert out[off : off + size].tobytes() == seg.tobytes()
            else:
                mixed_checked += 1
                assert out[off : off + size].tobytes() == expected.tobytes()
    elapsed = time.monotonic() - t0
    ok = mixed_checked > 0 and elapsed < 10.0
    assert _verdict(
        "layerwise consistency",
        ok,
        f"10000 single-segment cases bit-equal, 1000 multi-segment cases "
        f"({mixed_checked} projected segments verified), {elapsed:.1f}s",
    )


# ----------------------------------------------------------------------
# 3. Gradient finite-difference oracle
# ----------------------------------------------------------------------


def _fd_gradient(loss_fn, params, h=1e-6):
    out = np.empty_like(params.flat)
    for i in range(params.flat.size):
        plus = params.copy()
        plus.flat[i] += h
        minus = params.copy()
        minus.flat[i] -= h
        out[i] = (loss_fn(plus) - loss_fn(minus)) / (2.0 * h)
    return out


def test_gradient_finite_difference_oracle():
    t0 = time.monotonic()
    tiny = ArchSpec(input_dim=4, conv_channels=(2,), latent_dim=2)
    model = Autoencoder(tiny)
    worst = 0.0
    for draw in range(20):
        rng = np.random.default_rng(1000 + draw)
        params = model.init_params(seed=draw)
        params.flat += 0.05 * rng.standard_normal(params.flat.size)
        x = rng.standard_normal((4, 4, 4))
        e = np.tanh(rng.standard_normal(2))

        _, g = model.recon_loss_and_grad(params, [x])
        fd = _fd_gradient(lambda p: model.recon_loss(p, [x]), params)
        rel = float(np.max(np.abs(fd - g)) / max(np.max(np.abs(fd)), 1e-12))
        worst = max(worst, rel)

        _, g = model.latent_cycle_loss_and_grad(params, [e])
        fd = _fd_gradient(lambda p: model.latent_cycle_loss(p, [e]), params)
        rel = float(np.max(np.abs(fd - g)) / max(np.max(np.abs(fd)), 1e-12))
        worst = max(worst, rel)
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-4 and elapsed < 120.0
    assert _verdict(
        "gradient oracle",
        ok,
        f"20 draws x 2 losses x {param_count(tiny)} coordinates, "
        f"worst relative error {worst:.3e} (bound 1e-4), {elapsed:.1f}s",
    )


# ----------------------------------------------------------------------
# 4. SSIM oracle
# ----------------------------------------------------------------------


def _ssim_direct(x, y, data_range):
    w1 = np.exp(-((np.arange(7) - 3.0) ** 2) / (2.0 * 1.5**2))
    w1 /= w1.sum()
    w = w1[:, None, None] * w1[None, :, None] * w1[None, None, :]
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    d = x.shape[0]
    vals = []
    for i in range(d - 6):
        for j in range(d - 6):
            for k in range(d - 6):
                xa = x[i : i + 7, j : j + 7, k : k + 7]
                ya = y[i : i + 7, j : j + 7, k : k + 7]
                mx, my = float((w * xa).sum()), float((w * ya).sum())
                vx = float((w * xa * xa).sum()) - mx * mx
                vy = float((w * ya * ya).sum()) - my * my
                cxy = float((w * xa * ya).sum()) - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
    return float(np.mean(vals))


def test_ssim_reference_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(99)
    worst_pair = 0.0
    for _ in range(50):
        x = rng.standard_normal((8, 8, 8))
        y = x + rng.uniform(0.05, 1.5) * rng.standard_normal((8, 8, 8))
        r = float(x.max() - x.min())
        worst_pair = max(worst_pair, abs(ssim3d(x, y) - _ssim_direct(x, y, r)))
    worst_self = max(
        abs(ssim3d(z, z) - 1.0)
        for z in (rng.standard_normal((8, 8, 8)) for _ in range(10))
    )
    elapsed = time.monotonic() - t0
    ok = worst_pair < 1e-6 and worst_self < 1e-9 and elapsed < 60.0
    assert _verdict(
        "ssim oracle",
        ok,
        f"50 pairs, worst deviation {worst_pair:.3e} (bound 1e-6); "
        f"self-similarity off by {worst_self:.3e} (bound 1e-9), {elapsed:.1f}s",
    )


# ----------------------------------------------------------------------
# 5. Protocol integrity
# ----------------------------------------------------------------------


def _random_message(rng):
    roll = rng.integers(0, 4)
    if roll == 0:
        kind = [MessageKind.HELLO, MessageKind.PAUSE, MessageKind.RESUME, MessageKind.END][
            int(rng.integers(0, 4))
        ]
        return control_message(kind)
    dims = tuple(int(d) for d in rng.integers(1, 7, size=3))
    vals = rng.standard_normal(dims).astype(np.float32)
    return frame_message(FieldFrame(int(rng.integers(0, 1000)), dims, vals))


def _stream_once(sim, capacity, rng):
    """Trainer loop that drains at random times; returns (steps, pause audit ok)."""
    prod_end, train_end = inproc_pair()
    train_end.set_pump(producer_session(sim, prod_end))
    sched = Scheduler(capacity)
    handshake_trainer(train_end)
    delivered = []
    ended = False
    pause_audit = True
    while not ended or sched.cache:
        can_recv = not ended and not sched.is_full
        do_drain = bool(sched.cache) and (not can_recv or rng.random() < 0.4)
        if do_drain:
            frames, ctl = sched.drain()
            delivered.extend(f.step_index for f in frames)
            if ctl is not None:
                train_end.send_message(StreamMessage(ctl))
        else:
            msg = train_end.recv_message()
            if msg.kind == MessageKind.FRAME:
                was = len(sched.cache)
                ctl = sched.push(msg.frame)
                # PAUSE must fire exactly when this push reached capacity
                if (ctl == MessageKind.PAUSE) != (was + 1 == capacity):
                    pause_audit = False
                if ctl is not None:
                    train_end.send_message(StreamMessage(ctl))
            elif msg.kind == MessageKind.END:
                ended = True
            else:
                pause_audit = False
    train_end.close()
    return delivered, pause_audit


def test_protocol_stream_integrity():
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    codec_ok = 0
    for _ in range(1000):
        msg = _random_message(rng)
        out = decode_message(encode_message(msg))
        assert out.kind == msg.kind
        if msg.kind == MessageKind.FRAME:
            assert out.frame.step_index == msg.frame.step_index
            assert out.frame.dims == msg.frame.dims
            assert out.frame.values.tobytes() == msg.frame.values.tobytes()
        codec_ok += 1

    sim = SimConfig(grid_size=8, steps=10)
    trials = 0
    for capacity in (1, 2, 3, 4):
        for trial in range(5):
            delivered, pause_ok = _stream_once(
                sim, capacity, np.random.default_rng(capacity * 100 + trial)
            )
            assert delivered == list(range(10)), (capacity, trial, delivered)
            assert pause_ok, (capacity, trial)
            trials += 1
    elapsed = time.monotonic() - t0
    ok = codec_ok == 1000 and elapsed < 30.0
    assert _verdict(
        "protocol integrity",
        ok,
        f"{codec_ok} codec round-trips bit-exact; {trials} randomized-drain streams "
        f"delivered steps 0..9 exactly once in order with PAUSE iff full, {elapsed:.1f}s",
    )


# ----------------------------------------------------------------------
# 6. Memory-overhead accounting
# ----------------------------------------------------------------------


def test_memory_overhead_accounting():
    sim32 = SimConfig(grid_size=32)
    arch_l64 = ArchSpec(input_dim=32, latent_dim=64)
    default_arch = ArchSpec()
    naive = memory_overhead(StrategyKind("naive"), default_arch, SimConfig(), 10)
    agem = memory_overhead(StrategyKind("agem"), arch_l64, sim32, 10)
    latent = memory_overhead(StrategyKind("latent_agem"), arch_l64, sim32, 10)
    ewc = memory_overhead(StrategyKind("online_ewc"), default_arch, SimConfig(), 10)
    ok = (
        naive == 0
        and agem == 1_310_720
        and latent == 2_560
        and agem == 512 * latent
        and latent < ewc < agem
    )
    assert _verdict(
        "memory overhead accounting",
        ok,
        f"naive={naive} B, replay(M=10, 32^3 fields)={agem} B, "
        f"latent replay(M=10, 64-d codes)={latent} B (ratio {agem // latent}:1), "
        f"fisher+anchor={ewc} B; ordering latent < fisher < raw replay",
    )


# ----------------------------------------------------------------------
# 7. Forgetting mitigation ordering (training dynamics; soft criterion)
# ----------------------------------------------------------------------


def test_forgetting_mitigation_ordering(tmp_path):
    t0 = time.monotonic()
    contenders = [
        ("naive", StrategyKind("naive")),
        ("agem", StrategyKind("agem")),
        ("latent_agem_layerwise", StrategyKind("latent_agem", projection="layerwise")),
    ]
    seeds = (0, 1, 2)
    per_seed: dict[str, list[float]] = {}
    for label, kind in contenders:
        vals = []
        for seed in seeds:
            cfg = replace(RunConfig(), strategy=kind, seed=seed)
            report = run_experiment(cfg, out_dir=str(tmp_path / f"{label}_seed{seed}"))
            vals.append(report.avg_l1)
        per_seed[label] = vals
    means = {label: float(np.mean(vals)) for label, vals in per_seed.items()}
    elapsed = time.monotonic() - t0

    for label in per_seed:
        joined = ", ".join(f"{v:.5f}" for v in per_seed[label])
        print(f"  {label}: avg_l1 per seed [{joined}], mean {means[label]:.5f}")
    margin_agem = (means["naive"] - means["agem"]) / means["naive"]
    margin_latent = (means["naive"] - means["latent_agem_layerwise"]) / means["naive"]
    print(f"  raw-replay margin vs naive: {100 * margin_agem:+.1f}% (need >= +10%)")
    print(f"  latent-replay margin vs naive: {100 * margin_latent:+.1f}% (need >= +10%)")

    ok = margin_agem >= 0.10 and margin_latent >= 0.10
    assert _verdict(
        "forgetting mitigation ordering",
        ok,
        f"naive {means['naive']:.5f} vs raw replay {means['agem']:.5f} "
        f"({100 * margin_agem:+.1f}%) and latent replay "
        f"{means['latent_agem_layerwise']:.5f} ({100 * margin_latent:+.1f}%), "
        f"{elapsed:.0f}s",
    )


# ----------------------------------------------------------------------
# 8. Determinism
# ----------------------------------------------------------------------


def test_run_determinism(tmp_path):
    cfg = RunConfig()
    run_experiment(cfg, out_dir=str(tmp_path / "first"))
    run_experiment(cfg, out_dir=str(tmp_path / "second"))
    blobs = []
    for sub in ("first", "second"):
        with open(tmp_path / sub / "summary.csv", "rb") as fh:
            blobs.append(fh.read())
    ok = blobs[0] == blobs[1]
    assert _verdict(
        "determinism",
        ok,
        f"two identical default runs, summary CSVs byte-identical: {ok}",
    )
