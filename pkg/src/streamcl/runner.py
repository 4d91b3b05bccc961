"""Experiment orchestration: stream, schedule, train, evaluate, report.

The trainer owns the frame cache and reads from the transport only while
the cache has room, so PAUSE (sent by the push that fills the cache)
bounds how far the producer runs ahead. Drains happen only on a full
cache or at END, which makes task composition independent of transport
timing: every run of the same configuration trains on identical batches
in identical order, whether the producer is an in-process generator or a
socket peer in another thread.

Each drained frame is one task: `epochs_per_task` optimizer steps on
that single frame, then task-boundary bookkeeping (replay payload
insertion or Fisher refresh). Evaluation happens once after END, on
float32-rounded parameters (exactly what a checkpoint reload would
give), against ground-truth frames the training loop never read.
"""

from __future__ import annotations

import json
import os
import socket
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import AdamState, Autoencoder, param_count
from .checkpoint import round_trip_f32, save_checkpoint
from .config import RunConfig
from .errors import NumericFailureError, ProtocolError, StreamCLError, TransportError
from .fieldsim import FieldFrame, SimConfig, generate_frame
from .kernels import backend_name
from .metrics import MetricsReport, l1_metric, memory_overhead, ssim3d, write_per_task_csv, write_summary_csv
from .producer import producer_main, producer_session
from .protocol import MessageKind, Scheduler, StreamMessage
from .strategies import (
    EpisodicMemory,
    FisherState,
    StrategyKind,
    memory_insert,
    save_memory,
    strategy_step,
    update_fisher,
)
from .transport import TcpTransport, Transport, handshake_trainer, inproc_pair


@dataclass
class EvalStore:
    """Ground-truth frames held back for final evaluation.

    Reads are counted so the runner can prove the training loop never
    looked at them: the audit counter must still be zero when evaluation
    starts.
    """

    frames: list[FieldFrame] = field(default_factory=list)
    read_count: int = 0

    def append(self, frame: FieldFrame) -> None:
        self.frames.append(frame)

    def snapshot(self) -> list[FieldFrame]:
        self.read_count += 1
        return list(self.frames)


def normalization_scale(sim: SimConfig, cache_capacity: int) -> float:
    """Scale the run derives from its first drained cache, regenerated offline.

    The first drain holds the first min(cache_capacity, steps) frames, so
    re-simulating them reproduces the training-time scale bit for bit.
    """
    peak = 0.0
    for t in range(min(cache_capacity, sim.steps)):
        peak = max(peak, float(np.max(np.abs(generate_frame(sim, t).values))))
    return peak if peak > 0.0 else 1.0


def _open_transport(cfg: RunConfig) -> tuple[Transport, threading.Thread | None, list[BaseException]]:
    """Trainer-side transport, plus the producer thread when one exists."""
    if cfg.transport == "inproc":
        prod_end, train_end = inproc_pair()
        train_end.set_pump(producer_session(cfg.sim, prod_end))
        return train_end, None, []

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    port = listener.getsockname()[1]
    errors: list[BaseException] = []

    def serve() -> None:
        peer = TcpTransport(socket.create_connection(("127.0.0.1", port)))
        try:
            producer_main(cfg.sim, peer)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)
        finally:
            peer.close()

    thread = threading.Thread(target=serve, name="streamcl-producer", daemon=True)
    thread.start()
    conn, _ = listener.accept()
    listener.close()
    return TcpTransport(conn), thread, errors


def _run_stream_training(cfg: RunConfig, transport: Transport):
    """Consume the stream, training each frame as a task; returns final state."""
    model = Autoencoder(cfg.arch)
    params = model.init_params(cfg.seed)
    opt_state = AdamState.zeros(param_count(cfg.arch))
    rng = np.random.default_rng([cfg.seed, 1])

    kind = cfg.strategy
    mem = EpisodicMemory(cfg.memory_capacity, kind.memory_kind) if kind.uses_memory else None
    fs = (
        FisherState.fresh(param_count(cfg.arch), cfg.ewc_gamma, cfg.ewc_lambda)
        if kind.name == "online_ewc"
        else None
    )

    sched = Scheduler(cfg.cache_capacity)
    store = EvalStore()
    scale = None
    trained_steps: list[int] = []
    ended = False

    handshake_trainer(transport)
    while True:
        while not sched.is_full and not ended:
            msg = transport.recv_message()
            if msg.kind == MessageKind.FRAME:
                ctl = sched.push(msg.frame)
                if ctl is not None:
                    transport.send_message(StreamMessage(ctl))
            elif msg.kind == MessageKind.END:
                ended = True
            else:
                raise ProtocolError(f"unexpected {msg.kind.name} from producer")
        if sched.cache:
            frames, ctl = sched.drain()
            if ctl is not None:
                transport.send_message(StreamMessage(ctl))
            if scale is None:
                peak = max(float(np.max(np.abs(f.values))) for f in frames)
                scale = peak if peak > 0.0 else 1.0
            for frame in frames:
                x = frame.values.astype(np.float64) / scale
                for _ in range(cfg.epochs_per_task):
                    params, opt_state, mem, fs = strategy_step(
                        kind, model, params, opt_state, [x], mem, fs, rng, cfg.adam,
                        ref_batch=cfg.ref_batch,
                    )
                if kind.name == "agem":
                    memory_insert(mem, frame.step_index, x)
                elif kind.name == "latent_agem":
                    memory_insert(mem, frame.step_index, model.encode(params, x))
                elif kind.name == "online_ewc":
                    fs = update_fisher(fs, model, params, [x])
                store.append(frame)
                trained_steps.append(frame.step_index)
        if ended:
            break

    if trained_steps != list(range(cfg.sim.steps)):
        raise ProtocolError(
            f"trained steps {trained_steps} != expected 0..{cfg.sim.steps - 1} exactly once"
        )
    return model, params, mem, fs, store, scale


def evaluate_params(
    model: Autoencoder, params, frames: list[FieldFrame], scale: float
) -> list[tuple[int, float, float]]:
    """Per-task (step_index, l1, ssim) against raw ground truth."""
    rows = []
    for frame in frames:
        truth = frame.values.astype(np.float64)
        recon = model.reconstruct(params, truth / scale) * scale
        rows.append((frame.step_index, l1_metric(truth, recon), ssim3d(truth, recon)))
    return rows


def run_experiment(cfg: RunConfig, out_dir: str | None = None, make_plots: bool = False) -> MetricsReport:
    """Full pipeline: stream + train, then evaluate and write artifacts."""
    if out_dir is None:
        out_dir = os.path.join(cfg.out_dir, f"{cfg.strategy.label}_seed{cfg.seed}")
    os.makedirs(out_dir, exist_ok=True)

    transport, thread, thread_errors = _open_transport(cfg)
    try:
        model, params, mem, fs, store, scale = _run_stream_training(cfg, transport)
    finally:
        transport.close()
        if thread is not None:
            thread.join(timeout=10.0)
    if thread_errors:
        raise TransportError(f"producer thread failed: {thread_errors[0]}") from thread_errors[0]

    if store.read_count != 0:
        raise RuntimeError("evaluation store was read during training")
    eval_params = round_trip_f32(params)
    per_task = evaluate_params(model, eval_params, store.snapshot(), scale)

    report = MetricsReport(
        strategy=cfg.strategy.label,
        seed=cfg.seed,
        config_digest=cfg.digest(),
        per_task=per_task,
        mem_overhead_bytes=memory_overhead(cfg.strategy, cfg.arch, cfg.sim, cfg.memory_capacity),
    )

    save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), params)
    if mem is not None:
        save_memory(os.path.join(out_dir, "memory.bin"), mem)
    write_per_task_csv(os.path.join(out_dir, "per_task.csv"), report)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), report)
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(
            {
                "strategy": cfg.strategy.label,
                "seed": cfg.seed,
                "config_digest": cfg.digest(),
                "scale": scale,
                "kernel_backend": backend_name(),
                "transport": cfg.transport,
                "tasks": cfg.sim.steps,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    if make_plots:
        from .plots import save_reconstruction_grid

        truths = [f.values.astype(np.float64) for f in store.frames]
        recons = [model.reconstruct(eval_params, t / scale) * scale for t in truths]
        save_reconstruction_grid(
            os.path.join(out_dir, "reconstructions.png"),
            truths,
            recons,
            title=f"{cfg.strategy.label} seed {cfg.seed}",
        )
    return report


def evaluate_checkpoint(cfg: RunConfig, checkpoint_path: str) -> MetricsReport:
    """Re-score saved parameters against the regenerated stream."""
    from .checkpoint import load_checkpoint

    model = Autoencoder(cfg.arch)
    params = load_checkpoint(checkpoint_path, cfg.arch)
    scale = normalization_scale(cfg.sim, cfg.cache_capacity)
    frames = [generate_frame(cfg.sim, t) for t in range(cfg.sim.steps)]
    per_task = evaluate_params(model, params, frames, scale)
    return MetricsReport(
        strategy=cfg.strategy.label,
        seed=cfg.seed,
        config_digest=cfg.digest(),
        per_task=per_task,
        mem_overhead_bytes=memory_overhead(cfg.strategy, cfg.arch, cfg.sim, cfg.memory_capacity),
    )


def compare_strategies(
    base: RunConfig,
    strategies: list[StrategyKind],
    seeds: list[int],
    out_dir: str,
    make_plots: bool = False,
) -> list[tuple[StrategyKind, int, MetricsReport | None]]:
    """Run every strategy over every seed on the same simulated stream.

    A failed run is recorded and skipped, not fatal; the merged CSV marks
    it in the status column so partial comparisons stay visible.
    """
    os.makedirs(out_dir, exist_ok=True)
    results: list[tuple[StrategyKind, int, MetricsReport | None]] = []
    for kind in strategies:
        for seed in seeds:
            cfg = replace(base, strategy=kind, seed=seed, out_dir=out_dir)
            run_dir = os.path.join(out_dir, f"{kind.label}_seed{seed}")
            try:
                report = run_experiment(cfg, out_dir=run_dir, make_plots=make_plots)
            except (StreamCLError, NumericFailureError) as exc:
                print(f"[streamcl] {kind.label} seed {seed} failed: {exc}")
                report = None
            results.append((kind, seed, report))
    write_comparison_csv(os.path.join(out_dir, "comparison.csv"), results)
    return results


def write_comparison_csv(
    path: str, results: list[tuple[StrategyKind, int, MetricsReport | None]]
) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "avg_l1", "avg_ssim", "mem_overhead_bytes", "status"])
        by_strategy: dict[str, list[MetricsReport]] = {}
        overhead: dict[str, int] = {}
        for kind, seed, report in results:
            if report is None:
                writer.writerow([kind.label, seed, "", "", "", "failed"])
                continue
            writer.writerow(
                [kind.label, seed, repr(report.avg_l1), repr(report.avg_ssim),
                 report.mem_overhead_bytes, "ok"]
            )
            by_strategy.setdefault(kind.label, []).append(report)
            overhead[kind.label] = report.mem_overhead_bytes
        for label, reports in by_strategy.items():
            writer.writerow(
                [label, "mean",
                 repr(float(np.mean([r.avg_l1 for r in reports]))),
                 repr(float(np.mean([r.avg_ssim for r in reports]))),
                 overhead[label], "ok"]
            )
