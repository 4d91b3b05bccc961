"""Continual-learning strategies: gradient projection, episodic memory, EWC.

A strategy decides which gradient actually reaches the optimizer each
step. Naive uses the batch gradient as-is; Online-EWC adds a quadratic
anchor penalty weighted by a running diagonal Fisher estimate; the replay
strategies project the batch gradient so it does not conflict with a
reference gradient computed on remembered data (raw frames, or stored
latent codes run through the decoder-encoder cycle). Projection can be
global over the whole flat vector or applied independently per parameter
tensor. All dot products and projections run in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autoencoder import AdamHyper, AdamState, Autoencoder, ParamSet, apply_update
from .errors import ConfigError, NumericFailureError

REF_NORM_GUARD = 1e-12

STRATEGY_NAMES = ("naive", "online_ewc", "agem", "latent_agem")
PROJECTION_MODES = ("global", "layerwise")
CONDITION_VARIANTS = ("standard", "always")


@dataclass(frozen=True)
class StrategyKind:
    """Which protection runs, and how the projection-based ones apply it.

    condition_variant selects when projection fires: "standard" projects
    only when the current and reference gradients conflict (negative dot
    product); "always" applies the projection unconditionally, the literal
    reading of the post-projection condition.
    """

    name: str = "naive"
    projection: str = "global"
    condition_variant: str = "standard"

    def __post_init__(self) -> None:
        if self.name not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {self.name!r}, expected one of {STRATEGY_NAMES}")
        if self.projection not in PROJECTION_MODES:
            raise ConfigError(f"unknown projection mode {self.projection!r}")
        if self.condition_variant not in CONDITION_VARIANTS:
            raise ConfigError(f"unknown condition variant {self.condition_variant!r}")

    @property
    def label(self) -> str:
        if self.name == "latent_agem":
            return f"latent_agem_{self.projection}"
        return self.name

    @property
    def uses_memory(self) -> bool:
        return self.name in ("agem", "latent_agem")

    @property
    def memory_kind(self) -> "MemoryKind | None":
        if self.name == "agem":
            return MemoryKind.RAW_FIELD
        if self.name == "latent_agem":
            return MemoryKind.LATENT
        return None


# ----------------------------------------------------------------------
# Gradient projection
# ----------------------------------------------------------------------


def project_gradient(
    g: np.ndarray, g_ref: np.ndarray, condition_variant: str = "standard"
) -> np.ndarray:
    """Remove the conflicting component of g along g_ref.

    Returns g itself (bit-identical, same object) when the projection does
    not fire: non-negative dot product under the standard condition, or a
    degenerate reference gradient below the norm guard.
    """
    if g.shape != g_ref.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {g_ref.shape}")
    ref_sq = float(np.dot(g_ref, g_ref))
    if ref_sq < REF_NORM_GUARD:
        return g
    dot = float(np.dot(g, g_ref))
    if condition_variant == "standard" and dot >= 0.0:
        return g
    return g - (dot / ref_sq) * g_ref


def project_layerwise(
    g: np.ndarray,
    g_ref: np.ndarray,
    partition: list[tuple[str, int, int]],
    condition_variant: str = "standard",
) -> np.ndarray:
    """Apply project_gradient independently on each partition segment.

    Segments where the projection does not fire are carried over
    bit-identically; if no segment fires, g itself is returned.
    """
    if g.shape != g_ref.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {g_ref.shape}")
    total = sum(size for _, _, size in partition)
    if total != g.shape[0]:
        raise ValueError(f"partition covers {total} entries, gradient has {g.shape[0]}")
    out = None
    for _, offset, size in partition:
        seg = g[offset : offset + size]
        proj = project_gradient(seg, g_ref[offset : offset + size], condition_variant)
        if proj is not seg:
            if out is None:
                out = g.copy()
            out[offset : offset + size] = proj
    return g if out is None else out


# ----------------------------------------------------------------------
# Episodic memory
# ----------------------------------------------------------------------


class MemoryKind(Enum):
    RAW_FIELD = 0
    LATENT = 1


@dataclass
class EpisodicMemory:
    """Capacity-bounded FIFO of (task_id, payload) replay items."""

    capacity: int
    kind: MemoryKind
    items: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigError(f"memory capacity must be >= 1, got {self.capacity}")

    def __len__(self) -> int:
        return len(self.items)


def _check_payload(kind: MemoryKind, payload: np.ndarray) -> np.ndarray:
    payload = np.asarray(payload)
    if kind == MemoryKind.RAW_FIELD and payload.ndim != 3:
        raise ValueError(f"raw-field memory expects 3D payloads, got ndim={payload.ndim}")
    if kind == MemoryKind.LATENT and payload.ndim != 1:
        raise ValueError(f"latent memory expects 1D payloads, got ndim={payload.ndim}")
    return payload.astype(np.float32)


def memory_insert(mem: EpisodicMemory, task_id: int, payload: np.ndarray) -> EpisodicMemory:
    """FIFO append, evicting the oldest item at capacity. Mutates and returns mem."""
    payload = _check_payload(mem.kind, payload)
    mem.items.append((task_id, payload))
    if len(mem.items) > mem.capacity:
        mem.items.pop(0)
    return mem


def memory_sample(mem: EpisodicMemory, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """n payloads sampled uniformly with replacement."""
    if len(mem.items) == 0:
        raise ValueError("cannot sample from an empty memory")
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    idx = rng.integers(0, len(mem.items), size=n)
    return [mem.items[i][1] for i in idx]


def agem_reference_gradient(
    model: Autoencoder, params: ParamSet, mem: EpisodicMemory, n: int, rng: np.random.Generator
) -> np.ndarray:
    if mem.kind != MemoryKind.RAW_FIELD:
        raise ValueError(f"expected raw-field memory, got {mem.kind}")
    batch = [p.astype(np.float64) for p in memory_sample(mem, n, rng)]
    return model.grad_recon(params, batch)


def latent_agem_reference_gradient(
    model: Autoencoder, params: ParamSet, mem: EpisodicMemory, n: int, rng: np.random.Generator
) -> np.ndarray:
    if mem.kind != MemoryKind.LATENT:
        raise ValueError(f"expected latent memory, got {mem.kind}")
    latents = [p.astype(np.float64) for p in memory_sample(mem, n, rng)]
    return model.grad_latent_cycle(params, latents)


# ----------------------------------------------------------------------
# Online-EWC
# ----------------------------------------------------------------------


@dataclass
class FisherState:
    """Running diagonal Fisher estimate with the anchor parameters it weights."""

    fisher: np.ndarray
    anchor: np.ndarray
    decay: float
    strength: float

    @classmethod
    def fresh(cls, n: int, decay: float, strength: float) -> "FisherState":
        if not 0.0 <= decay <= 1.0:
            raise ConfigError(f"EWC decay must be in [0, 1], got {decay}")
        if strength < 0.0:
            raise ConfigError(f"EWC strength must be >= 0, got {strength}")
        return cls(
            fisher=np.zeros(n, dtype=np.float64),
            anchor=np.zeros(n, dtype=np.float64),
            decay=decay,
            strength=strength,
        )


def update_fisher(
    fs: FisherState, model: Autoencoder, params: ParamSet, batch: list[np.ndarray]
) -> FisherState:
    """Decay the running estimate and add the batch-mean squared per-sample gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    sq = np.zeros_like(fs.fisher)
    for x in batch:
        g = model.grad_recon(params, [x])
        sq += g**2
    fisher = fs.decay * fs.fisher + sq / len(batch)
    return FisherState(fisher=fisher, anchor=params.flat.copy(), decay=fs.decay, strength=fs.strength)


def ewc_regularized_gradient(g: np.ndarray, params: ParamSet, fs: FisherState) -> np.ndarray:
    """g plus the gradient of the quadratic anchor penalty, elementwise."""
    if g.shape != params.flat.shape or fs.fisher.shape != g.shape:
        raise ValueError("gradient / parameter / fisher shapes do not align")
    return g + fs.strength * fs.fisher * (params.flat - fs.anchor)


# ----------------------------------------------------------------------
# One optimization step under a strategy
# ----------------------------------------------------------------------


def strategy_step(
    kind: StrategyKind,
    model: Autoencoder,
    params: ParamSet,
    opt_state: AdamState,
    batch: list[np.ndarray],
    mem: EpisodicMemory | None,
    fs: FisherState | None,
    rng: np.random.Generator,
    hyper: AdamHyper,
    ref_batch: int = 10,
) -> tuple[ParamSet, AdamState, EpisodicMemory | None, FisherState | None]:
    """One Adam step on the strategy-adjusted reconstruction gradient.

    Memory and Fisher state pass through unchanged; their updates happen
    at task boundaries in the runner. With an empty or missing memory the
    replay strategies fall back to the plain gradient (first task).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    loss, g = model.recon_loss_and_grad(params, batch)
    if not np.isfinite(loss):
        raise NumericFailureError(f"non-finite reconstruction loss {loss}")
    if kind.name == "online_ewc":
        if fs is None:
            raise ConfigError("online_ewc requires FisherState")
        g = ewc_regularized_gradient(g, params, fs)
    elif kind.uses_memory and mem is not None and len(mem) > 0:
        if mem.kind != kind.memory_kind:
            raise ConfigError(f"strategy {kind.name} cannot use {mem.kind} memory")
        n = min(ref_batch, len(mem))
        if kind.name == "agem":
            g_ref = agem_reference_gradient(model, params, mem, n, rng)
            g = project_gradient(g, g_ref, kind.condition_variant)
        else:
            g_ref = latent_agem_reference_gradient(model, params, mem, n, rng)
            if kind.projection == "layerwise":
                g = project_layerwise(g, g_ref, params.partition, kind.condition_variant)
            else:
                g = project_gradient(g, g_ref, kind.condition_variant)
    params, opt_state = apply_update(params, g, opt_state, hyper)
    return params, opt_state, mem, fs


# ----------------------------------------------------------------------
# Memory serialization (checkpoint/resume)
# ----------------------------------------------------------------------

MEM_HEADER = b"STREAMCL-MEM v1"


def save_memory(path: str, mem: EpisodicMemory) -> None:
    with open(path, "wb") as fh:
        fh.write(MEM_HEADER + b"\n")
        fh.write(struct.pack("<B", mem.kind.value))
        fh.write(struct.pack("<I", len(mem.items)))
        for task_id, payload in mem.items:
            flat = np.ascontiguousarray(payload, dtype="<f4").ravel()
            fh.write(struct.pack("<II", task_id, flat.size))
            fh.write(flat.tobytes())


def load_memory(path: str, capacity: int) -> EpisodicMemory:
    with open(path, "rb") as fh:
        data = fh.read()
    prefix = MEM_HEADER + b"\n"
    if not data.startswith(prefix):
        raise ConfigError("bad episodic-memory header")
    pos = len(prefix)
    (kind_byte,) = struct.unpack_from("<B", data, pos)
    pos += 1
    try:
        kind = MemoryKind(kind_byte)
    except ValueError:
        raise ConfigError(f"unknown memory kind byte {kind_byte}") from None
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    mem = EpisodicMemory(capacity=capacity, kind=kind)
    for _ in range(count):
        task_id, size = struct.unpack_from("<II", data, pos)
        pos += 8
        values = np.frombuffer(data, dtype="<f4", count=size, offset=pos).copy()
        pos += 4 * size
        if kind == MemoryKind.RAW_FIELD:
            d = round(size ** (1 / 3))
            if d**3 != size:
                raise ConfigError(f"raw-field payload size {size} is not a cube")
            values = values.reshape(d, d, d)
        memory_insert(mem, task_id, values)
    if pos != len(data):
        raise ConfigError("trailing bytes in episodic-memory file")
    return mem
