"""3D convolutional autoencoder with an explicit flat parameter vector.

Every parameter tensor lives in one float64 vector at a fixed offset, so
gradients are plain aligned vectors and the per-layer partition needed by
layerwise gradient projection falls out of the layout for free. Encoder:
stride-2 kernel-3 zero-pad-1 conv stages, then a dense layer to the
latent vector. Decoder mirrors the encoder with transposed convolutions
built as exact adjoints of the encoder geometry; the final layer is
linear, every other layer is followed by tanh. Forward and backward
passes are written against the three kernel primitives in
`streamcl.kernels`, so the compiled backend accelerates both.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels as K
from .errors import ConfigError, NumericFailureError

KERNEL = 3
STRIDE = 2
PAD = 1


@dataclass(frozen=True)
class ArchSpec:
    input_dim: int = 16
    conv_channels: tuple[int, ...] = (8, 16, 32)
    latent_dim: int = 32

    def __post_init__(self) -> None:
        if self.input_dim < 2:
            raise ConfigError(f"input_dim must be >= 2, got {self.input_dim}")
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ConfigError(f"conv_channels must be positive, got {self.conv_channels}")
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1, got {self.latent_dim}")
        n = len(self.conv_channels)
        if self.input_dim % (2**n) != 0:
            raise ConfigError(
                f"input_dim {self.input_dim} not divisible by 2^{n} conv stages"
            )

    @property
    def n_stages(self) -> int:
        return len(self.conv_channels)

    @property
    def bottleneck_dim(self) -> int:
        return self.input_dim // (2 ** self.n_stages)

    @property
    def bottleneck_features(self) -> int:
        return self.conv_channels[-1] * self.bottleneck_dim**3


@dataclass(frozen=True)
class ParamSlot:
    name: str
    shape: tuple[int, ...]
    offset: int
    size: int
    fan_in: int | None  # None for biases


@lru_cache(maxsize=None)
def layout(arch: ArchSpec) -> tuple[ParamSlot, ...]:
    """Canonical parameter layout, in forward order."""
    slots: list[ParamSlot] = []
    offset = 0

    def add(name: str, shape: tuple[int, ...], fan_in: int | None) -> None:
        nonlocal offset
        size = int(np.prod(shape))
        slots.append(ParamSlot(name, shape, offset, size, fan_in))
        offset += size

    c_in = 1
    for i, c_out in enumerate(arch.conv_channels):
        add(f"enc_conv{i}.weight", (c_out, c_in, KERNEL, KERNEL, KERNEL), c_in * KERNEL**3)
        add(f"enc_conv{i}.bias", (c_out,), None)
        c_in = c_out
    feats = arch.bottleneck_features
    add("enc_fc.weight", (arch.latent_dim, feats), feats)
    add("enc_fc.bias", (arch.latent_dim,), None)
    add("dec_fc.weight", (feats, arch.latent_dim), arch.latent_dim)
    add("dec_fc.bias", (feats,), None)
    dec_out = arch.conv_channels[-2::-1] + (1,)
    c_in = arch.conv_channels[-1]
    for i, c_out in enumerate(dec_out):
        # Transposed conv weights keep input channels first.
        add(f"dec_conv{i}.weight", (c_in, c_out, KERNEL, KERNEL, KERNEL), c_in * KERNEL**3)
        add(f"dec_conv{i}.bias", (c_out,), None)
        c_in = c_out
    return tuple(slots)


def param_count(arch: ArchSpec) -> int:
    slots = layout(arch)
    return slots[-1].offset + slots[-1].size


@dataclass
class ParamSet:
    """All parameters as one float64 vector plus the layout that indexes it."""

    arch: ArchSpec
    flat: np.ndarray

    def __post_init__(self) -> None:
        expected = param_count(self.arch)
        if self.flat.shape != (expected,):
            raise ConfigError(f"flat vector has shape {self.flat.shape}, expected ({expected},)")

    @property
    def partition(self) -> list[tuple[str, int, int]]:
        return [(s.name, s.offset, s.size) for s in layout(self.arch)]

    def tensor(self, name: str) -> np.ndarray:
        for s in layout(self.arch):
            if s.name == name:
                return self.flat[s.offset : s.offset + s.size].reshape(s.shape)
        raise KeyError(name)

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {s.name: self.tensor(s.name).copy() for s in layout(self.arch)}

    @classmethod
    def from_tensors(cls, arch: ArchSpec, tensors: dict[str, np.ndarray]) -> "ParamSet":
        flat = np.empty(param_count(arch), dtype=np.float64)
        for s in layout(arch):
            t = np.asarray(tensors[s.name], dtype=np.float64)
            if t.shape != s.shape:
                raise ConfigError(f"tensor {s.name} has shape {t.shape}, expected {s.shape}")
            flat[s.offset : s.offset + s.size] = t.ravel()
        return cls(arch, flat)

    def copy(self) -> "ParamSet":
        return ParamSet(self.arch, self.flat.copy())


def _pad1(x: np.ndarray) -> np.ndarray:
    c, d = x.shape[0], x.shape[1]
    out = np.zeros((c, d + 2 * PAD, d + 2 * PAD, d + 2 * PAD), dtype=np.float64)
    out[:, PAD:-PAD, PAD:-PAD, PAD:-PAD] = x
    return out


class Autoencoder:
    """Stateless network; all state lives in the ParamSet passed to each call."""

    def __init__(self, arch: ArchSpec) -> None:
        self.arch = arch
        self._slots = {s.name: s for s in layout(arch)}

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def init_params(self, seed: int) -> ParamSet:
        """Fan-in-scaled uniform weights, zero biases; deterministic per seed."""
        rng = np.random.default_rng(seed)
        flat = np.zeros(param_count(self.arch), dtype=np.float64)
        for s in layout(self.arch):
            if s.fan_in is not None:
                bound = 1.0 / np.sqrt(s.fan_in)
                flat[s.offset : s.offset + s.size] = rng.uniform(-bound, bound, s.size)
        return ParamSet(self.arch, flat)

    def _t(self, params: ParamSet, name: str) -> np.ndarray:
        s = self._slots[name]
        return params.flat[s.offset : s.offset + s.size].reshape(s.shape)

    def _acc(self, grad: np.ndarray, name: str, value: np.ndarray) -> None:
        s = self._slots[name]
        grad[s.offset : s.offset + s.size] += value.ravel()

    # ------------------------------------------------------------------
    # Forward passes (with caches for backprop)
    # ------------------------------------------------------------------

    def _enc_forward(self, params: ParamSet, x: np.ndarray) -> tuple[np.ndarray, dict]:
        if x.shape != (self.arch.input_dim,) * 3:
            raise ValueError(f"input shape {x.shape}, expected {(self.arch.input_dim,) * 3}")
        h = np.asarray(x, dtype=np.float64)[None]
        stages = []
        for i in range(self.arch.n_stages):
            w = self._t(params, f"enc_conv{i}.weight")
            b = self._t(params, f"enc_conv{i}.bias")
            xp = _pad1(h)
            y = K.corr3d(xp, w, STRIDE) + b[:, None, None, None]
            h = np.tanh(y)
            stages.append((xp, h))
        hflat = h.ravel()
        w = self._t(params, "enc_fc.weight")
        b = self._t(params, "enc_fc.bias")
        latent = np.tanh(w @ hflat + b)
        return latent, {"stages": stages, "hflat": hflat, "latent": latent}

    def _dec_forward(self, params: ParamSet, e: np.ndarray) -> tuple[np.ndarray, dict]:
        if e.shape != (self.arch.latent_dim,):
            raise ValueError(f"latent shape {e.shape}, expected ({self.arch.latent_dim},)")
        e = np.asarray(e, dtype=np.float64)
        w = self._t(params, "dec_fc.weight")
        b = self._t(params, "dec_fc.bias")
        a_fc = np.tanh(w @ e + b)
        bd = self.arch.bottleneck_dim
        h = a_fc.reshape(self.arch.conv_channels[-1], bd, bd, bd)
        stages = []
        n = self.arch.n_stages
        for i in range(n):
            w = self._t(params, f"dec_conv{i}.weight")
            b = self._t(params, f"dec_conv{i}.bias")
            o = h.shape[1]
            ypad = K.scatter3d(h, w, STRIDE, 2 * o + 2 * PAD)
            y = ypad[:, PAD : 2 * o + PAD, PAD : 2 * o + PAD, PAD : 2 * o + PAD]
            y = y + b[:, None, None, None]
            a = y if i == n - 1 else np.tanh(y)  # final decoder layer stays linear
            stages.append((h, a))
            h = a
        return h[0], {"e": e, "a_fc": a_fc, "stages": stages}

    # ------------------------------------------------------------------
    # Backward passes
    # ------------------------------------------------------------------

    def _enc_backward(
        self, params: ParamSet, cache: dict, dlatent: np.ndarray, grad: np.ndarray
    ) -> np.ndarray:
        """Accumulate encoder parameter grads; return the input-voxel gradient."""
        latent, hflat = cache["latent"], cache["hflat"]
        gpre = dlatent * (1.0 - latent**2)
        self._acc(grad, "enc_fc.weight", np.outer(gpre, hflat))
        self._acc(grad, "enc_fc.bias", gpre)
        w = self._t(params, "enc_fc.weight")
        gh = w.T @ gpre
        stages = cache["stages"]
        bd = self.arch.input_dim // (2 ** self.arch.n_stages)
        g = gh.reshape(self.arch.conv_channels[-1], bd, bd, bd)
        for i in range(self.arch.n_stages - 1, -1, -1):
            xp, a = stages[i]
            g = g * (1.0 - a**2)
            self._acc(grad, f"enc_conv{i}.bias", g.sum(axis=(1, 2, 3)))
            w = self._t(params, f"enc_conv{i}.weight")
            self._acc(grad, f"enc_conv{i}.weight", K.wgrad3d(g, xp, KERNEL, STRIDE))
            dxp = K.scatter3d(g, w, STRIDE, xp.shape[1])
            g = dxp[:, PAD:-PAD, PAD:-PAD, PAD:-PAD]
        return g[0]

    def _dec_backward(
        self, params: ParamSet, cache: dict, dy: np.ndarray, grad: np.ndarray
    ) -> np.ndarray:
        """Accumulate decoder parameter grads; return the latent gradient."""
        g = dy[None]
        n = self.arch.n_stages
        for i in range(n - 1, -1, -1):
            u, a = cache["stages"][i]
            if i != n - 1:
                g = g * (1.0 - a**2)
            self._acc(grad, f"dec_conv{i}.bias", g.sum(axis=(1, 2, 3)))
            o = u.shape[1]
            gpad = np.zeros((g.shape[0], 2 * o + 2 * PAD, 2 * o + 2 * PAD, 2 * o + 2 * PAD))
            gpad[:, PAD : 2 * o + PAD, PAD : 2 * o + PAD, PAD : 2 * o + PAD] = g
            w = self._t(params, f"dec_conv{i}.weight")
            self._acc(grad, f"dec_conv{i}.weight", K.wgrad3d(u, gpad, KERNEL, STRIDE))
            g = K.corr3d(gpad, w, STRIDE)
        a_fc, e = cache["a_fc"], cache["e"]
        gflat = g.ravel() * (1.0 - a_fc**2)
        self._acc(grad, "dec_fc.weight", np.outer(gflat, e))
        self._acc(grad, "dec_fc.bias", gflat)
        w = self._t(params, "dec_fc.weight")
        return w.T @ gflat

    # ------------------------------------------------------------------
    # Public operations
    # ------------------------------------------------------------------

    def encode(self, params: ParamSet, x: np.ndarray) -> np.ndarray:
        latent, _ = self._enc_forward(params, x)
        return latent

    def decode(self, params: ParamSet, e: np.ndarray) -> np.ndarray:
        y, _ = self._dec_forward(params, e)
        return y

    def reconstruct(self, params: ParamSet, x: np.ndarray) -> np.ndarray:
        return self.decode(params, self.encode(params, x))

    def recon_loss_and_grad(
        self, params: ParamSet, batch: list[np.ndarray]
    ) -> tuple[float, np.ndarray]:
        """Mean squared voxel error over the batch and its exact flat gradient."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        n_vox = self.arch.input_dim**3
        denom = len(batch) * n_vox
        loss = 0.0
        grad = np.zeros(param_count(self.arch), dtype=np.float64)
        for x in batch:
            x = np.asarray(x, dtype=np.float64)
            latent, enc_cache = self._enc_forward(params, x)
            y, dec_cache = self._dec_forward(params, latent)
            diff = y - x
            loss += float((diff**2).sum())
            dy = (2.0 / denom) * diff
            dlatent = self._dec_backward(params, dec_cache, dy, grad)
            self._enc_backward(params, enc_cache, dlatent, grad)
        return loss / denom, grad

    def recon_loss(self, params: ParamSet, batch: list[np.ndarray]) -> float:
        if len(batch) == 0:
            raise ValueError("empty batch")
        n_vox = self.arch.input_dim**3
        total = 0.0
        for x in batch:
            x = np.asarray(x, dtype=np.float64)
            diff = self.reconstruct(params, x) - x
            total += float((diff**2).sum())
        return total / (len(batch) * n_vox)

    def grad_recon(self, params: ParamSet, batch: list[np.ndarray]) -> np.ndarray:
        return self.recon_loss_and_grad(params, batch)[1]

    def latent_cycle_loss_and_grad(
        self, params: ParamSet, latents: list[np.ndarray]
    ) -> tuple[float, np.ndarray]:
        """Mean over latents of the squared encode(decode(e)) - e error, plus gradient.

        The gradient covers all parameters: the stored latent e is a
        constant, but the cycle passes through decoder and encoder.
        """
        if len(latents) == 0:
            raise ValueError("empty latent batch")
        loss = 0.0
        grad = np.zeros(param_count(self.arch), dtype=np.float64)
        for e in latents:
            e = np.asarray(e, dtype=np.float64)
            y, dec_cache = self._dec_forward(params, e)
            latent2, enc_cache = self._enc_forward(params, y)
            diff = latent2 - e
            loss += float((diff**2).sum())
            dlat = (2.0 / len(latents)) * diff
            dx = self._enc_backward(params, enc_cache, dlat, grad)
            self._dec_backward(params, dec_cache, dx, grad)
        return loss / len(latents), grad

    def latent_cycle_loss(self, params: ParamSet, latents: list[np.ndarray]) -> float:
        if len(latents) == 0:
            raise ValueError("empty latent batch")
        total = 0.0
        for e in latents:
            e = np.asarray(e, dtype=np.float64)
            diff = self.encode(params, self.decode(params, e)) - e
            total += float((diff**2).sum())
        return total / len(latents)

    def grad_latent_cycle(self, params: ParamSet, latents: list[np.ndarray]) -> np.ndarray:
        return self.latent_cycle_loss_and_grad(params, latents)[1]


# ----------------------------------------------------------------------
# Adam optimizer on the flat vector
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n, dtype=np.float64), v=np.zeros(n, dtype=np.float64))


def apply_update(
    params: ParamSet, grad: np.ndarray, opt_state: AdamState, hyper: AdamHyper
) -> tuple[ParamSet, AdamState]:
    """One Adam step on the flat parameter vector."""
    if grad.shape != params.flat.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {params.flat.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericFailureError("non-finite gradient; update rejected")
    t = opt_state.step + 1
    m = hyper.beta1 * opt_state.m + (1.0 - hyper.beta1) * grad
    v = hyper.beta2 * opt_state.v + (1.0 - hyper.beta2) * grad**2
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    new_flat = params.flat - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return ParamSet(params.arch, new_flat), AdamState(m=m, v=v, step=t)
