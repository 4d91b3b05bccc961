"""Synthetic 3D electric-field generator.

Stands in for the real particle-in-cell data source: each time step t
produces one cube of voxels containing a traveling wave packet, i.e. a
Gaussian envelope (axial width sigma_z, radial width sigma_r) moving along
z at `velocity` voxels per step, modulated by a high-frequency carrier
sin(wavenumber * z_rel + phase). Per-voxel Gaussian noise is drawn from a
counter-based Philox stream keyed on (seed, t), so any frame can be
generated independently of the others and the full sequence is a pure
function of the config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SimConfig:
    grid_size: int = 16
    steps: int = 8
    amplitude: float = 1.0
    packet_center0: float = 4.0
    velocity: float = 1.0
    sigma_z: float = 2.0
    sigma_r: float = 4.0
    wavenumber: float = 2.0
    phase: float = 0.0
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ConfigError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.sigma_z <= 0 or self.sigma_r <= 0:
            raise ConfigError("sigma_z and sigma_r must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class FieldFrame:
    """One scalar field snapshot; axis order (x, y, z), z varying fastest."""

    step_index: int
    dims: tuple[int, int, int]
    values: np.ndarray  # float32, shape == dims

    def __post_init__(self) -> None:
        if self.step_index < 0:
            raise ValueError(f"step_index must be non-negative, got {self.step_index}")
        if self.values.shape != self.dims:
            raise ValueError(f"values shape {self.values.shape} != dims {self.dims}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("frame contains non-finite values")


def _counter_noise(seed: int, t: int, n: int) -> np.ndarray:
    """n standard normals, a pure function of (seed, t, draw index).

    Box-Muller over Philox uniforms instead of Generator.standard_normal:
    the ziggurat sampler consumes a variable number of raw draws per value,
    which would break the fixed (counter -> voxel) correspondence.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, t], dtype=np.uint64)))
    u = rng.random(2 * n)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    return r * np.cos(2.0 * np.pi * u[1::2])


def generate_frame(config: SimConfig, t: int) -> FieldFrame:
    """Deterministically generate the frame for step t (0 <= t < steps)."""
    if t < 0 or t >= config.steps:
        raise ValueError(f"step {t} out of range [0, {config.steps})")
    d = config.grid_size
    c = (d - 1) / 2.0
    x = np.arange(d, dtype=np.float64)[:, None, None]
    y = np.arange(d, dtype=np.float64)[None, :, None]
    z = np.arange(d, dtype=np.float64)[None, None, :]
    z_rel = z - config.packet_center0 - config.velocity * t
    axial = np.exp(-(z_rel**2) / (2.0 * config.sigma_z**2))
    radial = np.exp(-((x - c) ** 2 + (y - c) ** 2) / (2.0 * config.sigma_r**2))
    carrier = np.sin(config.wavenumber * z_rel + config.phase)
    values = config.amplitude * axial * radial * carrier
    if config.noise_std > 0:
        noise = _counter_noise(config.seed, t, d**3) * config.noise_std
        values += noise.reshape(d, d, d)
    return FieldFrame(step_index=t, dims=(d, d, d), values=values.astype(np.float32))
