"""Post-training evaluation metrics and memory-overhead accounting.

SSIM is computed volumetrically: local means, variances, and covariance
under a 7x7x7 Gaussian window (sigma 1.5, weights normalized to sum 1),
averaged over window positions that lie fully inside the volume. The
stabilizer constants use the dynamic range of the ground-truth argument
only, so reconstruction artifacts cannot rescale the metric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .autoencoder import ArchSpec, param_count
from .fieldsim import SimConfig
from .strategies import StrategyKind

SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

_offsets = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
_gauss1d = np.exp(-(_offsets**2) / (2.0 * SSIM_SIGMA**2))
_gauss1d /= _gauss1d.sum()


def l1_metric(x: np.ndarray, y: np.ndarray) -> float:
    """Mean absolute voxel difference."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.mean(np.abs(x - y)))


def _windowed_mean(a: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local mean, cropped to fully-interior window positions."""
    for axis in range(3):
        a = correlate1d(a, _gauss1d, axis=axis, mode="constant")
    r = SSIM_WINDOW // 2
    return a[r:-r, r:-r, r:-r]


def ssim3d(x: np.ndarray, y: np.ndarray, data_range: float | None = None) -> float:
    """Volumetric SSIM of y against the ground truth x.

    data_range overrides the stabilizer scale R; by default R is taken
    from x (max - min, falling back to 1 for a constant volume).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 3 or min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"inputs must be 3D with every side >= {SSIM_WINDOW}, got {x.shape}")
    if data_range is None:
        r = float(x.max() - x.min())
        data_range = r if r > 0.0 else 1.0
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = _windowed_mean(x)
    mu_y = _windowed_mean(y)
    var_x = _windowed_mean(x * x) - mu_x**2
    var_y = _windowed_mean(y * y) - mu_y**2
    cov = _windowed_mean(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def memory_overhead(
    kind: StrategyKind, arch: ArchSpec, sim: SimConfig, capacity: int
) -> int:
    """Payload bytes each strategy holds beyond the model itself (float32 entries)."""
    if kind.name == "naive":
        return 0
    if kind.name == "agem":
        return capacity * sim.grid_size**3 * 4
    if kind.name == "latent_agem":
        return capacity * arch.latent_dim * 4
    if kind.name == "online_ewc":
        return 2 * param_count(arch) * 4  # Fisher diagonal + anchor copy
    raise ValueError(f"unknown strategy {kind.name!r}")


@dataclass
class MetricsReport:
    strategy: str
    seed: int
    config_digest: str
    per_task: list[tuple[int, float, float]] = field(default_factory=list)
    mem_overhead_bytes: int = 0
    partial: bool = False

    @property
    def avg_l1(self) -> float:
        return float(np.mean([row[1] for row in self.per_task]))

    @property
    def avg_ssim(self) -> float:
        return float(np.mean([row[2] for row in self.per_task]))


def write_per_task_csv(path: str, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "task_id", "l1", "ssim"])
        for task_id, l1, ssim in report.per_task:
            writer.writerow([report.strategy, report.seed, task_id, repr(l1), repr(ssim)])


def write_summary_csv(path: str, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "avg_l1", "avg_ssim", "mem_overhead_bytes"])
        writer.writerow(
            [
                report.strategy,
                report.seed,
                repr(report.avg_l1),
                repr(report.avg_ssim),
                report.mem_overhead_bytes,
            ]
        )
