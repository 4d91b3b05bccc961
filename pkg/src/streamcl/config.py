"""Run configuration: dataclass bundle plus the flat `key = value` file format.

Config files are plain text with dotted keys (`sim.grid_size = 16`),
`#` comments, and blank lines. Every key must be in the schema below;
unknown keys are hard errors so typos cannot silently fall back to
defaults. `sim.grid_size` also sets the autoencoder input side, since
the two must agree.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .autoencoder import AdamHyper, ArchSpec
from .errors import ConfigError
from .fieldsim import SimConfig
from .strategies import CONDITION_VARIANTS, PROJECTION_MODES, STRATEGY_NAMES, StrategyKind

TRANSPORTS = ("inproc", "tcp")


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = SimConfig()
    arch: ArchSpec = ArchSpec()
    strategy: StrategyKind = StrategyKind()
    epochs_per_task: int = 40
    adam: AdamHyper = AdamHyper()
    ewc_lambda: float = 100.0
    ewc_gamma: float = 0.9
    memory_capacity: int = 10
    ref_batch: int = 10
    cache_capacity: int = 4
    transport: str = "inproc"
    seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.epochs_per_task < 1:
            raise ConfigError(f"epochs_per_task must be >= 1, got {self.epochs_per_task}")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport must be one of {TRANSPORTS}, got {self.transport!r}")
        if self.ref_batch < 1:
            raise ConfigError(f"memory.ref_batch must be >= 1, got {self.ref_batch}")
        if self.arch.input_dim != self.sim.grid_size:
            raise ConfigError(
                f"arch input dim {self.arch.input_dim} != sim grid size {self.sim.grid_size}"
            )

    def digest(self) -> str:
        """Stable short hash of every configuration value."""
        parts = []
        for f in fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)!r}")
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:16]


def _parse_int(s: str) -> int:
    return int(s, 0)


def _parse_channels(s: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


def _parse_choice(options: tuple[str, ...]):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s

    return parse


# key -> (target section, field name, parser)
_SCHEMA = {
    "sim.grid_size": ("sim", "grid_size", _parse_int),
    "sim.steps": ("sim", "steps", _parse_int),
    "sim.amplitude": ("sim", "amplitude", float),
    "sim.packet_center0": ("sim", "packet_center0", float),
    "sim.velocity": ("sim", "velocity", float),
    "sim.sigma_z": ("sim", "sigma_z", float),
    "sim.sigma_r": ("sim", "sigma_r", float),
    "sim.wavenumber": ("sim", "wavenumber", float),
    "sim.phase": ("sim", "phase", float),
    "sim.noise_std": ("sim", "noise_std", float),
    "sim.seed": ("sim", "seed", _parse_int),
    "arch.channels": ("arch", "conv_channels", _parse_channels),
    "arch.latent_dim": ("arch", "latent_dim", _parse_int),
    "strategy.kind": ("strategy", "name", _parse_choice(STRATEGY_NAMES)),
    "strategy.projection": ("strategy", "projection", _parse_choice(PROJECTION_MODES)),
    "strategy.condition_variant": ("strategy", "condition_variant", _parse_choice(CONDITION_VARIANTS)),
    "train.epochs_per_task": ("run", "epochs_per_task", _parse_int),
    "train.lr": ("adam", "lr", float),
    "train.beta1": ("adam", "beta1", float),
    "train.beta2": ("adam", "beta2", float),
    "train.eps": ("adam", "eps", float),
    "ewc.lambda": ("run", "ewc_lambda", float),
    "ewc.gamma": ("run", "ewc_gamma", float),
    "memory.capacity": ("run", "memory_capacity", _parse_int),
    "memory.ref_batch": ("run", "ref_batch", _parse_int),
    "cache.capacity": ("run", "cache_capacity", _parse_int),
    "transport": ("run", "transport", str),
    "seed": ("run", "seed", _parse_int),
    "out_dir": ("run", "out_dir", str),
}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    sections: dict[str, dict[str, object]] = {"sim": {}, "arch": {}, "strategy": {}, "adam": {}, "run": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        section, field_name, parser = _SCHEMA[key]
        try:
            sections[section][field_name] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    # the autoencoder input side always matches the simulation grid
    if "grid_size" in sections["sim"]:
        sections["arch"]["input_dim"] = sections["sim"]["grid_size"]
    try:
        cfg = RunConfig(
            sim=SimConfig(**sections["sim"]),
            arch=ArchSpec(**sections["arch"]),
            strategy=StrategyKind(**sections["strategy"]),
            adam=AdamHyper(**sections["adam"]),
            **sections["run"],
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def parse_config_file(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=path)


# CLI strategy shorthand, including the descriptive Table-style aliases.
STRATEGY_ALIASES = {
    "naive": StrategyKind("naive"),
    "ewc": StrategyKind("online_ewc"),
    "online_ewc": StrategyKind("online_ewc"),
    "agem": StrategyKind("agem"),
    "latent_agem": StrategyKind("latent_agem", projection="global"),
    "latent-global": StrategyKind("latent_agem", projection="global"),
    "latent-layerwise": StrategyKind("latent_agem", projection="layerwise"),
    "latent_agem_global": StrategyKind("latent_agem", projection="global"),
    "latent_agem_layerwise": StrategyKind("latent_agem", projection="layerwise"),
}


def resolve_strategy(token: str, condition_variant: str = "standard") -> StrategyKind:
    token = token.strip().lower()
    if token not in STRATEGY_ALIASES:
        raise ConfigError(f"unknown strategy {token!r}; known: {sorted(STRATEGY_ALIASES)}")
    base = STRATEGY_ALIASES[token]
    return replace(base, condition_variant=condition_variant)
