"""streamcl: continual learning on a streaming synthetic 3D field.

A compact research framework that trains a 3D convolutional autoencoder
while a wave-packet simulation streams frames over a PAUSE/RESUME flow
control protocol, with pluggable protection against catastrophic
forgetting (gradient projection against replayed raw frames or stored
latent codes, and an online quadratic-penalty baseline).
"""

from .autoencoder import AdamHyper, AdamState, ArchSpec, Autoencoder, ParamSet, apply_update, layout, param_count
from .checkpoint import load_checkpoint, round_trip_f32, save_checkpoint
from .config import RunConfig, parse_config_file, parse_config_text, resolve_strategy
from .errors import (
    ConfigError,
    EmptyCacheError,
    IncompleteMessageError,
    NumericFailureError,
    ProtocolError,
    SchedulerOverflowError,
    StreamAbortedError,
    StreamCLError,
    TransportError,
)
from .fieldsim import FieldFrame, SimConfig, generate_frame
from .metrics import MetricsReport, l1_metric, memory_overhead, ssim3d
from .protocol import MessageKind, MessageReader, Scheduler, StreamMessage, decode_message, encode_message
from .runner import compare_strategies, evaluate_checkpoint, run_experiment
from .strategies import (
    EpisodicMemory,
    FisherState,
    MemoryKind,
    StrategyKind,
    load_memory,
    memory_insert,
    memory_sample,
    project_gradient,
    project_layerwise,
    save_memory,
    strategy_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdamHyper",
    "AdamState",
    "ArchSpec",
    "Autoencoder",
    "ConfigError",
    "EmptyCacheError",
    "EpisodicMemory",
    "FieldFrame",
    "FisherState",
    "IncompleteMessageError",
    "MemoryKind",
    "MessageKind",
    "MessageReader",
    "MetricsReport",
    "NumericFailureError",
    "ParamSet",
    "ProtocolError",
    "RunConfig",
    "Scheduler",
    "SchedulerOverflowError",
    "SimConfig",
    "StrategyKind",
    "StreamAbortedError",
    "StreamCLError",
    "StreamMessage",
    "TransportError",
    "apply_update",
    "compare_strategies",
    "decode_message",
    "encode_message",
    "evaluate_checkpoint",
    "generate_frame",
    "l1_metric",
    "layout",
    "load_checkpoint",
    "load_memory",
    "memory_insert",
    "memory_overhead",
    "memory_sample",
    "param_count",
    "parse_config_file",
    "parse_config_text",
    "project_gradient",
    "project_layerwise",
    "resolve_strategy",
    "round_trip_f32",
    "run_experiment",
    "save_checkpoint",
    "save_memory",
    "ssim3d",
    "strategy_step",
    "__version__",
]
