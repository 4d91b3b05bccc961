"""Checkpoint file format.

Layout: the ASCII header line ``STREAMCL-CKPT v1``, one manifest line per
parameter tensor (``name dim0xdim1x... offset``), a single ``.`` line
closing the manifest, then the flat parameter vector as IEEE-754 float32
little-endian. Loading validates the manifest against the architecture's
canonical layout and rejects any mismatch.
"""

from __future__ import annotations

import os

import numpy as np

from .autoencoder import ArchSpec, ParamSet, layout, param_count
from .errors import ConfigError

HEADER = b"STREAMCL-CKPT v1"


def save_checkpoint(path: str | os.PathLike, params: ParamSet) -> None:
    lines = [HEADER]
    for s in layout(params.arch):
        shape = "x".join(str(d) for d in s.shape)
        lines.append(f"{s.name} {shape} {s.offset}".encode("ascii"))
    lines.append(b".")
    blob = params.flat.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(b"\n".join(lines) + b"\n")
        fh.write(blob)


def load_checkpoint(path: str | os.PathLike, arch: ArchSpec) -> ParamSet:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        header_end = data.index(b"\n")
    except ValueError:
        raise ConfigError("checkpoint truncated: no header line") from None
    if data[:header_end] != HEADER:
        raise ConfigError(f"bad checkpoint header {data[:header_end]!r}")
    pos = header_end + 1
    manifest: list[tuple[str, tuple[int, ...], int]] = []
    while True:
        nl = data.index(b"\n", pos) if b"\n" in data[pos:] else -1
        if nl < 0:
            raise ConfigError("checkpoint truncated inside manifest")
        line = data[pos:nl]
        pos = nl + 1
        if line == b".":
            break
        try:
            name, shape_s, offset_s = line.decode("ascii").split(" ")
            shape = tuple(int(d) for d in shape_s.split("x"))
            manifest.append((name, shape, int(offset_s)))
        except (UnicodeDecodeError, ValueError) as exc:
            raise ConfigError(f"malformed manifest line {line!r}") from exc
    expected = [(s.name, s.shape, s.offset) for s in layout(arch)]
    if manifest != expected:
        raise ConfigError("checkpoint manifest does not match the configured architecture")
    n = param_count(arch)
    blob = data[pos:]
    if len(blob) != 4 * n:
        raise ConfigError(f"checkpoint data is {len(blob)} bytes, expected {4 * n}")
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    return ParamSet(arch, flat)


def round_trip_f32(params: ParamSet) -> ParamSet:
    """Parameters as they will read back from a checkpoint (float32 precision)."""
    return ParamSet(params.arch, params.flat.astype("<f4").astype(np.float64))
