"""Streaming producer: emits one FRAME per simulation step, honoring PAUSE/RESUME.

The core is a generator that yields wherever a blocking wait would occur
(handshake reply, pause). Driving it to exhaustion in a thread gives the
concurrent producer used with TCP; handing it to the in-process trainer
endpoint as a pump gives a fully deterministic single-threaded run.
"""

from __future__ import annotations

from typing import Iterator

from .errors import ProtocolError, StreamAbortedError, TransportError
from .fieldsim import SimConfig, generate_frame
from .protocol import MessageKind, StreamMessage, frame_message
from .transport import Transport


def _stream_steps(config: SimConfig, transport: Transport) -> Iterator[None]:
    """Frame loop; assumes the HELLO handshake already completed."""
    try:
        for t in range(config.steps):
            # Honor any control that arrived since the last frame.
            while True:
                msg = transport.poll_message()
                if msg is None:
                    break
                if msg.kind == MessageKind.PAUSE:
                    while True:
                        ctl = transport.poll_message()
                        if ctl is None:
                            yield
                            continue
                        if ctl.kind == MessageKind.RESUME:
                            break
                        if ctl.kind != MessageKind.PAUSE:
                            raise ProtocolError(f"unexpected {ctl.kind.name} while paused")
                elif msg.kind != MessageKind.RESUME:
                    raise ProtocolError(f"unexpected {msg.kind.name} from trainer")
            transport.send_message(frame_message(generate_frame(config, t)))
            yield
        transport.send_message(StreamMessage(MessageKind.END))
    except TransportError as exc:
        raise StreamAbortedError(f"stream aborted at producer: {exc}") from exc


def producer_session(config: SimConfig, transport: Transport) -> Iterator[None]:
    """Handshake plus frame loop as one resumable generator."""
    try:
        transport.send_message(StreamMessage(MessageKind.HELLO))
        while True:
            msg = transport.poll_message()
            if msg is not None:
                if msg.kind != MessageKind.HELLO:
                    raise ProtocolError(f"expected HELLO reply, got {msg.kind.name}")
                break
            yield
    except TransportError as exc:
        raise StreamAbortedError(f"handshake failed at producer: {exc}") from exc
    yield from _stream_steps(config, transport)


def run_producer(config: SimConfig, transport: Transport) -> None:
    """Blocking frame loop (handshake must have completed); used in thread mode."""
    for _ in _stream_steps(config, transport):
        pass


def producer_main(config: SimConfig, transport: Transport) -> None:
    """Blocking full session: handshake, frames, then linger until the peer closes.

    The linger keeps the connection open so late PAUSE/RESUME control sent
    by a trainer that has not yet observed END never hits a closed socket.
    """
    for _ in producer_session(config, transport):
        pass
    try:
        while True:
            transport.recv_message()
    except TransportError:
        pass
