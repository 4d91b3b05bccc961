"""Message transports: in-process byte channel and TCP loopback.

Both carry the exact wire format from `protocol`. The in-process pair is
fully single-threaded: the trainer end optionally holds a "pump", a
generator that advances the producer only when the trainer is waiting for
bytes, which gives a deterministic interleaving for tests. The TCP
transport wraps a connected socket; the producer then runs in its own
thread and the socket provides backpressure.
"""

from __future__ import annotations

import select
import socket
from collections import deque
from typing import Iterator

from .errors import ProtocolError, TransportError
from .protocol import MessageKind, MessageReader, StreamMessage, encode_message


class Transport:
    """Interface shared by both transports."""

    def send_message(self, msg: StreamMessage) -> None:
        raise NotImplementedError

    def recv_message(self) -> StreamMessage:
        raise NotImplementedError

    def poll_message(self) -> StreamMessage | None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class InprocEndpoint(Transport):
    def __init__(self) -> None:
        self._reader = MessageReader()
        self._inbox: deque[bytes] = deque()
        self._peer: InprocEndpoint | None = None
        self._pump: Iterator[None] | None = None
        self.closed = False

    def set_pump(self, pump: Iterator[None]) -> None:
        """Attach the generator that produces this endpoint's incoming bytes."""
        self._pump = pump

    def send_message(self, msg: StreamMessage) -> None:
        if self.closed:
            raise TransportError("send on a closed channel")
        peer = self._peer
        if peer is None or peer.closed:
            raise TransportError("peer endpoint is closed")
        peer._inbox.append(encode_message(msg))

    def _drain_inbox(self) -> None:
        while self._inbox:
            self._reader.feed(self._inbox.popleft())

    def poll_message(self) -> StreamMessage | None:
        self._drain_inbox()
        return self._reader.next_message()

    def recv_message(self) -> StreamMessage:
        while True:
            msg = self.poll_message()
            if msg is not None:
                return msg
            if self._pump is not None:
                # The final advance can send a message and then finish, so
                # always re-poll after touching the pump.
                try:
                    next(self._pump)
                except StopIteration:
                    self._pump = None
                continue
            if self.closed or (self._peer is not None and self._peer.closed):
                raise TransportError("channel closed with no pending message")
            raise TransportError("no message available and no producer to advance")

    def close(self) -> None:
        self.closed = True


def inproc_pair() -> tuple[InprocEndpoint, InprocEndpoint]:
    a, b = InprocEndpoint(), InprocEndpoint()
    a._peer, b._peer = b, a
    return a, b


class TcpTransport(Transport):
    POLL_INTERVAL = 0.01

    def __init__(self, sock: socket.socket) -> None:
        sock.setblocking(True)
        self._sock = sock
        self._reader = MessageReader()
        self.closed = False

    def send_message(self, msg: StreamMessage) -> None:
        try:
            self._sock.sendall(encode_message(msg))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv_chunk(self, blocking: bool) -> bool:
        """Read one chunk into the decoder; False on timeout, error on EOF."""
        if not blocking:
            ready, _, _ = select.select([self._sock], [], [], self.POLL_INTERVAL)
            if not ready:
                return False
        try:
            data = self._sock.recv(1 << 16)
        except OSError as exc:
            raise TransportError(f"recv failed: {exc}") from exc
        if not data:
            raise TransportError("connection closed by peer")
        self._reader.feed(data)
        return True

    def recv_message(self) -> StreamMessage:
        while True:
            msg = self._reader.next_message()
            if msg is not None:
                return msg
            self._recv_chunk(blocking=True)

    def poll_message(self) -> StreamMessage | None:
        msg = self._reader.next_message()
        if msg is not None:
            return msg
        if self._recv_chunk(blocking=False):
            return self._reader.next_message()
        return None

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()


def handshake_producer(transport: Transport) -> None:
    """Producer side: announce, then wait for the trainer's HELLO reply."""
    transport.send_message(StreamMessage(MessageKind.HELLO))
    msg = transport.recv_message()
    if msg.kind != MessageKind.HELLO:
        raise ProtocolError(f"expected HELLO reply, got {msg.kind.name}")


def handshake_trainer(transport: Transport) -> None:
    """Trainer side: wait for the producer's HELLO and acknowledge it."""
    msg = transport.recv_message()
    if msg.kind != MessageKind.HELLO:
        raise ProtocolError(f"expected HELLO, got {msg.kind.name}")
    transport.send_message(StreamMessage(MessageKind.HELLO))
