"""Byte-chunk transports: loopback, TCP socket, and a thin serial adapter.

A transport moves opaque delimited chunks (already COBS-wrapped) in both
directions and counts every byte, so callers can verify that a rejected
call produced zero wire traffic. Chunks are delivered in order per
direction; the transport itself never duplicates.
"""

from __future__ import annotations

import os
import socket
import threading
from typing import Callable

from .errors import BridgeError, TransportClosed
from .framing import StreamDecoder, wrap


class Transport:
    """Base class: byte counters plus the receive-callback plumbing."""

    def __init__(self):
        self.sent_chunks = 0
        self.sent_bytes = 0
        self.received_chunks = 0
        self.received_bytes = 0
        self._on_receive: Callable[[bytes], None] | None = None
        self._on_close: Callable[[], None] | None = None
        self.closed = False

    def set_receiver(self, on_receive: Callable[[bytes], None],
                     on_close: Callable[[], None] | None = None) -> None:
        self._on_receive = on_receive
        self._on_close = on_close

    def send(self, chunk: bytes) -> None:
        if self.closed:
            raise TransportClosed()
        self.sent_chunks += 1
        self.sent_bytes += len(chunk)
        self._send(chunk)

    def _send(self, chunk: bytes) -> None:
        raise NotImplementedError

    def _deliver(self, chunk: bytes) -> None:
        self.received_chunks += 1
        self.received_bytes += len(chunk)
        if self._on_receive is not None:
            self._on_receive(chunk)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._close()
            if self._on_close is not None:
                self._on_close()

    def _close(self) -> None:
        pass

    def stats(self) -> dict:
        return {"sent_chunks": self.sent_chunks, "sent_bytes": self.sent_bytes,
                "received_chunks": self.received_chunks, "received_bytes": self.received_bytes}


class LoopbackTransport(Transport):
    """In-process link to a VirtualDevice: send() runs the device's framer
    and frame handler synchronously and pushes the wrapped reply straight
    back, so a full call exercises the entire codec/framing/crypto path with
    no OS I/O."""

    def __init__(self, device, max_chunk: int = 1024):
        super().__init__()
        self.device = device
        self.max_chunk = max_chunk
        self._device_framer = StreamDecoder(max_chunk)

    def _send(self, chunk: bytes) -> None:
        for frame in self._device_framer.feed(chunk):
            reply = self.device.process(frame)
            if reply is not None:
                self._deliver(wrap(reply, self.max_chunk))

    def emit_from_device(self, event: str, payload: dict) -> None:
        """Have the simulated device push an event frame to the host side."""
        self._deliver(wrap(self.device.emit_event(event, payload), self.max_chunk))


class SocketTransport(Transport):
    """TCP byte-stream transport (e.g. to `dcp device sim --listen`)."""

    def __init__(self, host: str, port: int, connect_timeout: float = 5.0):
        super().__init__()
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as err:
            raise BridgeError("transport_closed", f"cannot connect to {host}:{port}: {err}") from None
        self._sock.settimeout(None)
        self._send_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        while True:
            try:
                data = self._sock.recv(4096)
            except OSError:
                data = b""
            if not data:
                self.close()
                return
            self._deliver(data)

    def _send(self, chunk: bytes) -> None:
        try:
            with self._send_lock:
                self._sock.sendall(chunk)
        except OSError as err:
            self.close()
            raise TransportClosed(f"socket send failed: {err}") from None

    def _close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


class SerialTransport(Transport):
    """Thin adapter binding the framed stream to an OS serial device
    (default 115200 8N1). Raw byte plumbing only; frame integrity comes from
    the COBS+CRC layer above."""

    def __init__(self, path: str, baud: int = 115200):
        super().__init__()
        try:
            import termios
        except ImportError:  # pragma: no cover
            raise BridgeError("not_supported", "serial transport needs a POSIX termios platform")
        self._fd = os.open(path, os.O_RDWR | os.O_NOCTTY)
        attrs = termios.tcgetattr(self._fd)
        speed = getattr(termios, f"B{baud}", None)
        if speed is None:
            os.close(self._fd)
            raise BridgeError("not_supported", f"unsupported baud rate {baud}")
        # raw 8N1
        attrs[0] = 0                                # iflag
        attrs[1] = 0                                # oflag
        attrs[2] = termios.CS8 | termios.CREAD | termios.CLOCAL
        attrs[3] = 0                                # lflag
        attrs[4] = attrs[5] = speed
        attrs[6][termios.VMIN] = 0
        attrs[6][termios.VTIME] = 1                 # 100 ms read granularity
        termios.tcsetattr(self._fd, termios.TCSANOW, attrs)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        while not self.closed:
            try:
                data = os.read(self._fd, 4096)
            except OSError:
                self.close()
                return
            if data:
                self._deliver(data)

    def _send(self, chunk: bytes) -> None:
        try:
            os.write(self._fd, chunk)
        except OSError as err:
            self.close()
            raise TransportClosed(f"serial write failed: {err}") from None

    def _close(self) -> None:
        try:
            os.close(self._fd)
        except OSError:
            pass


def open_transport(spec: str, *, device=None, max_chunk: int = 1024) -> Transport:
    """Build a transport from a CLI-style spec string.

    ``loopback`` (requires a device), ``sim-socket:HOST:PORT``, or
    ``serial:PATH[:BAUD]``.
    """
    if spec == "loopback":
        if device is None:
            raise BridgeError("not_supported", "loopback transport needs an in-process device")
        return LoopbackTransport(device, max_chunk)
    if spec.startswith("sim-socket:"):
        rest = spec[len("sim-socket:"):]
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise BridgeError("not_supported", f"bad sim-socket spec {spec!r} (want HOST:PORT)")
        return SocketTransport(host, int(port))
    if spec.startswith("serial:"):
        rest = spec[len("serial:"):]
        if ":" in rest:
            path, baud = rest.rsplit(":", 1)
            if not baud.isdigit():
                raise BridgeError("not_supported", f"bad baud in {spec!r}")
            return SerialTransport(path, int(baud))
        return SerialTransport(rest)
    raise BridgeError("not_supported", f"unknown transport spec {spec!r}")
