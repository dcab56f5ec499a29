"""Asyncio teleop server: TCP newline-delimited JSON on the main port and,
when available, the same stream over WebSocket on port+1 for browser
clients. Single leader, any number of observers; one session loop owns the
world and fans each tick's state broadcast out to every peer."""

from __future__ import annotations

import asyncio
import contextlib
import logging

from .errors import BindError, MalformedFrame, ProtocolViolation
from .protocol import Hello, decode_message, encode_message
from .session import SessionCore

log = logging.getLogger("sleap_sim.server")

MAX_PEER_BACKLOG = 256  # broadcasts; slower consumers are disconnected


class TeleopServer:
    def __init__(self, world, host: str, port: int, hz: float = 50.0,
                 log_sink=None, enable_ws: bool = True):
        self.core = SessionCore(world, log_sink=log_sink)
        self.host = host
        self.port = port
        self.hz = hz
        self.enable_ws = enable_ws
        self._peers: dict = {}  # send-callable -> backlog queue
        self._leader_send = None
        self._stopping = asyncio.Event()
        self._servers = []

    # -- peer plumbing ------------------------------------------------------

    def _register(self, send):
        q: asyncio.Queue = asyncio.Queue(MAX_PEER_BACKLOG)
        self._peers[send] = q
        return q

    def _drop(self, send):
        self._peers.pop(send, None)
        if send is self._leader_send:
            self._leader_send = None

    def _fanout(self, payload: bytes):
        for send, q in list(self._peers.items()):
            try:
                q.put_nowait(payload)
            except asyncio.QueueFull:
                log.warning("dropping slow peer")
                self._drop(send)

    async def _peer_session(self, recv_lines, send, peername):
        """Shared by TCP and WebSocket handlers. recv_lines yields raw
        lines; send(bytes) transmits one frame."""
        try:
            first = await anext(recv_lines)
        except (StopAsyncIteration, ConnectionError):
            return
        try:
            hello = decode_message(first)
            if not isinstance(hello, Hello):
                raise ProtocolViolation("first frame must be hello")
            if hello.role == "leader":
                if self._leader_send is not None:
                    raise ProtocolViolation("a leader is already connected")
                self._leader_send = send
                self.core.handle_line(first if isinstance(first, bytes)
                                      else first.encode())
        except (MalformedFrame, ProtocolViolation) as e:
            log.warning("rejecting %s: %s", peername, e)
            return
        queue = self._register(send)
        writer_task = asyncio.ensure_future(self._pump(queue, send))
        try:
            async for line in recv_lines:
                if send is not self._leader_send:
                    log.warning("dropping non-leader traffic from %s", peername)
                    break
                try:
                    self.core.handle_line(line if isinstance(line, bytes)
                                          else line.encode())
                except (MalformedFrame, ProtocolViolation) as e:
                    log.warning("disconnecting leader %s: %s", peername, e)
                    break
        except ConnectionError:
            pass
        finally:
            writer_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await writer_task
            self._drop(send)

    @staticmethod
    async def _pump(queue, send):
        while True:
            payload = await queue.get()
            await send(payload)

    # -- transports ---------------------------------------------------------

    async def _handle_tcp(self, reader, writer):
        peer = writer.get_extra_info("peername")

        async def lines():
            while True:
                line = await reader.readline()
                if not line:
                    return
                yield line

        async def send(payload: bytes):
            writer.write(payload)
            await writer.drain()

        await self._peer_session(lines(), send, peer)
        with contextlib.suppress(ConnectionError):
            writer.close()
            await writer.wait_closed()

    async def _handle_ws(self, ws):
        async def lines():
            async for m in ws:
                yield m if isinstance(m, bytes) else m.encode()

        async def send(payload: bytes):
            await ws.send(payload.decode())

        await self._peer_session(lines(), send, str(ws.remote_address))

    # -- lifecycle ----------------------------------------------------------

    async def start(self):
        try:
            tcp = await asyncio.start_server(self._handle_tcp, self.host, self.port)
        except OSError as e:
            raise BindError(f"cannot bind {self.host}:{self.port}: {e}") from e
        self._servers.append(tcp)
        if self.enable_ws:
            try:
                import websockets

                ws = await websockets.serve(self._handle_ws, self.host,
                                            self.port + 1)
                self._servers.append(ws)
            except OSError as e:
                raise BindError(
                    f"cannot bind websocket {self.host}:{self.port + 1}: {e}") from e
        log.info("listening on %s:%d (ws %d)", self.host, self.port,
                 self.port + 1 if self.enable_ws else -1)

    async def run(self, max_ticks: int | None = None):
        """Tick loop; paces to self.hz, or flat out when hz <= 0."""
        if not self._servers:
            await self.start()
        loop = asyncio.get_running_loop()
        period = 1.0 / self.hz if self.hz > 0 else 0.0
        next_due = loop.time()
        n = 0
        try:
            while not self._stopping.is_set():
                bc = self.core.tick()
                self._fanout(encode_message(bc))
                n += 1
                if max_ticks is not None and n >= max_ticks:
                    break
                if period:
                    next_due += period
                    delay = next_due - loop.time()
                    if delay > 0:
                        try:
                            await asyncio.wait_for(self._stopping.wait(), delay)
                        except asyncio.TimeoutError:
                            pass
                else:
                    await asyncio.sleep(0)
        finally:
            await self.shutdown()
        return n

    def stop(self):
        self._stopping.set()

    async def shutdown(self):
        for s in self._servers:
            s.close()
            if hasattr(s, "wait_closed"):
                with contextlib.suppress(Exception):
                    await s.wait_closed()
        self._servers.clear()
