"""Socket service streaming cage frames and accepting interaction events.

One thread owns the simulation; connection handlers exchange messages
with it through queues, so a stalled client can never block a substep.
The same byte protocol runs over a raw TCP stream or a WebSocket
(sniffed from the first bytes of the connection), which is what browser
viewers use.
"""

from __future__ import annotations

import base64
import hashlib
import queue
import socket
import struct
import threading
import time
import warnings

import numpy as np

from . import protocol as proto
from .pipeline import PipelineError, Simulation, load_scene
from .render import Light

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
CLIENT_QUEUE_FRAMES = 8
HANDSHAKE_TIMEOUT = 10.0


class _RawTransport:
    def __init__(self, sock):
        self.sock = sock

    def send(self, data: bytes):
        self.sock.sendall(data)

    def recv(self) -> bytes:
        return self.sock.recv(65536)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _WebSocketTransport:
    """Minimal RFC 6455 server endpoint carrying binary frames."""

    def __init__(self, sock, prefix: bytes):
        self.sock = sock
        self._buf = bytearray(prefix)
        self._fragments = []
        self._handshake()

    def _read_more(self) -> bool:
        data = self.sock.recv(65536)
        if not data:
            return False
        self._buf.extend(data)
        return True

    def _handshake(self):
        while b"\r\n\r\n" not in self._buf:
            if not self._read_more():
                raise ConnectionError("websocket handshake truncated")
        head, _, rest = bytes(self._buf).partition(b"\r\n\r\n")
        self._buf = bytearray(rest)
        key = None
        for line in head.split(b"\r\n")[1:]:
            name, _, value = line.partition(b":")
            if name.strip().lower() == b"sec-websocket-key":
                key = value.strip().decode("ascii")
        if key is None:
            raise ConnectionError("websocket handshake missing key")
        accept = base64.b64encode(
            hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
        self.sock.sendall(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + accept.encode() + b"\r\n\r\n")

    def send(self, data: bytes):
        n = len(data)
        if n < 126:
            head = struct.pack("!BB", 0x82, n)
        elif n < 1 << 16:
            head = struct.pack("!BBH", 0x82, 126, n)
        else:
            head = struct.pack("!BBQ", 0x82, 127, n)
        self.sock.sendall(head + data)

    def _next_frame(self):
        """One websocket frame from the buffer, or None to read more."""
        if len(self._buf) < 2:
            return None
        b0, b1 = self._buf[0], self._buf[1]
        masked = bool(b1 & 0x80)
        length = b1 & 0x7F
        off = 2
        if length == 126:
            if len(self._buf) < 4:
                return None
            (length,) = struct.unpack_from("!H", self._buf, 2)
            off = 4
        elif length == 127:
            if len(self._buf) < 10:
                return None
            (length,) = struct.unpack_from("!Q", self._buf, 2)
            off = 10
        mask = b""
        if masked:
            if len(self._buf) < off + 4:
                return None
            mask = bytes(self._buf[off:off + 4])
            off += 4
        if len(self._buf) < off + length:
            return None
        payload = bytes(self._buf[off:off + length])
        del self._buf[:off + length]
        if masked:
            payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
        return b0 & 0x80, b0 & 0x0F, payload

    def recv(self) -> bytes:
        """Application bytes from the next data frame(s); b'' on close."""
        while True:
            frame = self._next_frame()
            if frame is None:
                if not self._read_more():
                    return b""
                continue
            fin, opcode, payload = frame
            if opcode == 0x8:  # close
                try:
                    self.send(b"")  # best-effort close reply
                except OSError:
                    pass
                return b""
            if opcode == 0x9:  # ping -> pong
                self.sock.sendall(struct.pack("!BB", 0x8A, len(payload))
                                  + payload)
                continue
            if opcode == 0xA:  # pong
                continue
            self._fragments.append(payload)
            if fin:
                data = b"".join(self._fragments)
                self._fragments = []
                if data:
                    return data
                continue

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _Client:
    def __init__(self, cid, transport):
        self.cid = cid
        self.transport = transport
        self.outbox = queue.Queue(maxsize=CLIENT_QUEUE_FRAMES)
        self.alive = True

    def offer(self, data: bytes):
        """Enqueue without blocking; drops the oldest frame when full."""
        while True:
            try:
                self.outbox.put_nowait(data)
                return
            except queue.Full:
                try:
                    self.outbox.get_nowait()
                except queue.Empty:
                    pass


class SimServer:
    """Owns the simulation thread, the listener, and per-client pumps."""

    def __init__(self, script, base_dir=".", host="127.0.0.1", port=0):
        self.bundle = load_scene(script, base_dir)
        self.sim = Simulation(self.bundle)
        self.inbox = queue.Queue()
        self.clients = {}
        self.grabs = {}          # client id -> attachment handle
        self.clients_lock = threading.Lock()
        self.running = False
        self.frame_id = 0
        self._next_cid = 0
        self._threads = []
        self.listener = socket.create_server((host, port))
        self.host, self.port = self.listener.getsockname()[:2]
        self.scene_init = proto.encode(proto.SceneInit(
            *self.bundle.scene_init_payload()))

    # -- lifecycle ----------------------------------------------------------

    def start(self):
        self.running = True
        for target in (self._accept_loop, self._sim_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self):
        self.running = False
        try:
            self.listener.close()
        except OSError:
            pass
        with self.clients_lock:
            clients = list(self.clients.values())
        for client in clients:
            client.alive = False
            client.offer(b"")
            client.transport.close()
        for t in self._threads:
            t.join(timeout=5.0)

    # -- simulation owner thread ---------------------------------------------

    def _sim_loop(self):
        frame_dt = self.sim.frame_dt
        substeps = max(1, int(np.ceil(frame_dt / self.sim.dt - 1e-9)))
        deadline = time.monotonic()
        while self.running:
            for _ in range(substeps):
                self._drain_inbox()
                try:
                    self.sim.substep()
                except Exception as exc:  # surface, then stop serving frames
                    self._broadcast(proto.encode(proto.ErrorMsg(
                        f"simulation failed: {exc}")))
                    self.running = False
                    return
            frame = proto.Frame(
                self.frame_id,
                self.bundle.state.positions.astype("<f4", copy=True))
            self._broadcast(proto.encode(frame))
            self.frame_id += 1
            deadline += frame_dt
            now = time.monotonic()
            if deadline < now - 1.0:
                deadline = now  # fell far behind; do not spiral
            time.sleep(max(0.0, deadline - now))

    def _broadcast(self, data: bytes):
        with self.clients_lock:
            clients = list(self.clients.values())
        for client in clients:
            client.offer(data)

    def _reply(self, cid, message: str):
        with self.clients_lock:
            client = self.clients.get(cid)
        if client is not None:
            client.offer(proto.encode(proto.ErrorMsg(message)))

    def _drain_inbox(self):
        while True:
            try:
                cid, msg = self.inbox.get_nowait()
            except queue.Empty:
                return
            self._apply(cid, msg)

    def _apply(self, cid, msg):
        b = self.bundle
        if msg == "disconnect":
            handle = self.grabs.pop(cid, None)
            if handle is not None:
                b.solver.release(b.state, handle)
            return
        if isinstance(msg, proto.Grab):
            if msg.object_id not in b.scene.objects:
                self._reply(cid, f"unknown object {msg.object_id}")
                return
            old = self.grabs.pop(cid, None)
            if old is not None:
                b.solver.release(b.state, old)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    handle = b.solver.attach(
                        b.state, msg.point, msg.radius,
                        mask=b.vertex_object == msg.object_id)
                except ValueError as exc:
                    self._reply(cid, str(exc))
                    return
            if handle is None:
                self._reply(cid, "empty grab")
            else:
                self.grabs[cid] = handle
        elif isinstance(msg, proto.Drag):
            handle = self.grabs.get(cid)
            if handle is not None:
                b.solver.drag(b.state, handle, msg.target)
        elif isinstance(msg, proto.Release):
            handle = self.grabs.pop(cid, None)
            if handle is not None:
                b.solver.release(b.state, handle)
        elif isinstance(msg, proto.SetParam):
            try:
                self.sim.set_param(msg.object_id,
                                   proto.PARAM_NAMES[msg.param], msg.value)
            except PipelineError as exc:
                self._reply(cid, str(exc))
        elif isinstance(msg, proto.LightMsg):
            try:
                old = b.light
                b.light = Light(
                    direction=msg.direction, strength=msg.strength,
                    resolution=old.resolution if old else 256,
                    bias=old.bias if old else None)
            except ValueError as exc:
                self._reply(cid, f"bad light: {exc}")
        # HELLO after handshake, FRAME, or ERROR from a client: ignored

    # -- per-connection handling ----------------------------------------------

    def _accept_loop(self):
        while self.running:
            try:
                sock, _ = self.listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_connection, args=(sock,),
                             daemon=True).start()

    def _open_transport(self, sock):
        sock.settimeout(HANDSHAKE_TIMEOUT)
        first = sock.recv(4)
        if not first:
            raise ConnectionError("closed before handshake")
        if first == b"GET ":
            return _WebSocketTransport(sock, first), b""
        return _RawTransport(sock), first

    def _serve_connection(self, sock):
        cid = None
        try:
            transport, prefix = self._open_transport(sock)
            buf = bytearray(prefix)
            hello = self._read_hello(transport, buf)
            if hello.version != proto.PROTOCOL_VERSION:
                transport.send(proto.encode(proto.ErrorMsg(
                    f"protocol version {hello.version} unsupported; "
                    f"server speaks {proto.PROTOCOL_VERSION}")))
                transport.close()
                return
            transport.send(proto.encode(proto.Hello()))
            transport.send(self.scene_init)
            sock.settimeout(None)

            client = _Client(self._register(), transport)
            cid = client.cid
            with self.clients_lock:
                self.clients[cid] = client
            writer = threading.Thread(target=self._write_loop,
                                      args=(client,), daemon=True)
            writer.start()
            self._read_loop(client, buf)
        except (OSError, ConnectionError, socket.timeout):
            pass
        finally:
            if cid is not None:
                with self.clients_lock:
                    client = self.clients.pop(cid, None)
                if client is not None:
                    client.alive = False
                    client.offer(b"")
                self.inbox.put((cid, "disconnect"))
            try:
                sock.close()
            except OSError:
                pass

    def _register(self) -> int:
        with self.clients_lock:
            cid = self._next_cid
            self._next_cid += 1
        return cid

    def _read_hello(self, transport, buf) -> proto.Hello:
        while True:
            msg, used = proto.decode(buf)
            if msg is not None:
                del buf[:used]
                if not isinstance(msg, proto.Hello):
                    raise ConnectionError("expected hello first")
                return msg
            data = transport.recv()
            if not data:
                raise ConnectionError("closed during hello")
            buf.extend(data)

    def _write_loop(self, client):
        while client.alive:
            data = client.outbox.get()
            if not data or not client.alive:
                return
            try:
                client.transport.send(data)
            except OSError:
                client.alive = False
                return

    def _read_loop(self, client, buf: bytearray):
        while self.running and client.alive:
            progressed = True
            while progressed:
                progressed = False
                try:
                    msg, used = proto.decode(buf)
                except proto.ProtocolError as exc:
                    if not self._resync(client, buf, exc):
                        return
                    progressed = True
                    continue
                if msg is not None:
                    del buf[:used]
                    self.inbox.put((client.cid, msg))
                    progressed = True
            data = client.transport.recv()
            if not data:
                return
            buf.extend(data)

    def _resync(self, client, buf: bytearray, exc) -> bool:
        """Skip one bad frame, report it, and keep the connection when the
        declared length is trustworthy."""
        client.offer(proto.encode(proto.ErrorMsg(str(exc))))
        if len(buf) < proto.HEADER.size:
            return False
        length = proto.HEADER.unpack_from(buf)[1]
        if length > proto.MAX_PAYLOAD:
            client.alive = False
            client.transport.close()
            return False
        del buf[:proto.HEADER.size + length]
        return True


def serve_forever(script, base_dir=".", host="127.0.0.1", port=0,
                  ready=None, poll: float = 0.25):
    """Run a server until interrupted; `ready(server)` fires once listening."""
    server = SimServer(script, base_dir, host, port).start()
    if ready is not None:
        ready(server)
    try:
        while server.running:
            time.sleep(poll)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return server
