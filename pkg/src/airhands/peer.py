"""Node runtime: sources, segmentation, compositing, codec and wire
assembled into the helper and worker pipelines.

Each node simultaneously listens (inbound: the peer's stream) and
connects out (outbound: its own stream), so startup order is
irrelevant. Activities communicate only through LatestSlot mailboxes
and the stats tracker; no activity blocks another across I/O:

  * listener thread + per-connection reader: HELLO handshake, then
    decodes FRAMEs into the inbound slot,
  * connector thread: dials the peer with exponential backoff, sends
    HELLO, then pumps the outbound slot (HEARTBEAT when idle),
  * tick thread: drives the role's pipeline at fps_target off a
    monotonic clock,
  * stats thread: 1 Hz snapshot line + heartbeat-death watchdog.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

from . import skin
from .codec import decode_jpeg, encode_jpeg
from .compositor import composite
from .config import NodeConfig
from .errors import AirhandsError, ConfigError, DecodeError, DimensionError, ProtocolError
from .frames import RawFrame, StreamId, frame_from_array
from .slots import LatestSlot
from .sources import build_sink, build_source
from .stats import LinkState, StatsTracker
from .wire import (
    BYE_PROTOCOL_ERROR, BYE_SHUTDOWN, PROTOCOL_VERSION,
    Bye, FrameMsg, Heartbeat, Hello, HelloAck, Role, WireMessage,
    decode_stream, encode_message, negotiate,
)

import numpy as np

log = logging.getLogger(__name__)

__all__ = ["LiveParams", "Node", "helper_tick", "worker_tick", "run_node",
           "HEARTBEAT_INTERVAL_S", "PEER_DEAD_S"]

HEARTBEAT_INTERVAL_S = 1.0
PEER_DEAD_S = 5.0
RETRY_INITIAL_S = 0.25
RETRY_MAX_S = 4.0
HANDSHAKE_TIMEOUT_S = 3.0

_LIVE_KEYS = ("jpeg.quality", "skin.s_min", "skin.v_min", "skin.alpha",
              "skin.tau", "skin.frozen")


class LiveParams:
    """Runtime-tunable parameters, applied atomically at tick boundaries."""

    def __init__(self, cfg: NodeConfig):
        self._lock = threading.Lock()
        self._values = {
            "jpeg.quality": cfg.jpeg_quality,
            "skin.s_min": cfg.skin_params.get("s_min", 0.20),
            "skin.v_min": cfg.skin_params.get("v_min", 0.15),
            "skin.alpha": cfg.skin_params.get("alpha", 0.05),
            "skin.tau": cfg.skin_params.get("tau", 0.5 / skin.HUE_BINS),
            "skin.frozen": cfg.model_frozen,
        }
        self.version = 0

    def set(self, key: str, raw: str):
        """Validate and apply one `set` command; returns the stored value.

        Raises ConfigError (value untouched) on any invalid key/value.
        """
        if key not in _LIVE_KEYS:
            raise ConfigError(f"unknown parameter {key!r}")
        if key == "jpeg.quality":
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(f"{key} expects an integer") from None
            if not (1 <= value <= 100):
                raise ConfigError(f"{key} out of range 1..100")
        elif key == "skin.frozen":
            if raw not in ("true", "false", "1", "0"):
                raise ConfigError(f"{key} expects true/false")
            value = raw in ("true", "1")
        else:
            try:
                value = float(raw)
            except ValueError:
                raise ConfigError(f"{key} expects a number") from None
            if key == "skin.alpha":
                if not (0.0 < value <= 1.0):
                    raise ConfigError(f"{key} out of range (0, 1]")
            elif not (0.0 <= value <= 1.0):
                raise ConfigError(f"{key} out of range 0..1")
        with self._lock:
            self._values[key] = value
            self.version += 1
        return value

    def get(self, key: str):
        with self._lock:
            return self._values[key]

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._values)


def _neutral_scene(hand: RawFrame) -> RawFrame:
    gray = np.full((hand.height, hand.width, 3), 128, dtype=np.uint8)
    return frame_from_array(gray, hand.seq, hand.capture_ts, StreamId.SCENE)


def helper_tick(scene_slot: LatestSlot, hand_frame: RawFrame,
                model: skin.SkinModel, cfg: NodeConfig,
                quality: int | None = None, frozen: bool | None = None,
                ) -> tuple[RawFrame, skin.SkinModel, FrameMsg | None]:
    """One helper pipeline step: segment, adapt, composite, encode.

    Returns the local preview composite, the (possibly adapted) model
    and the outbound FRAME, or None when no scene has arrived yet (the
    preview then shows the extracted hand over neutral gray).
    """
    if (hand_frame.width, hand_frame.height) != (cfg.width, cfg.height):
        raise DimensionError(
            f"hand frame {hand_frame.width}x{hand_frame.height} does not match "
            f"configured {cfg.width}x{cfg.height}")
    if quality is None:
        quality = cfg.jpeg_quality
    if frozen is None:
        frozen = cfg.model_frozen

    mask = skin.segment(hand_frame, model)
    new_model = model if frozen else skin.adapt(model, hand_frame, mask)

    scene = scene_slot.peek()
    if scene is None:
        preview = composite(_neutral_scene(hand_frame), hand_frame, mask)
        return preview, new_model, None

    comp = composite(scene, hand_frame, mask)
    encoded = encode_jpeg(comp, quality)
    outbound = FrameMsg(int(StreamId.COMPOSITE), comp.seq, comp.capture_ts,
                        encoded.payload)
    return comp, new_model, outbound


def worker_tick(scene_frame: RawFrame, composite_slot: LatestSlot,
                cfg: NodeConfig, quality: int | None = None,
                ) -> tuple[RawFrame | None, FrameMsg]:
    """One worker pipeline step: ship the scene, show the newest composite."""
    if (scene_frame.width, scene_frame.height) != (cfg.width, cfg.height):
        raise DimensionError(
            f"scene frame {scene_frame.width}x{scene_frame.height} does not "
            f"match configured {cfg.width}x{cfg.height}")
    if quality is None:
        quality = cfg.jpeg_quality
    encoded = encode_jpeg(scene_frame, quality)
    outbound = FrameMsg(int(StreamId.SCENE), scene_frame.seq,
                        scene_frame.capture_ts, encoded.payload)
    return composite_slot.take(), outbound


class _SocketReader:
    """Buffers one connection's bytes and yields decoded wire messages."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = bytearray()
        self.pending: list[WireMessage] = []

    def next_message(self, timeout: float) -> WireMessage | None:
        """One message, or None on timeout. Raises on EOF/protocol error."""
        if self.pending:
            return self.pending.pop(0)
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                return None
            if not chunk:
                raise ConnectionError("peer closed the connection")
            self.buf.extend(chunk)
            messages, consumed = decode_stream(self.buf)
            if consumed:
                del self.buf[:consumed]
            if messages:
                self.pending = messages[1:]
                return messages[0]


class Node:
    """One running helper or worker node. start()/stop() lifecycle."""

    def __init__(self, cfg: NodeConfig, print_stats: bool = False,
                 on_display=None):
        self.cfg = cfg
        self.live = LiveParams(cfg)
        self.tracker = StatsTracker()
        self.print_stats = print_stats
        self.on_display = on_display

        self.inbound_slot: LatestSlot[RawFrame] = LatestSlot()
        self.outbound_slot: LatestSlot[FrameMsg] = LatestSlot()
        self.hand_inject_slot: LatestSlot[RawFrame] = LatestSlot()
        self.received_stream_ids: set[int] = set()

        self.model = skin.default_model(**{
            k: v for k, v in cfg.skin_params.items()
            if k in ("s_min", "v_min", "alpha", "tau", "bootstrap_lo",
                     "bootstrap_hi", "adapt_min_pixels")})
        self._applied_live_version = 0

        self.gateway = None
        if cfg.ui_port:
            from .gateway import UiGateway
            self.gateway = UiGateway(cfg, self.live, self.hand_inject_slot)

        self.source = build_source(cfg, inject_slot=self.hand_inject_slot)
        self.sink = build_sink(cfg)

        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listen_sock: socket.socket | None = None
        self._inbound_lock = threading.Lock()
        self._inbound_conn: socket.socket | None = None
        self._inbound_up = False
        self._outbound_up = False
        self._outbound_sock: socket.socket | None = None

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        """Bind the listener and launch all activities.

        Raises OSError when the listen or UI port cannot be bound.
        """
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(("0.0.0.0", self.cfg.listen_port))
        sock.listen(2)
        sock.settimeout(0.25)
        self._listen_sock = sock
        if self.cfg.listen_port == 0:
            self.cfg.listen_port = sock.getsockname()[1]

        if self.gateway is not None:
            self.gateway.start()

        for name, target in (("listener", self._accept_loop),
                             ("connector", self._connector_loop),
                             ("tick", self._tick_loop),
                             ("stats", self._stats_loop)):
            t = threading.Thread(target=target, name=f"{self.role_name}-{name}",
                                 daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self, graceful: bool = True) -> None:
        """Shut the node down. graceful=False skips the BYE (crash test aid)."""
        self._stop.set()
        if graceful and self._outbound_up and self._outbound_sock is not None:
            try:
                self._outbound_sock.sendall(encode_message(Bye(BYE_SHUTDOWN)))
            except OSError:
                pass
        for s in (self._outbound_sock, self._inbound_conn, self._listen_sock):
            if s is not None:
                try:
                    s.close()
                except OSError:
                    pass
        if self.gateway is not None:
            self.gateway.stop()
        for t in self._threads:
            t.join(timeout=3.0)
        self.sink.close()
        self.tracker.set_link(LinkState.DOWN)

    @property
    def role_name(self) -> str:
        return self.cfg.role.name.lower()

    @property
    def link_state(self) -> LinkState:
        return self.tracker.link

    def _update_link(self) -> None:
        if self._stop.is_set():
            self.tracker.set_link(LinkState.DOWN)
        elif self._inbound_up and self._outbound_up:
            self.tracker.set_link(LinkState.UP)
        else:
            self.tracker.set_link(LinkState.CONNECTING)

    # -- inbound ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._listen_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with self._inbound_lock:
                if self._inbound_conn is not None:
                    # a reconnecting peer supersedes the stale connection
                    try:
                        self._inbound_conn.close()
                    except OSError:
                        pass
                self._inbound_conn = conn
            t = threading.Thread(target=self._serve_inbound, args=(conn,),
                                 name=f"{self.role_name}-inbound", daemon=True)
            t.start()

    def _serve_inbound(self, conn: socket.socket) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        reader = _SocketReader(conn)
        try:
            hello = reader.next_message(HANDSHAKE_TIMEOUT_S)
            if hello is None:
                return
            ack = negotiate(self.cfg, hello)
            conn.sendall(encode_message(ack))
            if not ack.accepted:
                log.info("%s: rejected inbound handshake, reason=%d",
                         self.role_name, ack.reason)
                return
            self._inbound_up = True
            self._update_link()
            self._read_frames(conn, reader)
        except ProtocolError as exc:
            log.warning("%s: protocol error on inbound connection: %s",
                        self.role_name, exc)
            try:
                conn.sendall(encode_message(Bye(BYE_PROTOCOL_ERROR)))
            except OSError:
                pass
        except (ConnectionError, OSError):
            pass
        finally:
            with self._inbound_lock:
                if self._inbound_conn is conn:
                    self._inbound_conn = None
                    self._inbound_up = False
            self._update_link()
            try:
                conn.close()
            except OSError:
                pass

    def _read_frames(self, conn: socket.socket, reader: _SocketReader) -> None:
        last_recv = time.monotonic()
        while not self._stop.is_set():
            msg = reader.next_message(timeout=0.5)
            now = time.monotonic()
            if msg is None:
                if now - last_recv > PEER_DEAD_S:
                    log.info("%s: peer silent for %.1fs, dropping connection",
                             self.role_name, now - last_recv)
                    return
                continue
            last_recv = now
            if isinstance(msg, Bye):
                log.info("%s: peer sent BYE reason=%d", self.role_name, msg.reason)
                return
            if isinstance(msg, Heartbeat):
                continue
            if isinstance(msg, FrameMsg):
                self.received_stream_ids.add(msg.stream_id)
                try:
                    frame = decode_jpeg(msg.payload, msg.seq, msg.capture_ts,
                                        msg.stream_id)
                except AirhandsError as exc:
                    log.warning("%s: undecodable frame seq=%d: %s",
                                self.role_name, msg.seq, exc)
                    self.tracker.mark_dropped()
                    continue
                self.inbound_slot.put(frame)
                self.tracker.mark_in()
                continue
            raise ProtocolError(f"unexpected {type(msg).__name__} after handshake")

    # -- outbound --------------------------------------------------------

    def _connector_loop(self) -> None:
        backoff = RETRY_INITIAL_S
        while not self._stop.is_set():
            sock = None
            try:
                sock = socket.create_connection(
                    (self.cfg.peer_host, self.cfg.peer_port), timeout=1.0)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                hello = Hello(PROTOCOL_VERSION, self.cfg.role, self.cfg.width,
                              self.cfg.height, self.cfg.fps_target)
                sock.sendall(encode_message(hello))
                reader = _SocketReader(sock)
                ack = reader.next_message(HANDSHAKE_TIMEOUT_S)
                if not isinstance(ack, HelloAck) or not ack.accepted:
                    reason = ack.reason if isinstance(ack, HelloAck) else "no ack"
                    log.info("%s: handshake rejected by peer (reason=%s)",
                             self.role_name, reason)
                    sock.close()
                    self._sleep(backoff)
                    backoff = min(backoff * 2, RETRY_MAX_S)
                    continue
                backoff = RETRY_INITIAL_S
                self._outbound_sock = sock
                self._outbound_up = True
                self._update_link()
                self._pump_outbound(sock)
            except (ConnectionError, OSError, ProtocolError):
                pass
            finally:
                self._outbound_up = False
                self._outbound_sock = None
                self._update_link()
                if sock is not None:
                    try:
                        sock.close()
                    except OSError:
                        pass
            if not self._stop.is_set():
                self._sleep(backoff)
                backoff = min(backoff * 2, RETRY_MAX_S)

    def _pump_outbound(self, sock: socket.socket) -> None:
        last_send = time.monotonic()
        while not self._stop.is_set():
            msg = self.outbound_slot.wait_take(timeout=0.25)
            now = time.monotonic()
            if msg is not None:
                sock.sendall(encode_message(msg))
                self.tracker.mark_out()
                last_send = now
            elif now - last_send >= HEARTBEAT_INTERVAL_S:
                sock.sendall(encode_message(Heartbeat(int(time.time() * 1000))))
                last_send = now

    # -- pipeline --------------------------------------------------------

    def _apply_live_model_params(self) -> None:
        if self.live.version == self._applied_live_version:
            return
        self._applied_live_version = self.live.version
        snap = self.live.snapshot()
        self.model = self.model.with_params(
            s_min=snap["skin.s_min"], v_min=snap["skin.v_min"],
            alpha=snap["skin.alpha"], tau=snap["skin.tau"])

    def _tick_loop(self) -> None:
        period = 1.0 / self.cfg.fps_target
        next_t = time.monotonic()
        while not self._stop.is_set():
            now = time.monotonic()
            if now < next_t:
                self._stop.wait(next_t - now)
                if self._stop.is_set():
                    return
            next_t += period
            if next_t < time.monotonic() - period:
                next_t = time.monotonic() + period  # fell behind; resync
            try:
                self._tick_once()
            except AirhandsError as exc:
                self.tracker.mark_dropped()
                log.warning("%s: tick error: %s", self.role_name, exc)

    def _tick_once(self) -> None:
        now_ms = int(time.time() * 1000)
        frame = self.source.next_frame(now_ms)
        if frame is None:
            return
        quality = self.live.get("jpeg.quality")

        if self.cfg.role is Role.HELPER:
            self._apply_live_model_params()
            display, self.model, outbound = helper_tick(
                self.inbound_slot, frame, self.model, self.cfg,
                quality=quality, frozen=self.live.get("skin.frozen"))
        else:
            display, outbound = worker_tick(frame, self.inbound_slot, self.cfg,
                                            quality=quality)

        if outbound is not None:
            self.outbound_slot.put(outbound)
        if display is not None:
            self.sink.write(display)
            self.tracker.mark_displayed(now_ms - display.capture_ts)
            if self.gateway is not None:
                self.gateway.push_video(display, quality)
            if self.on_display is not None:
                self.on_display(display)

    # -- stats -----------------------------------------------------------

    def _stats_loop(self) -> None:
        while not self._stop.wait(1.0):
            snap = self.tracker.snapshot()
            line = snap.render(self.role_name)
            if self.print_stats:
                print(line, flush=True)
            if self.gateway is not None:
                self.gateway.push_stats(snap)

    def _sleep(self, seconds: float) -> None:
        self._stop.wait(seconds)


def run_node(cfg: NodeConfig) -> int:
    """Run one node until interrupted; returns a process exit status."""
    node = Node(cfg, print_stats=True)
    try:
        node.start()
    except OSError as exc:
        log.error("startup failed: %s", exc)
        return 1
    log.info("%s node up: listen=%d peer=%s ui_port=%s", node.role_name,
             cfg.listen_port, cfg.peer_addr, cfg.ui_port or "off")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        node.stop()
    return 0
