"""Node configuration: one type, two roles."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .wire import Role

__all__ = ["Role", "NodeConfig", "parse_hostport"]

MAX_FRAME_BYTES = 64 * 1024 * 1024

SOURCE_KINDS = ("synthetic", "dir", "camera", "ui")
SINK_KINDS = ("null", "dir", "ui")


def parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"invalid port in {text!r}") from None


def _spec_kind(spec: str) -> str:
    return spec.split(":", 1)[0]


@dataclass
class NodeConfig:
    """Fully determines a node's behavior.

    ``source`` and ``sink`` are specs: "synthetic", "dir:<path>",
    "camera", "ui" for sources; "null", "dir:<path>", "ui" for sinks.
    The helper's source produces hand frames, the worker's produces
    scene frames. ``ui_port`` 0 disables the browser console gateway.
    """

    role: Role
    listen_port: int
    peer_addr: str
    width: int = 640
    height: int = 480
    fps_target: int = 15
    jpeg_quality: int = 80
    source: str = "synthetic"
    sink: str = "null"
    ui_port: int = 8080
    model_frozen: bool = False
    skin_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.role = Role(self.role)
        if self.fps_target < 1:
            raise ConfigError(f"fps_target must be >= 1, got {self.fps_target}")
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"invalid resolution {self.width}x{self.height}")
        if self.width * self.height * 3 > MAX_FRAME_BYTES:
            raise ConfigError(
                f"resolution {self.width}x{self.height} exceeds the "
                f"{MAX_FRAME_BYTES} byte frame cap")
        if not (1 <= self.jpeg_quality <= 100):
            raise ConfigError(f"jpeg_quality must be 1..100, got {self.jpeg_quality}")
        if _spec_kind(self.source) not in SOURCE_KINDS:
            raise ConfigError(f"unknown source spec {self.source!r}")
        if _spec_kind(self.sink) not in SINK_KINDS:
            raise ConfigError(f"unknown sink spec {self.sink!r}")
        if self.source == "ui" and self.role is not Role.HELPER:
            raise ConfigError("source=ui injects hand frames; helper role only")
        parse_hostport(self.peer_addr)

    @property
    def peer_host(self) -> str:
        return parse_hostport(self.peer_addr)[0]

    @property
    def peer_port(self) -> int:
        return parse_hostport(self.peer_addr)[1]
