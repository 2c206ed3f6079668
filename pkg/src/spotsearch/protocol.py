"""Batched remote scoring over a length-prefixed binary protocol, plus texture tiling.

Every frame on the stream is ``u32 length`` followed by ``length`` payload bytes.
All integers and floats are little-endian.

Request payload::

    u16 version | u64 request_id | u32 m | m * (f64 pos[3], f64 dir[3], f32 fov)

Response payload::

    u16 version | u64 request_id | u8 status | u32 count | count * f32 score

A connection carries one request at a time; responses come back in order.
"""

from __future__ import annotations

import logging
import math
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from spotsearch.geometry import CameraPose
from spotsearch.scorers import ScorerError

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
STATUS_OK = 0
STATUS_BAD_REQUEST = 1
STATUS_SCORER_ERROR = 2
MAX_FRAME = 64 * 1024 * 1024

_LEN = struct.Struct("<I")
_REQ_HEAD = struct.Struct("<HQI")
_RESP_HEAD = struct.Struct("<HQBI")
_POSE_DTYPE = np.dtype([("pos", "<f8", (3,)), ("dir", "<f8", (3,)), ("fov", "<f4")])
POSE_SIZE = _POSE_DTYPE.itemsize  # 52
UNIT_TOL = 1e-6


class ProtocolError(ValueError):
    """A frame could not be decoded. ``request_id`` is set when the header was readable."""

    def __init__(self, message: str, request_id: int = 0):
        super().__init__(message)
        self.request_id = request_id


@dataclass(frozen=True)
class ScoreRequest:
    request_id: int
    poses: tuple[CameraPose, ...]
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class ScoreResponse:
    request_id: int
    status: int
    scores: tuple[float, ...] = field(default=())
    version: int = PROTOCOL_VERSION


def encode_request(req: ScoreRequest) -> bytes:
    m = len(req.poses)
    if m < 1:
        raise ValueError("a score request needs at least one pose")
    body = np.empty(m, dtype=_POSE_DTYPE)
    body["pos"] = [p.position for p in req.poses]
    body["dir"] = [p.direction for p in req.poses]
    body["fov"] = [p.fov_degrees for p in req.poses]
    return _REQ_HEAD.pack(req.version, req.request_id, m) + body.tobytes()


def decode_request(payload: bytes) -> ScoreRequest:
    if len(payload) < _REQ_HEAD.size:
        raise ProtocolError(f"request header truncated ({len(payload)} bytes)")
    version, request_id, m = _REQ_HEAD.unpack_from(payload)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", request_id)
    if m < 1:
        raise ProtocolError("request carries no poses", request_id)
    expected = _REQ_HEAD.size + m * POSE_SIZE
    if len(payload) != expected:
        raise ProtocolError(f"request payload is {len(payload)} bytes, expected {expected} for {m} poses", request_id)
    body = np.frombuffer(payload, dtype=_POSE_DTYPE, count=m, offset=_REQ_HEAD.size)
    if not (np.isfinite(body["pos"]).all() and np.isfinite(body["dir"]).all()):
        raise ProtocolError("non-finite pose values", request_id)
    norms = np.sqrt((body["dir"] ** 2).sum(axis=1))
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ProtocolError("pose directions must be unit vectors", request_id)
    fov = body["fov"].astype(float)
    if np.any((fov <= 0) | (fov >= 180)):
        raise ProtocolError("fov must lie in (0, 180)", request_id)
    poses = tuple(
        CameraPose(tuple(p), tuple(d), float(f)) for p, d, f in zip(body["pos"].tolist(), body["dir"].tolist(), fov)
    )
    return ScoreRequest(request_id, poses, version)


def encode_response(resp: ScoreResponse) -> bytes:
    scores = np.asarray(resp.scores, dtype="<f4")
    return _RESP_HEAD.pack(resp.version, resp.request_id, resp.status, len(scores)) + scores.tobytes()


def decode_response(payload: bytes) -> ScoreResponse:
    if len(payload) < _RESP_HEAD.size:
        raise ProtocolError(f"response header truncated ({len(payload)} bytes)")
    version, request_id, status, count = _RESP_HEAD.unpack_from(payload)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", request_id)
    if len(payload) != _RESP_HEAD.size + 4 * count:
        raise ProtocolError("response payload length does not match its score count", request_id)
    scores = np.frombuffer(payload, dtype="<f4", count=count, offset=_RESP_HEAD.size)
    return ScoreResponse(request_id, status, tuple(float(s) for s in scores), version)


def frame(payload: bytes) -> bytes:
    return _LEN.pack(len(payload)) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one frame; ``None`` on a clean end of stream before the length prefix."""
    head = _recv_exact(sock, _LEN.size)
    if head is None:
        return None
    (length,) = _LEN.unpack(head)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds the {MAX_FRAME} byte limit")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise ConnectionError("stream ended inside a frame")
    return payload


def handle_payload(payload: bytes, scorer) -> ScoreResponse:
    """Answer one request payload with ``scorer``; never raises."""
    try:
        req = decode_request(payload)
    except ProtocolError as exc:
        logger.info("bad request: %s", exc)
        return ScoreResponse(exc.request_id, STATUS_BAD_REQUEST)
    try:
        scores = scorer.score_batch(list(req.poses))
        if len(scores) != len(req.poses):
            raise ScorerError(f"scorer returned {len(scores)} scores for {len(req.poses)} poses")
    except Exception:
        logger.exception("scorer failed on request %d", req.request_id)
        return ScoreResponse(req.request_id, STATUS_SCORER_ERROR)
    return ScoreResponse(req.request_id, STATUS_OK, tuple(scores))


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        sock: socket.socket = self.request
        while True:
            try:
                payload = read_frame(sock)
            except ProtocolError as exc:
                sock.sendall(frame(encode_response(ScoreResponse(0, STATUS_BAD_REQUEST))))
                logger.info("closing connection: %s", exc)
                return
            except (ConnectionError, OSError):
                return
            if payload is None:
                return
            resp = handle_payload(payload, self.server.scorer)
            try:
                sock.sendall(frame(encode_response(resp)))
            except OSError:
                return


class ScoreServer(socketserver.ThreadingTCPServer):
    """Threaded TCP scoring server; each connection is served in its own thread."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, scorer, host: str = "127.0.0.1", port: int = 0):
        self.scorer = scorer
        super().__init__((host, port), _Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return host, port

    def start(self) -> ScoreServer:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> ScoreServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(scorer, host: str = "127.0.0.1", port: int = 0, ready=None) -> None:
    """Serve ``scorer`` until interrupted. ``ready`` is called with the bound address."""
    server = ScoreServer(scorer, host, port)
    logger.info("scoring server listening on %s:%d", *server.address)
    if ready is not None:
        ready(server.address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("shutting down")
    finally:
        server.server_close()


class RemoteScorer:
    """Scorer that forwards each batch to a scoring server as one request."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._next_id = 1
        self._lock = threading.Lock()

    @classmethod
    def from_endpoint(cls, endpoint: str, timeout: float = 30.0) -> RemoteScorer:
        host, sep, port = endpoint.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
        return cls(host, int(port), timeout)

    def _connect(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return self._sock

    def score_batch(self, poses: Sequence[CameraPose]) -> list[float]:
        if not poses:
            raise ValueError("score_batch needs at least one pose")
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            payload = encode_request(ScoreRequest(request_id, tuple(poses)))
            try:
                sock = self._connect()
                sock.sendall(frame(payload))
                reply = read_frame(sock)
            except (OSError, ProtocolError) as exc:
                self.close()
                raise ScorerError(f"remote scorer {self.host}:{self.port} failed: {exc}") from exc
            if reply is None:
                self.close()
                raise ScorerError(f"remote scorer {self.host}:{self.port} closed the connection")
        resp = decode_response(reply)
        if resp.request_id != request_id:
            raise ScorerError(f"response id {resp.request_id} does not match request {request_id}")
        if resp.status != STATUS_OK:
            raise ScorerError(f"remote scorer returned status {resp.status}")
        if len(resp.scores) != len(poses):
            raise ScorerError(f"remote scorer returned {len(resp.scores)} scores for {len(poses)} poses")
        return list(resp.scores)

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self) -> RemoteScorer:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def remote_scorer(endpoint: str) -> RemoteScorer:
    return RemoteScorer.from_endpoint(endpoint)


# Texture tiling: n_cam images of tile_h x tile_w pixels are packed row-major into
# square textures of side sqrt(n_cam) tiles.


class TileSlot(NamedTuple):
    texture: int
    row: int
    col: int


@dataclass(frozen=True)
class TileLayout:
    n_cam: int
    tile_h: int = 224
    tile_w: int = 224

    def __post_init__(self) -> None:
        if self.n_cam < 1 or math.isqrt(self.n_cam) ** 2 != self.n_cam:
            raise ValueError(f"n_cam must be a positive square number, got {self.n_cam}")
        if self.tile_h < 1 or self.tile_w < 1:
            raise ValueError("tile dimensions must be positive")

    @property
    def side(self) -> int:
        return math.isqrt(self.n_cam)

    @property
    def texture_shape(self) -> tuple[int, int]:
        return self.side * self.tile_h, self.side * self.tile_w

    def texture_count(self, n_images: int) -> int:
        return -(-n_images // self.n_cam)


def tile_indices(layout: TileLayout, k: int) -> TileSlot:
    """Texture number and top-left pixel offset of image ``k``."""
    if k < 0:
        raise ValueError(f"image index must be non-negative, got {k}")
    texture, local = divmod(k, layout.n_cam)
    r, c = divmod(local, layout.side)
    return TileSlot(texture, r * layout.tile_h, c * layout.tile_w)


def tile(images: np.ndarray, layout: TileLayout) -> bytes:
    """Pack ``(n, tile_h, tile_w, C)`` uint8 images into zero-padded textures."""
    images = np.asarray(images, dtype=np.uint8)
    n, h, w, ch = images.shape
    if (h, w) != (layout.tile_h, layout.tile_w):
        raise ValueError(f"images are {h}x{w}, layout expects {layout.tile_h}x{layout.tile_w}")
    t, s = layout.texture_count(n), layout.side
    padded = np.zeros((t * layout.n_cam, h, w, ch), dtype=np.uint8)
    padded[:n] = images
    tex = padded.reshape(t, s, s, h, w, ch).transpose(0, 1, 3, 2, 4, 5)
    return tex.reshape(t, s * h, s * w, ch).tobytes()


def untile(buffer: bytes, layout: TileLayout, n_images: int, channels: int = 3) -> np.ndarray:
    """Inverse of :func:`tile`: raw texture bytes to ``(n_images, tile_h, tile_w, channels)``."""
    if n_images < 1:
        raise ValueError("n_images must be positive")
    t, s = layout.texture_count(n_images), layout.side
    h, w = layout.tile_h, layout.tile_w
    expected = t * (s * h) * (s * w) * channels
    if len(buffer) != expected:
        raise ValueError(f"buffer has {len(buffer)} bytes, expected {expected} for {t} texture(s)")
    tex = np.frombuffer(buffer, dtype=np.uint8).reshape(t, s, h, s, w, channels)
    images = tex.transpose(0, 1, 3, 2, 4, 5).reshape(t * layout.n_cam, h, w, channels)
    return images[:n_images].copy()
