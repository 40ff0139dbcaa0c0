"""Newline-delimited JSON wire protocol for predictor backends.

One frame per line. The serving side speaks first with a handshake frame
{"type": "handshake", "protocol": "slideprompt-predictor", "version": 1,
"nondeterministic": bool}; the client validates it before sending predict
frames. Binary payloads (packed masks, inline patches) travel as base64
with a crc32 so corruption surfaces as a protocol error rather than a
silently wrong mask. docs/protocol.md pins the exact schema.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import sys
import time
from collections.abc import Iterable

from .errors import (
    HandshakeError,
    PredictorTimeoutError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .predictor import (
    PROTOCOL_NAME,
    PROTOCOL_VERSION,
    MockOracleBackend,
    NoisyMockBackend,
    PatchSource,
    PredictorBackend,
    PredictRequest,
    PredictResponse,
    decode_bytes,
    encode_bytes,
    pack_mask,
    unpack_mask,
)
from .raster import LabelMask

MAX_FRAME_BYTES = 1 << 28
DEFAULT_TIMEOUT = 60.0


def encode_frame(frame: dict) -> bytes:
    return (json.dumps(frame, separators=(",", ":"), sort_keys=True) + "\n").encode()


def decode_frame(line: bytes) -> dict:
    try:
        obj = json.loads(line)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"unparseable frame: {e}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("type"), str):
        raise ProtocolError("frame is not an object with a string 'type'")
    return obj


def handshake_frame(nondeterministic: bool = False) -> dict:
    return {
        "type": "handshake",
        "protocol": PROTOCOL_NAME,
        "version": PROTOCOL_VERSION,
        "nondeterministic": bool(nondeterministic),
    }


def validate_handshake(frame: dict) -> bool:
    """Returns the peer's nondeterminism flag; raises HandshakeError otherwise."""
    if frame.get("type") != "handshake":
        raise HandshakeError(f"expected handshake, got {frame.get('type')!r}")
    if frame.get("protocol") != PROTOCOL_NAME:
        raise HandshakeError(f"unknown protocol {frame.get('protocol')!r}")
    if frame.get("version") != PROTOCOL_VERSION:
        raise HandshakeError(
            f"protocol version {frame.get('version')!r} not supported "
            f"(this client speaks {PROTOCOL_VERSION})"
        )
    return bool(frame.get("nondeterministic", False))


def _patch_to_wire(patch: PatchSource) -> dict:
    if patch.kind == "none":
        return {"kind": "none"}
    if patch.kind == "file":
        return {"kind": "file", "path": patch.path}
    return {"kind": "inline", "format": patch.format, **encode_bytes(patch.data)}


def _patch_from_wire(obj) -> PatchSource:
    if not isinstance(obj, dict) or obj.get("kind") not in ("none", "file", "inline"):
        raise ProtocolError(f"bad patch source {obj!r}")
    kind = obj["kind"]
    if kind == "none":
        return PatchSource()
    if kind == "file":
        if not isinstance(obj.get("path"), str):
            raise ProtocolError("file patch source needs a string path")
        return PatchSource("file", path=obj["path"])
    if obj.get("format") not in ("raw-f32", "raw-u8"):
        raise ProtocolError(f"unknown inline format {obj.get('format')!r}")
    return PatchSource("inline", format=obj["format"], data=decode_bytes(obj))


def request_to_frame(request: PredictRequest) -> dict:
    return {
        "type": "predict",
        "id": request.request_id,
        "width": request.width,
        "height": request.height,
        "window": [request.window_x0, request.window_y0],
        "points": [[x, y] for x, y in request.points],
        "multimask": request.multimask,
        "patch": _patch_to_wire(request.patch),
    }


def _require_int(frame: dict, key: str) -> int:
    v = frame.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ProtocolError(f"field {key!r} must be an integer, got {v!r}")
    return v


def frame_to_request(frame: dict) -> PredictRequest:
    if frame.get("type") != "predict":
        raise ProtocolError(f"not a predict frame: {frame.get('type')!r}")
    window = frame.get("window")
    if (
        not isinstance(window, list)
        or len(window) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in window)
    ):
        raise ProtocolError(f"bad window {window!r}")
    points = frame.get("points")
    if not isinstance(points, list) or not all(
        isinstance(p, list)
        and len(p) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) for v in p)
        for p in points
    ):
        raise ProtocolError(f"bad points {points!r}")
    return PredictRequest(
        request_id=_require_int(frame, "id"),
        width=_require_int(frame, "width"),
        height=_require_int(frame, "height"),
        window_x0=window[0],
        window_y0=window[1],
        points=tuple((p[0], p[1]) for p in points),
        patch=_patch_from_wire(frame.get("patch", {"kind": "none"})),
        multimask=bool(frame.get("multimask", False)),
    )


def response_to_frame(response: PredictResponse) -> dict:
    h, w = response.mask.shape
    return {
        "type": "result",
        "id": response.request_id,
        "width": w,
        "height": h,
        "mask": encode_bytes(pack_mask(response.mask)),
        "score": float(response.score),
    }


def frame_to_response(frame: dict) -> PredictResponse:
    if frame.get("type") != "result":
        raise ProtocolError(f"not a result frame: {frame.get('type')!r}")
    w = _require_int(frame, "width")
    h = _require_int(frame, "height")
    mask_obj = frame.get("mask")
    if not isinstance(mask_obj, dict):
        raise ProtocolError("result frame lacks a mask object")
    payload = decode_bytes(mask_obj)
    try:
        mask = unpack_mask(payload, w, h)
    except ValidationError as e:
        raise ProtocolError(str(e)) from None
    score = frame.get("score")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise ProtocolError(f"bad score {score!r}")
    return PredictResponse(_require_int(frame, "id"), mask, float(score))


def error_frame(code: str, message: str, request_id: int | None = None) -> dict:
    return {"type": "error", "code": code, "message": message, "id": request_id}


def raise_error_frame(frame: dict) -> None:
    code = frame.get("code", "protocol")
    message = f"backend error: {frame.get('message')!r}"
    if code == "validation":
        raise ValidationError(message)
    raise ProtocolError(message)


class _LineReader:
    """Deadline-aware line reader over a selectable file descriptor."""

    def __init__(self, fileno: int):
        self._fd = fileno
        self._buf = bytearray()
        self._eof = False

    def readline(self, timeout: float | None) -> bytes | None:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            idx = self._buf.find(b"\n")
            if idx >= 0:
                line = bytes(self._buf[: idx + 1])
                del self._buf[: idx + 1]
                return line
            if self._eof:
                if self._buf:
                    raise ProtocolError("stream ended mid-frame")
                return None
            if len(self._buf) > MAX_FRAME_BYTES:
                raise ProtocolError("frame exceeds size limit")
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise PredictorTimeoutError("no frame within deadline")
                ready, _, _ = select.select([self._fd], [], [], remaining)
                if not ready:
                    continue
            try:
                chunk = os.read(self._fd, 1 << 16)
            except OSError as e:
                raise TransportError(f"read failed: {e}") from None
            if not chunk:
                self._eof = True
            else:
                self._buf.extend(chunk)


class FrameChannel:
    """Frame-level adapter over (read fd, write file object)."""

    def __init__(self, read_fileno: int, write_file, on_close=None):
        self._reader = _LineReader(read_fileno)
        self._write_file = write_file
        self._on_close = on_close

    def write_frame(self, frame: dict) -> None:
        try:
            self._write_file.write(encode_frame(frame))
            self._write_file.flush()
        except (BrokenPipeError, OSError) as e:
            raise TransportError(f"write failed: {e}") from None

    def read_frame(self, timeout: float | None) -> dict | None:
        line = self._reader.readline(timeout)
        if line is None:
            return None
        return decode_frame(line)

    def close(self) -> None:
        try:
            self._write_file.close()
        except OSError:
            pass
        if self._on_close:
            self._on_close()


class WireBackend(PredictorBackend):
    """Client for any endpoint speaking the predictor protocol."""

    def __init__(self, channel: FrameChannel, timeout: float = DEFAULT_TIMEOUT):
        self._channel = channel
        self._timeout = timeout
        frame = channel.read_frame(timeout)
        if frame is None:
            raise HandshakeError("peer closed before handshake")
        self.nondeterministic = validate_handshake(frame)

    def _read_result(self) -> PredictResponse:
        frame = self._channel.read_frame(self._timeout)
        if frame is None:
            raise TransportError("peer closed mid-conversation")
        if frame.get("type") == "error":
            raise_error_frame(frame)
        return frame_to_response(frame)

    def predict(self, request: PredictRequest) -> PredictResponse:
        self._channel.write_frame(request_to_frame(request))
        response = self._read_result()
        if response.request_id != request.request_id:
            raise ProtocolError(
                f"response id {response.request_id} != request id {request.request_id}"
            )
        return response

    def predict_many(
        self, requests: Iterable[PredictRequest], max_in_flight: int = 4
    ) -> dict[int, PredictResponse]:
        """Pipelined requests; responses may arrive in any order."""
        queue = list(requests)
        expected = {r.request_id for r in queue}
        results: dict[int, PredictResponse] = {}
        in_flight = 0
        next_send = 0
        while len(results) < len(expected):
            while next_send < len(queue) and in_flight < max(1, max_in_flight):
                self._channel.write_frame(request_to_frame(queue[next_send]))
                next_send += 1
                in_flight += 1
            response = self._read_result()
            if response.request_id not in expected:
                raise ProtocolError(f"unexpected response id {response.request_id}")
            if response.request_id in results:
                raise ProtocolError(f"duplicate response id {response.request_id}")
            results[response.request_id] = response
            in_flight -= 1
        return results

    def close(self) -> None:
        try:
            self._channel.write_frame({"type": "shutdown"})
        except (TransportError, ValueError):
            pass
        self._channel.close()


def connect_exec(command: str, timeout: float = DEFAULT_TIMEOUT) -> WireBackend:
    """Spawn `command` as a child process speaking the protocol on its pipes."""
    argv = shlex.split(command)
    try:
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
    except OSError as e:
        raise TransportError(f"cannot spawn {argv[0]!r}: {e}") from None

    def reap():
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    channel = FrameChannel(proc.stdout.fileno(), proc.stdin, on_close=reap)
    return WireBackend(channel, timeout)


def connect_tcp(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> WireBackend:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as e:
        raise TransportError(f"cannot connect to {host}:{port}: {e}") from None
    sock.setblocking(True)
    write_file = sock.makefile("wb")
    channel = FrameChannel(sock.fileno(), write_file, on_close=sock.close)
    return WireBackend(channel, timeout)


def serve_connection(backend: PredictorBackend, recv, send) -> None:
    """Handshake-first request/response loop over binary file objects.

    Protocol violations answer with an error frame and close the
    connection; validation failures answer and keep serving.
    """

    def reply(frame: dict) -> None:
        send.write(encode_frame(frame))
        send.flush()

    reply(handshake_frame(backend.nondeterministic))
    while True:
        line = recv.readline()
        if not line:
            return
        if len(line) > MAX_FRAME_BYTES:
            reply(error_frame("protocol", "frame exceeds size limit"))
            return
        try:
            frame = decode_frame(line)
        except ProtocolError as e:
            reply(error_frame("protocol", str(e)))
            return
        kind = frame.get("type")
        if kind == "shutdown":
            return
        if kind != "predict":
            reply(error_frame("protocol", f"unexpected frame type {kind!r}"))
            return
        try:
            request = frame_to_request(frame)
        except ProtocolError as e:
            reply(error_frame("protocol", str(e)))
            return
        except ValidationError as e:
            reply(error_frame("validation", str(e), frame.get("id")))
            continue
        try:
            response = backend.predict(request)
        except ValidationError as e:
            reply(error_frame("validation", str(e), request.request_id))
            continue
        reply(response_to_frame(response))


def serve_stdio(backend: PredictorBackend) -> None:
    serve_connection(backend, sys.stdin.buffer, sys.stdout.buffer)


class TcpServer:
    """Single-connection-at-a-time TCP host for a backend."""

    def __init__(self, backend: PredictorBackend, host: str = "127.0.0.1", port: int = 0):
        self._backend = backend
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(4)
        self.host, self.port = self._sock.getsockname()

    def serve_once(self) -> None:
        conn, _ = self._sock.accept()
        with conn:
            recv = conn.makefile("rb")
            send = conn.makefile("wb")
            serve_connection(self._backend, recv, send)

    def serve_forever(self) -> None:
        while True:
            try:
                self.serve_once()
            except OSError:
                return

    def close(self) -> None:
        self._sock.close()


def make_backend(
    spec: str,
    gt: LabelMask | None = None,
    connectivity: int = 8,
    timeout: float = DEFAULT_TIMEOUT,
    noise: dict | None = None,
) -> PredictorBackend:
    """Build a backend from a CLI-style spec string.

    Accepted specs: "mock", "noisy-mock" (both need ground truth),
    "exec:<command>", "tcp:<host>:<port>".
    """
    if spec == "mock":
        if gt is None:
            raise ValidationError("mock backend requires a ground-truth mask")
        return MockOracleBackend(gt, connectivity)
    if spec == "noisy-mock":
        if gt is None:
            raise ValidationError("noisy-mock backend requires a ground-truth mask")
        return NoisyMockBackend(gt, connectivity, **(noise or {}))
    if spec.startswith("exec:"):
        return connect_exec(spec[len("exec:") :], timeout)
    if spec.startswith("tcp:"):
        rest = spec[len("tcp:") :]
        host, _, port_s = rest.rpartition(":")
        if not host or not port_s.isdigit():
            raise ValidationError(f"bad tcp backend spec {spec!r}")
        return connect_tcp(host, int(port_s), timeout)
    raise ValidationError(f"unknown backend spec {spec!r}")
