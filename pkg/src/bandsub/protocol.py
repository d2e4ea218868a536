"""Frame protocol for talking to an external denoiser/codec server.

Every message is one frame over a stream transport:

    frame = u32 little-endian header length || UTF-8 JSON header || raw payload

Request header fields: ``op`` in {handshake, predict_eps, encode, decode,
shutdown}; ``shape`` [c, h, w]; ``dtype`` "f32" | "f64"; ``timestep``
integer; ``cond`` string id; ``payload_bytes`` integer. The payload holds
row-major (c, i, j) little-endian floats. Responses reuse the frame layout
with ``status`` "ok" | "protocol_error" | "remote_error" (plus ``message``
on errors); the handshake response carries ``n_train`` and the full
``alpha_bar`` table as a JSON array. Exactly one response per request, in
order; a server may answer with f32 payloads, which the client widens to
f64.
"""

from __future__ import annotations

import json
import os
import socket
import struct

import numpy as np

from .tensor_io import validate_feature

ENV_BRIDGE_ADDR = "FBS_BRIDGE_ADDR"

OP_HANDSHAKE = "handshake"
OP_PREDICT_EPS = "predict_eps"
OP_ENCODE = "encode"
OP_DECODE = "decode"
OP_SHUTDOWN = "shutdown"

STATUS_OK = "ok"
STATUS_PROTOCOL_ERROR = "protocol_error"
STATUS_REMOTE_ERROR = "remote_error"

_DTYPES = {"f32": "<f4", "f64": "<f8"}
_LEN_STRUCT = struct.Struct("<I")


class BridgeError(Exception):
    """Base class for bridge failures."""


class TransportError(BridgeError):
    """The connection failed or closed mid-frame; safe to retry at a higher level."""


class ProtocolError(BridgeError):
    """The peer violated the frame protocol or the agreed contract."""


class RemoteError(BridgeError):
    """The remote model raised; message passed through verbatim."""


def pack_payload(arr: np.ndarray, dtype: str = "f64") -> bytes:
    if dtype not in _DTYPES:
        raise ProtocolError(f"unknown dtype {dtype!r}")
    return np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()


def unpack_payload(payload: bytes, shape, dtype: str) -> np.ndarray:
    if dtype not in _DTYPES:
        raise ProtocolError(f"unknown dtype {dtype!r}")
    c, h, w = (int(v) for v in shape)
    expected = c * h * w * (4 if dtype == "f32" else 8)
    if len(payload) != expected:
        raise ProtocolError(f"payload has {len(payload)} bytes, header declares {expected}")
    return np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(c, h, w).astype(np.float64)


def write_frame(stream, header: dict, payload: bytes = b"") -> bytes:
    """Encode and send one frame; returns the raw bytes that were sent."""
    head = dict(header)
    head["payload_bytes"] = len(payload)
    encoded = json.dumps(head, separators=(",", ":")).encode("utf-8")
    raw = _LEN_STRUCT.pack(len(encoded)) + encoded + payload
    try:
        stream.sendall(raw)
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc
    return raw


def _recv_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        try:
            chunk = stream.recv(remaining)
        except OSError as exc:
            raise TransportError(f"recv failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream) -> tuple[dict, bytes, bytes]:
    """Receive one frame; returns (header, payload, raw bytes received)."""
    head_len_raw = _recv_exact(stream, _LEN_STRUCT.size)
    (head_len,) = _LEN_STRUCT.unpack(head_len_raw)
    head_raw = _recv_exact(stream, head_len)
    try:
        header = json.loads(head_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"unparseable frame header: {exc}") from exc
    if not isinstance(header, dict):
        raise ProtocolError("frame header is not a JSON object")
    payload_bytes = int(header.get("payload_bytes", 0))
    payload = _recv_exact(stream, payload_bytes) if payload_bytes else b""
    return header, payload, head_len_raw + head_raw + payload


class FrameRecorder:
    """Collects the raw frames a client exchanges, for transcript fixtures."""

    def __init__(self):
        self.entries: list[tuple[str, bytes]] = []

    def record(self, direction: str, raw: bytes) -> None:
        self.entries.append((direction, raw))

    def dump_jsonl(self, path) -> None:
        import base64

        with open(path, "w", encoding="utf-8") as f:
            for direction, raw in self.entries:
                f.write(json.dumps({"dir": direction,
                                    "b64": base64.b64encode(raw).decode("ascii")}) + "\n")


class BridgeClient:
    """Strict request-response client for the frame protocol.

    The handshake must complete before any predict/encode/decode call; it
    returns the server's training-schedule length and alpha_bar table so the
    caller can adopt them.
    """

    def __init__(self, sock, expected_n_train: int | None = None,
                 recorder: FrameRecorder | None = None):
        self._sock = sock
        self._expected_n_train = expected_n_train
        self._recorder = recorder
        self.n_train: int | None = None
        self.alpha_bar: np.ndarray | None = None

    @classmethod
    def connect(cls, address: str | None = None, **kwargs) -> "BridgeClient":
        """Connect to ``host:port`` (default from $FBS_BRIDGE_ADDR)."""
        address = address or os.environ.get(ENV_BRIDGE_ADDR)
        if not address:
            raise TransportError(f"no bridge address given and {ENV_BRIDGE_ADDR} unset")
        host, _, port = address.rpartition(":")
        try:
            sock = socket.create_connection((host or "127.0.0.1", int(port)))
        except OSError as exc:
            raise TransportError(f"cannot connect to {address}: {exc}") from exc
        return cls(sock, **kwargs)

    def _roundtrip(self, header: dict, payload: bytes = b"") -> tuple[dict, bytes]:
        raw_sent = write_frame(self._sock, header, payload)
        if self._recorder is not None:
            self._recorder.record("send", raw_sent)
        resp, resp_payload, raw_recv = read_frame(self._sock)
        if self._recorder is not None:
            self._recorder.record("recv", raw_recv)
        status = resp.get("status")
        if status == STATUS_REMOTE_ERROR:
            raise RemoteError(str(resp.get("message", "remote error")))
        if status != STATUS_OK:
            raise ProtocolError(str(resp.get("message", f"unexpected status {status!r}")))
        return resp, resp_payload

    def handshake(self) -> tuple[int, np.ndarray]:
        resp, _ = self._roundtrip({"op": OP_HANDSHAKE})
        try:
            n_train = int(resp["n_train"])
            alpha_bar = np.asarray(resp["alpha_bar"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"handshake response missing schedule: {exc}") from exc
        if self._expected_n_train is not None and n_train != self._expected_n_train:
            raise ProtocolError(
                f"server n_train={n_train} differs from expected {self._expected_n_train}")
        if alpha_bar.ndim != 1 or len(alpha_bar) not in (n_train, n_train + 1):
            raise ProtocolError(f"alpha_bar table has bad length {alpha_bar.shape}")
        if not np.all(np.diff(alpha_bar) < 0):
            raise ProtocolError("alpha_bar table is not strictly decreasing")
        self.n_train = n_train
        self.alpha_bar = alpha_bar
        return n_train, alpha_bar

    def _tensor_op(self, op: str, arr: np.ndarray, timestep: int = 0,
                   cond: str = "") -> np.ndarray:
        if self.n_train is None:
            raise ProtocolError("handshake required before tensor ops")
        arr = validate_feature(arr)
        c, h, w = arr.shape
        header = {"op": op, "shape": [c, h, w], "dtype": "f64",
                  "timestep": int(timestep), "cond": cond}
        resp, payload = self._roundtrip(header, pack_payload(arr, "f64"))
        shape = resp.get("shape", [c, h, w])
        out = unpack_payload(payload, shape, resp.get("dtype", "f64"))
        if op == OP_PREDICT_EPS and out.shape != arr.shape:
            raise ProtocolError(f"response shape {out.shape} differs from request {arr.shape}")
        if not np.all(np.isfinite(out)):
            raise ProtocolError("response payload contains non-finite values")
        return out

    def predict_eps(self, z_t, t: int, cond: str) -> np.ndarray:
        return self._tensor_op(OP_PREDICT_EPS, np.asarray(z_t, dtype=np.float64), t, cond)

    def encode(self, pixels) -> np.ndarray:
        return self._tensor_op(OP_ENCODE, np.asarray(pixels, dtype=np.float64))

    def decode(self, latent) -> np.ndarray:
        return self._tensor_op(OP_DECODE, np.asarray(latent, dtype=np.float64))

    def shutdown(self) -> None:
        try:
            self._roundtrip({"op": OP_SHUTDOWN})
        finally:
            self.close()

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass
