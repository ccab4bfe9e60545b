"""Newline-delimited JSON wire protocol for remote segmentation backends.

Requests (one JSON object per line):

    {"op":"set_case","id":ID,"h":H,"w":W,"image":B64}   image: row-major u8
    {"op":"predict","prompts":[...]}                     full prompt history

Replies:

    {"ok":true}                          set_case accepted
    {"ok":true,"prob":B64}               row-major f32 little-endian, h*w values
    {"ok":false,"err":MESSAGE}           any failure; the connection stays open

Transport failures (closed pipe/socket, EOF mid-reply) raise TransportError;
well-framed but invalid replies raise ProtocolError.
"""
from __future__ import annotations

import base64
import json
import socket
import subprocess
from typing import BinaryIO, Callable, Optional, Sequence

import numpy as np

from .grid import (
    BoxPrompt,
    Case,
    PointLabel,
    PointPrompt,
    ProbMap,
    Prompt,
    PromptSet,
)
from .segmenter import BackendError, SegmenterBackend


class TransportError(BackendError):
    """The peer went away or the stream broke."""


class ProtocolError(BackendError):
    """The peer answered, but not with a valid protocol message."""


class ShapeMismatchError(ProtocolError):
    """Payload size does not match the active case's grid."""


def encode_image(image_data: np.ndarray) -> str:
    u8 = np.rint(np.clip(image_data, 0.0, 1.0) * 255.0).astype(np.uint8)
    return base64.b64encode(u8.tobytes()).decode("ascii")


def decode_image(payload: str, h: int, w: int) -> np.ndarray:
    raw = base64.b64decode(payload, validate=True)
    if len(raw) != h * w:
        raise ProtocolError(f"image payload is {len(raw)} bytes, expected {h * w}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


def encode_prob(prob_data: np.ndarray) -> str:
    f32 = np.ascontiguousarray(prob_data, dtype="<f4")
    return base64.b64encode(f32.tobytes()).decode("ascii")


def decode_prob(payload: str, h: int, w: int) -> np.ndarray:
    raw = base64.b64decode(payload, validate=True)
    if len(raw) != h * w * 4:
        raise ShapeMismatchError(
            f"probability payload is {len(raw)} bytes, expected {h * w * 4}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(h, w)


def prompt_to_wire(p: Prompt) -> dict:
    if isinstance(p, PointPrompt):
        return {"kind": "point", "r": p.row, "c": p.col, "label": p.label.value}
    return {"kind": "box", "r0": p.r0, "c0": p.c0, "r1": p.r1, "c1": p.c1}


def prompt_from_wire(obj: dict) -> Prompt:
    try:
        kind = obj["kind"]
        if kind == "point":
            label = {"pos": PointLabel.POSITIVE, "neg": PointLabel.NEGATIVE}[obj["label"]]
            return PointPrompt(int(obj["r"]), int(obj["c"]), label)
        if kind == "box":
            return BoxPrompt(int(obj["r0"]), int(obj["c0"]),
                             int(obj["r1"]), int(obj["c1"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad prompt object {obj!r}: {exc}") from exc
    raise ProtocolError(f"unknown prompt kind {kind!r}")


def _dump_line(obj: dict) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"


# --------------------------------------------------------------------------
# Server side
# --------------------------------------------------------------------------

CaseResolver = Callable[[str, int, int, np.ndarray], Case]


class ProtocolSession:
    """Drives one SegmenterBackend from parsed wire messages."""

    def __init__(self, backend: SegmenterBackend, resolve_case: CaseResolver):
        self.backend = backend
        self.resolve_case = resolve_case
        self._shape: Optional[tuple[int, int]] = None

    def handle(self, line: bytes) -> dict:
        try:
            msg = json.loads(line.decode("utf-8"))
            if not isinstance(msg, dict):
                raise ValueError("message must be a JSON object")
            op = msg.get("op")
            if op == "set_case":
                h, w = int(msg["h"]), int(msg["w"])
                image = decode_image(msg["image"], h, w)
                case = self.resolve_case(str(msg["id"]), h, w, image)
                self.backend.set_case(case)
                self._shape = (h, w)
                return {"ok": True}
            if op == "predict":
                if self._shape is None:
                    raise ValueError("predict before set_case")
                h, w = self._shape
                prompts = PromptSet(
                    h, w, tuple(prompt_from_wire(p) for p in msg["prompts"])
                )
                if not prompts:
                    raise ValueError("predict requires at least one prompt")
                prob = self.backend.predict(prompts)
                return {"ok": True, "prob": encode_prob(prob.data)}
            raise ValueError(f"unknown op {op!r}")
        except Exception as exc:  # noqa: BLE001 - every failure becomes ok:false
            return {"ok": False, "err": str(exc)}


def serve_stream(rfile: BinaryIO, wfile: BinaryIO, backend: SegmenterBackend,
                 resolve_case: CaseResolver) -> None:
    """Serve one peer until EOF; errors are answered, never raised."""
    session = ProtocolSession(backend, resolve_case)
    while True:
        line = rfile.readline()
        if not line:
            return
        if not line.strip():
            continue
        wfile.write(_dump_line(session.handle(line)))
        wfile.flush()


def serve_tcp(host: str, port: int, make_backend: Callable[[], SegmenterBackend],
              resolve_case: CaseResolver,
              ready: Optional[Callable[[int], None]] = None,
              max_connections: Optional[int] = None) -> None:
    """Accept loop, one connection at a time; each gets a fresh backend."""
    served = 0
    with socket.create_server((host, port)) as server:
        if ready is not None:
            ready(server.getsockname()[1])
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn:
                rfile = conn.makefile("rb")
                wfile = conn.makefile("wb")
                try:
                    serve_stream(rfile, wfile, make_backend(), resolve_case)
                except (BrokenPipeError, ConnectionResetError, OSError):
                    pass  # client went away; return to accept
            served += 1


def dataset_case_resolver(cases: Sequence[Case]) -> CaseResolver:
    """Resolve set_case by id against locally held cases.

    The transmitted image must byte-match the stored one: the synthetic
    backend's determinism comes from the stored seed and ground truth, so a
    silently different image would mean client and server disagree about the
    dataset.
    """
    by_id = {c.id: c for c in cases}

    def resolve(case_id: str, h: int, w: int, image: np.ndarray) -> Case:
        case = by_id.get(case_id)
        if case is None:
            raise ValueError(f"unknown case id {case_id!r}")
        if case.shape != (h, w):
            raise ValueError(
                f"case {case_id} is {case.shape}, request says {(h, w)}"
            )
        stored = np.rint(np.clip(case.image.data, 0.0, 1.0) * 255.0).astype(np.uint8)
        if not np.array_equal(stored, image):
            raise ValueError(f"case {case_id}: transmitted image does not match")
        return case

    return resolve


# --------------------------------------------------------------------------
# Client side
# --------------------------------------------------------------------------

class RemoteSegmenter:
    """Client for any backend speaking the wire protocol.

    Requests are serialized per connection; one instance serves one episode
    at a time, like every other backend.
    """

    def __init__(self, rfile: BinaryIO, wfile: BinaryIO,
                 close: Callable[[], None]):
        self._rfile = rfile
        self._wfile = wfile
        self._close = close
        self._shape: Optional[tuple[int, int]] = None

    @classmethod
    def spawn(cls, command: Sequence[str]) -> "RemoteSegmenter":
        """Spawn a child process and speak the protocol over its stdio."""
        proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        assert proc.stdin is not None and proc.stdout is not None

        def close() -> None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            proc.terminate()
            proc.wait(timeout=10)

        return cls(proc.stdout, proc.stdin, close)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 30.0) -> "RemoteSegmenter":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        sock.settimeout(timeout)
        return cls(sock.makefile("rb"), sock.makefile("wb"), sock.close)

    def close(self) -> None:
        for fh in (self._wfile, self._rfile):
            try:
                fh.close()
            except OSError:
                pass
        self._close()

    def __enter__(self) -> "RemoteSegmenter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _request(self, obj: dict) -> dict:
        try:
            self._wfile.write(_dump_line(obj))
            self._wfile.flush()
            line = self._rfile.readline()
        except (OSError, ValueError) as exc:
            raise TransportError(f"connection lost: {exc}") from exc
        if not line:
            raise TransportError("connection closed by peer")
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"malformed reply: {exc}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ProtocolError(f"malformed reply object: {reply!r}")
        if not reply["ok"]:
            raise ProtocolError(str(reply.get("err", "unspecified peer error")))
        return reply

    def set_case(self, case: Case) -> None:
        h, w = case.shape
        self._request({
            "op": "set_case",
            "id": case.id,
            "h": h,
            "w": w,
            "image": encode_image(case.image.data),
        })
        self._shape = (h, w)

    def predict(self, prompts: PromptSet) -> ProbMap:
        if self._shape is None:
            raise BackendError("predict called before set_case")
        if not prompts:
            raise ValueError("predict requires at least one prompt")
        reply = self._request({
            "op": "predict",
            "prompts": [prompt_to_wire(p) for p in prompts],
        })
        if "prob" not in reply:
            raise ProtocolError("predict reply is missing the prob payload")
        h, w = self._shape
        return ProbMap(decode_prob(reply["prob"], h, w))
