"""Client for the external model bridge.

Wire protocol (TCP, binary, length-prefixed frames):

    frame   = [u32 big-endian length][u8 message type][payload]
              (length counts the type byte plus the payload)
    grid    = [u16 H][u16 W][u16 C][H*W*C little-endian float32, C order]

Message types::

    1 hello         u16 version, u16 H, u16 W, u16 C, u32 steps, u8 flags
                    (flag bits: 0 condition, 1 encode/decode, 2 inpaint)
    2 denoise-req   u32 t, f32 guidance_scale, u8 remote_cfg,
                    u16 cond_len, cond utf-8, grid
    3 denoise-resp  u8 n_grids, grid[, grid]
                    (two grids = unconditional then conditional)
    4/5 encode req/resp   grid
    6/7 decode req/resp   grid
    8 echo          arbitrary bytes, echoed verbatim
    9 error         utf-8 message

The server sends exactly one hello after accepting a connection, then
answers one request per response. The bridge package implements the
server side of the identical framing.
"""

import socket
import struct

import numpy as np

from .denoiser import cfg_combine
from .errors import ProtocolError, RemoteError, TransportError
from .schedule import make_schedule

PROTOCOL_VERSION = 1
MAX_FRAME = 256 * 1024 * 1024

MSG_HELLO = 1
MSG_DENOISE_REQ = 2
MSG_DENOISE_RESP = 3
MSG_ENCODE_REQ = 4
MSG_ENCODE_RESP = 5
MSG_DECODE_REQ = 6
MSG_DECODE_RESP = 7
MSG_ECHO = 8
MSG_ERROR = 9

CAP_CONDITION = 1
CAP_ENCODE_DECODE = 2
CAP_INPAINT = 4


def pack_grid(grid):
    arr = np.ascontiguousarray(grid, dtype="<f4")
    if arr.ndim != 3:
        raise ProtocolError(f"grid must be (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    if max(h, w, c) > 0xFFFF:
        raise ProtocolError(f"grid dimension exceeds u16: {arr.shape}")
    return struct.pack(">HHH", h, w, c) + arr.tobytes()


def unpack_grid(payload, offset=0):
    if len(payload) - offset < 6:
        raise ProtocolError("grid header truncated")
    h, w, c = struct.unpack_from(">HHH", payload, offset)
    n = h * w * c
    start = offset + 6
    end = start + 4 * n
    if len(payload) < end:
        raise ProtocolError("grid payload truncated")
    data = np.frombuffer(payload[start:end], dtype="<f4").reshape(h, w, c)
    return data.astype(np.float64), end


def pack_frame(msg_type, payload):
    return struct.pack(">IB", len(payload) + 1, msg_type) + payload


def read_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("connection closed by peer")
        buf.extend(chunk)
    return bytes(buf)


def read_frame(sock):
    header = read_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length < 1 or length > MAX_FRAME:
        raise ProtocolError(f"bad frame length {length}")
    body = read_exact(sock, length)
    return body[0], body[1:]


class BridgeDenoiser:
    """Denoiser backend served by a remote bridge process.

    One request in flight per connection. Grid shape and step count come
    from the hello the server sends on connect; requests are validated
    against them before anything hits the wire.
    """

    def __init__(self, address, timeout=60.0):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ProtocolError(f"bridge address must be HOST:PORT, got {address!r}")
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to bridge at {address}: {exc}")
        msg_type, payload = self._read()
        if msg_type != MSG_HELLO or len(payload) != 13:
            self.close()
            raise ProtocolError("expected hello frame on connect")
        version, h, w, c, steps, flags = struct.unpack(">HHHHIB", payload)
        if version != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(f"unsupported protocol version {version}")
        self.grid_shape = (h, w, c)
        self.steps = steps
        self.supports_condition = bool(flags & CAP_CONDITION)
        self.supports_encode_decode = bool(flags & CAP_ENCODE_DECODE)
        self.supports_inpaint = bool(flags & CAP_INPAINT)
        # The remote model's training schedule is not transmitted; the
        # engine's own ramp at the declared step count drives the sampler.
        self.schedule = make_schedule(steps)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- framing ----------------------------------------------------------

    def _read(self):
        try:
            return read_frame(self._sock)
        except OSError as exc:
            raise TransportError(f"bridge read failed: {exc}")

    def _send(self, msg_type, payload):
        try:
            self._sock.sendall(pack_frame(msg_type, payload))
        except OSError as exc:
            raise TransportError(f"bridge write failed: {exc}")

    def _request(self, msg_type, payload, expect):
        self._send(msg_type, payload)
        resp_type, resp = self._read()
        if resp_type == MSG_ERROR:
            raise RemoteError(resp.decode("utf-8", errors="replace"))
        if resp_type != expect:
            raise ProtocolError(f"expected message type {expect}, got {resp_type}")
        return resp

    # -- requests ----------------------------------------------------------

    def predict_eps(self, x_t, t, condition=None, guidance_scale=1.0):
        if tuple(x_t.shape) != self.grid_shape:
            raise ProtocolError(
                f"state shape {tuple(x_t.shape)} does not match declared "
                f"{self.grid_shape}"
            )
        if not (1 <= t <= self.steps):
            raise ProtocolError(f"step {t} outside declared [1, {self.steps}]")
        cond_bytes = (condition or "").encode("utf-8")
        if cond_bytes and not self.supports_condition:
            raise ProtocolError("bridge does not support conditions")
        header = struct.pack(">IfBH", t, float(guidance_scale), 0, len(cond_bytes))
        payload = self._request(
            MSG_DENOISE_REQ, header + cond_bytes + pack_grid(x_t), MSG_DENOISE_RESP
        )
        if not payload:
            raise ProtocolError("empty denoise response")
        n_grids = payload[0]
        if n_grids not in (1, 2):
            raise ProtocolError(f"denoise response carries {n_grids} grids")
        eps, offset = unpack_grid(payload, 1)
        if n_grids == 2:
            eps_cond, offset = unpack_grid(payload, offset)
            eps = cfg_combine(eps, eps_cond, guidance_scale)
        if offset != len(payload):
            raise ProtocolError("trailing bytes in denoise response")
        if eps.shape != tuple(self.grid_shape):
            raise ProtocolError(f"response grid has shape {eps.shape}")
        return eps

    def encode(self, pixels):
        payload = self._request(MSG_ENCODE_REQ, pack_grid(pixels), MSG_ENCODE_RESP)
        grid, _ = unpack_grid(payload)
        return grid

    def decode(self, latents):
        payload = self._request(MSG_DECODE_REQ, pack_grid(latents), MSG_DECODE_RESP)
        grid, _ = unpack_grid(payload)
        return grid

    def echo(self, data):
        return self._request(MSG_ECHO, bytes(data), MSG_ECHO)
