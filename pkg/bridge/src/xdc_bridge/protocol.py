"""Server-side framing for the bridge wire protocol.

Frames are length-prefixed and self-delimiting::

    frame   = [u32 big-endian length][u8 message type][payload]
              (length counts the type byte plus the payload)
    grid    = [u16 H][u16 W][u16 C][H*W*C little-endian float32, C order]

Message types: 1 hello, 2/3 denoise req/resp, 4/5 encode req/resp,
6/7 decode req/resp, 8 echo, 9 error (utf-8 message). The hello payload
is ``u16 version, u16 H, u16 W, u16 C, u32 steps, u8 capability flags``
(bit 0 condition, bit 1 encode/decode, bit 2 inpaint variant). A denoise
request carries ``u32 t, f32 guidance_scale, u8 remote_cfg, u16 cond_len,
cond utf-8, grid``; the response carries ``u8 n_grids`` followed by one
grid (or two: unconditional then conditional, when the client asked to
combine guidance itself).

The engine-side client implements the identical framing independently.
"""

import struct

import numpy as np

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


class FrameError(Exception):
    """Malformed frame or payload."""


def pack_frame(msg_type, payload=b""):
    return struct.pack(">IB", len(payload) + 1, msg_type) + payload


def pack_error(message):
    return pack_frame(MSG_ERROR, message.encode("utf-8"))


def pack_hello(shape, steps, flags):
    h, w, c = shape
    payload = struct.pack(">HHHHIB", PROTOCOL_VERSION, h, w, c, steps, flags)
    return pack_frame(MSG_HELLO, payload)


def pack_grid(grid):
    arr = np.ascontiguousarray(grid, dtype="<f4")
    if arr.ndim != 3:
        raise FrameError(f"grid must be (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    if max(h, w, c) > 0xFFFF:
        raise FrameError(f"grid dimension exceeds u16: {arr.shape}")
    return struct.pack(">HHH", h, w, c) + arr.tobytes()


def unpack_grid(payload, offset=0):
    if len(payload) - offset < 6:
        raise FrameError("grid header truncated")
    h, w, c = struct.unpack_from(">HHH", payload, offset)
    n = h * w * c
    if n == 0:
        raise FrameError("grid has a zero dimension")
    start = offset + 6
    end = start + 4 * n
    if len(payload) < end:
        raise FrameError("grid payload truncated")
    grid = np.frombuffer(payload[start:end], dtype="<f4").reshape(h, w, c)
    return grid.astype(np.float64), end


def parse_denoise_request(payload):
    """Returns (t, guidance_scale, remote_cfg, condition, grid)."""
    if len(payload) < 11:
        raise FrameError("denoise request truncated")
    t, scale, remote_cfg, cond_len = struct.unpack_from(">IfBH", payload)
    if remote_cfg not in (0, 1):
        raise FrameError(f"bad remote_cfg flag {remote_cfg}")
    cond_end = 11 + cond_len
    if len(payload) < cond_end:
        raise FrameError("condition text truncated")
    try:
        condition = payload[11:cond_end].decode("utf-8")
    except UnicodeDecodeError:
        raise FrameError("condition is not valid utf-8")
    grid, end = unpack_grid(payload, cond_end)
    if end != len(payload):
        raise FrameError("trailing bytes in denoise request")
    return t, scale, remote_cfg, condition, grid


def pack_denoise_response(grids):
    if len(grids) not in (1, 2):
        raise FrameError("denoise response must carry 1 or 2 grids")
    body = bytes([len(grids)]) + b"".join(pack_grid(g) for g in grids)
    return pack_frame(MSG_DENOISE_RESP, body)


class FrameReader:
    """Incremental frame reader over a byte buffer.

    ``feed`` appends bytes, ``next_frame`` pops one complete
    (type, payload) or returns None when more bytes are needed. A prefix
    of a valid stream therefore never yields a wrong message.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data):
        self._buf.extend(data)

    def next_frame(self):
        if len(self._buf) < 4:
            return None
        (length,) = struct.unpack_from(">I", self._buf)
        if length < 1 or length > MAX_FRAME:
            raise FrameError(f"bad frame length {length}")
        if len(self._buf) < 4 + length:
            return None
        msg_type = self._buf[4]
        payload = bytes(self._buf[5 : 4 + length])
        del self._buf[: 4 + length]
        return msg_type, payload
