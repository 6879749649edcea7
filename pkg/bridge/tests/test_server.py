"""Server conformance: echo round-trips, error handling, fuzzing.

The raw-socket client here is written against the protocol notes, not
shared with the server code.
"""

import socket
import struct

import numpy as np
import pytest

from xdc_bridge import EchoModel, serve
from xdc_bridge import protocol


@pytest.fixture
def server():
    srv = serve(EchoModel(shape=(16, 16, 1), steps=50), "127.0.0.1", 0,
                background=True)
    yield srv
    srv.shutdown()
    srv.server_close()


class RawClient:
    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)

    def close(self):
        self.sock.close()

    def read_exact(self, n):
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def read_frame(self):
        header = self.read_exact(4)
        if header is None:
            return None
        (length,) = struct.unpack(">I", header)
        body = self.read_exact(length)
        if body is None:
            return None
        return body[0], body[1:]

    def send_frame(self, msg_type, payload):
        self.sock.sendall(struct.pack(">IB", len(payload) + 1, msg_type) + payload)


def connect(server):
    client = RawClient(server.port)
    msg_type, payload = client.read_frame()
    assert msg_type == 1
    return client, struct.unpack(">HHHHIB", payload)


def pack_grid(grid):
    arr = np.ascontiguousarray(grid, dtype="<f4")
    h, w, c = arr.shape
    return struct.pack(">HHH", h, w, c) + arr.tobytes()


def test_hello_on_connect(server):
    client, (version, h, w, c, steps, flags) = connect(server)
    assert (version, h, w, c, steps) == (1, 16, 16, 1, 50)
    assert flags & protocol.CAP_CONDITION
    assert flags & protocol.CAP_ENCODE_DECODE
    client.close()


def test_echo_million_elements_bit_exact(server):
    rng = np.random.default_rng(0)
    grid = rng.normal(size=(1000, 1000, 1)).astype("<f4")
    client, _ = connect(server)
    client.send_frame(4, pack_grid(grid))  # encode request (identity)
    msg_type, payload = client.read_frame()
    assert msg_type == 5
    h, w, c = struct.unpack_from(">HHH", payload)
    back = np.frombuffer(payload[6:], dtype="<f4").reshape(h, w, c)
    assert back.tobytes() == grid.tobytes()
    client.close()


def test_denoise_echoes_state(server):
    rng = np.random.default_rng(1)
    grid = rng.normal(size=(16, 16, 1)).astype("<f4")
    client, _ = connect(server)
    header = struct.pack(">IfBH", 10, 1.0, 0, 0)
    client.send_frame(2, header + pack_grid(grid))
    msg_type, payload = client.read_frame()
    assert msg_type == 3
    assert payload[0] == 1
    back = np.frombuffer(payload[7:], dtype="<f4").reshape(16, 16, 1)
    assert back.tobytes() == grid.tobytes()
    client.close()


def test_conditional_denoise_returns_two_grids(server):
    grid = np.zeros((16, 16, 1), dtype="<f4")
    cond = "prompt".encode()
    client, _ = connect(server)
    client.send_frame(2, struct.pack(">IfBH", 10, 7.5, 0, len(cond)) + cond + pack_grid(grid))
    msg_type, payload = client.read_frame()
    assert msg_type == 3 and payload[0] == 2
    client.close()


def test_denoise_conformance_sweep(server):
    # Finite grids of the declared shape at t in {1, T/2, T}.
    rng = np.random.default_rng(2)
    client, _ = connect(server)
    for t in (1, 25, 50):
        grid = rng.normal(size=(16, 16, 1)).astype("<f4")
        client.send_frame(2, struct.pack(">IfBH", t, 1.0, 0, 0) + pack_grid(grid))
        msg_type, payload = client.read_frame()
        assert msg_type == 3
        back = np.frombuffer(payload[7:], dtype="<f4")
        assert np.all(np.isfinite(back))
    client.close()


def test_shape_mismatch_errors_but_connection_survives(server):
    client, _ = connect(server)
    bad = np.zeros((8, 8, 1), dtype="<f4")
    client.send_frame(2, struct.pack(">IfBH", 10, 1.0, 0, 0) + pack_grid(bad))
    msg_type, payload = client.read_frame()
    assert msg_type == 9 and b"shape" in payload
    # Same connection still answers a valid request.
    good = np.zeros((16, 16, 1), dtype="<f4")
    client.send_frame(2, struct.pack(">IfBH", 10, 1.0, 0, 0) + pack_grid(good))
    msg_type, _ = client.read_frame()
    assert msg_type == 3
    client.close()


def test_step_out_of_range_errors(server):
    client, _ = connect(server)
    grid = np.zeros((16, 16, 1), dtype="<f4")
    client.send_frame(2, struct.pack(">IfBH", 51, 1.0, 0, 0) + pack_grid(grid))
    msg_type, payload = client.read_frame()
    assert msg_type == 9 and b"step" in payload
    client.close()


def test_malformed_frame_gets_error_then_close(server):
    client, _ = connect(server)
    client.send_frame(99, b"junk")  # unknown type
    msg_type, payload = client.read_frame()
    assert msg_type == 9
    assert client.read_frame() is None  # connection closed
    client.close()


def test_parser_fuzz_never_crashes():
    # 10^4 random malformed frames through the parser entry points.
    rng = np.random.default_rng(3)
    survived = 0
    for _ in range(10_000):
        blob = rng.bytes(int(rng.integers(0, 64)))
        reader = protocol.FrameReader()
        reader.feed(struct.pack(">I", int(rng.integers(1, 80))) + blob)
        try:
            frame = reader.next_frame()
            if frame is not None and frame[0] == protocol.MSG_DENOISE_REQ:
                protocol.parse_denoise_request(frame[1])
            elif frame is not None:
                protocol.unpack_grid(frame[1])
        except protocol.FrameError:
            pass
        survived += 1
    assert survived == 10_000


def test_socket_fuzz_server_stays_alive(server):
    rng = np.random.default_rng(4)
    for i in range(300):
        raw = RawClient(server.port)
        raw.read_frame()  # hello
        kind = rng.integers(0, 3)
        if kind == 0:
            raw.sock.sendall(rng.bytes(int(rng.integers(1, 40))))
        elif kind == 1:
            raw.send_frame(int(rng.integers(0, 256)), rng.bytes(int(rng.integers(0, 64))))
        else:
            raw.sock.sendall(struct.pack(">I", protocol.MAX_FRAME + 7))
        if i % 50 == 0:
            raw.sock.settimeout(0.2)  # sample responses without blocking long
            try:
                raw.read_frame()
            except OSError:
                pass
        raw.close()
    # Server still answers correctly after the abuse.
    client, (_, h, w, c, steps, _) = connect(server)
    assert (h, w, c, steps) == (16, 16, 1, 50)
    client.send_frame(8, b"ping")
    assert client.read_frame() == (8, b"ping")
    client.close()
