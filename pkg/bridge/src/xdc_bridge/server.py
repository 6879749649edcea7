"""TCP server answering denoiser requests for one model.

Each accepted connection gets exactly one hello, then serves one request
at a time. Malformed frames get an error response and the connection is
closed; model failures get an error response and the connection stays
open. The handler never lets an exception escape, so no input can crash
the server.
"""

import socketserver
import threading

from . import protocol
from .models import ModelError


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        model = self.server.model
        try:
            self.request.sendall(
                protocol.pack_hello(model.grid_shape, model.steps, model.capabilities)
            )
            reader = protocol.FrameReader()
            while True:
                frame = reader.next_frame()
                if frame is None:
                    data = self.request.recv(65536)
                    if not data:
                        return
                    reader.feed(data)
                    continue
                if not self._answer(model, *frame):
                    return
        except protocol.FrameError as exc:
            self._send_error(f"protocol error: {exc}")
        except OSError:
            pass
        except Exception as exc:  # never crash the server on bad input
            self._send_error(f"internal error: {exc}")

    def _send_error(self, message):
        try:
            self.request.sendall(protocol.pack_error(message))
        except OSError:
            pass

    def _answer(self, model, msg_type, payload):
        """Handle one request; False closes the connection."""
        if msg_type == protocol.MSG_ECHO:
            self.request.sendall(protocol.pack_frame(protocol.MSG_ECHO, payload))
            return True
        if msg_type == protocol.MSG_DENOISE_REQ:
            t, scale, remote_cfg, condition, grid = protocol.parse_denoise_request(
                payload
            )
            if tuple(grid.shape) != tuple(model.grid_shape):
                self._send_error(
                    f"shape {tuple(grid.shape)} does not match declared "
                    f"{tuple(model.grid_shape)}"
                )
                return True
            if not (1 <= t <= model.steps):
                self._send_error(f"step {t} outside [1, {model.steps}]")
                return True
            try:
                grids = model.denoise(t, scale, remote_cfg, condition, grid)
            except ModelError as exc:
                self._send_error(str(exc))
                return True
            self.request.sendall(protocol.pack_denoise_response(grids))
            return True
        if msg_type in (protocol.MSG_ENCODE_REQ, protocol.MSG_DECODE_REQ):
            op = "encode" if msg_type == protocol.MSG_ENCODE_REQ else "decode"
            fn = getattr(model, op, None)
            if fn is None:
                self._send_error(f"model does not support {op}")
                return True
            grid, end = protocol.unpack_grid(payload)
            if end != len(payload):
                raise protocol.FrameError(f"trailing bytes in {op} request")
            try:
                result = fn(grid)
            except ModelError as exc:
                self._send_error(str(exc))
                return True
            resp_type = (
                protocol.MSG_ENCODE_RESP
                if msg_type == protocol.MSG_ENCODE_REQ
                else protocol.MSG_DECODE_RESP
            )
            self.request.sendall(
                protocol.pack_frame(resp_type, protocol.pack_grid(result))
            )
            return True
        raise protocol.FrameError(f"unexpected message type {msg_type}")


class BridgeServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, model):
        super().__init__(address, _Handler)
        self.model = model

    @property
    def port(self):
        return self.server_address[1]

    def serve_background(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(model, host, port, background=False):
    server = BridgeServer((host, port), model)
    if background:
        server.serve_background()
        return server
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return server
