import base64
import socket
import sys
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slideprompt.errors import (
    HandshakeError,
    ProtocolError,
    ValidationError,
)
from slideprompt.formats import save_mask
from slideprompt.predictor import (
    MockOracleBackend,
    PatchSource,
    PredictRequest,
    PredictResponse,
)
from slideprompt.wire import (
    FrameChannel,
    TcpServer,
    WireBackend,
    connect_exec,
    connect_tcp,
    decode_frame,
    encode_frame,
    frame_to_request,
    frame_to_response,
    handshake_frame,
    make_backend,
    request_to_frame,
    response_to_frame,
    serve_connection,
    validate_handshake,
)

from conftest import labels_from_art
from test_predictor import TestMockOracle, request_at


def random_request(rng, request_id=1):
    w, h = (int(v) for v in rng.integers(4, 64, size=2))
    n_points = int(rng.integers(1, 5))
    points = tuple(
        (int(rng.integers(0, w)), int(rng.integers(0, h))) for _ in range(n_points)
    )
    kind = rng.choice(["none", "file", "inline"])
    if kind == "file":
        patch = PatchSource("file", path="/tmp/slide.pfm")
    elif kind == "inline":
        payload = rng.random(w * h).astype("<f4").tobytes()
        patch = PatchSource("inline", format="raw-f32", data=payload)
    else:
        patch = PatchSource()
    return PredictRequest(
        request_id=request_id,
        width=w,
        height=h,
        window_x0=int(rng.integers(0, 1000)),
        window_y0=int(rng.integers(0, 1000)),
        points=points,
        patch=patch,
    )


class TestFrameCodec:
    def test_request_round_trip(self, rng):
        for i in range(50):
            req = random_request(rng, request_id=i + 1)
            again = frame_to_request(decode_frame(encode_frame(request_to_frame(req))))
            assert again == req

    def test_response_round_trip(self, rng):
        for i in range(25):
            h, w = (int(v) for v in rng.integers(1, 48, size=2))
            resp = PredictResponse(i, rng.random((h, w)) < 0.5, float(rng.random()))
            again = frame_to_response(
                decode_frame(encode_frame(response_to_frame(resp)))
            )
            assert again.request_id == resp.request_id
            assert (again.mask == resp.mask).all()
            assert again.score == resp.score

    def test_handshake_round_trip(self):
        assert validate_handshake(handshake_frame(True)) is True
        assert validate_handshake(handshake_frame(False)) is False

    def test_version_mismatch_rejected(self):
        frame = handshake_frame()
        frame["version"] = 2
        with pytest.raises(HandshakeError):
            validate_handshake(frame)

    def test_wrong_protocol_rejected(self):
        frame = handshake_frame()
        frame["protocol"] = "something-else"
        with pytest.raises(HandshakeError):
            validate_handshake(frame)

    def test_garbage_line_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            decode_frame(b"{not json}\n")
        with pytest.raises(ProtocolError):
            decode_frame(b"[1,2,3]\n")

    def test_mask_payload_corruption_detected(self, rng):
        resp = PredictResponse(1, rng.random((16, 16)) < 0.5, 1.0)
        frame = response_to_frame(resp)
        payload = bytearray(base64.b64decode(frame["mask"]["data"]))
        payload[0] ^= 0xFF
        frame["mask"]["data"] = base64.b64encode(bytes(payload)).decode()
        with pytest.raises(ProtocolError, match="checksum"):
            frame_to_response(frame)

    def test_truncated_mask_detected(self, rng):
        resp = PredictResponse(1, rng.random((16, 16)) < 0.5, 1.0)
        frame = response_to_frame(resp)
        frame["width"] = 17
        with pytest.raises(ProtocolError):
            frame_to_response(frame)

    def test_bad_points_rejected(self):
        frame = request_to_frame(request_at(1, 1))
        frame["points"] = [[1, "a"]]
        with pytest.raises(ProtocolError):
            frame_to_request(frame)

    def test_empty_points_rejected_before_transmission(self):
        with pytest.raises(ValidationError):
            PredictRequest(1, 8, 8, 0, 0, points=())

    @given(
        st.integers(0, 2**31 - 1),
        st.integers(1, 96),
        st.integers(1, 96),
        st.integers(0, 10**6),
        st.integers(0, 10**6),
        st.data(),
    )
    def test_request_round_trip_property(self, rid, w, h, x0, y0, data):
        points = data.draw(
            st.lists(
                st.tuples(st.integers(0, w - 1), st.integers(0, h - 1)),
                min_size=1,
                max_size=6,
            )
        )
        req = PredictRequest(rid, w, h, x0, y0, points=tuple(points))
        again = frame_to_request(decode_frame(encode_frame(request_to_frame(req))))
        assert again == req


def socketpair_channel():
    a, b = socket.socketpair()
    chan = FrameChannel(a.fileno(), a.makefile("wb"), on_close=a.close)
    return a, b, chan


class TestServeLoop:
    def serve_in_thread(self, backend, sock):
        recv = sock.makefile("rb")
        send = sock.makefile("wb")

        def run():
            try:
                serve_connection(backend, recv, send)
            finally:
                sock.close()

        t = threading.Thread(target=run, daemon=True)
        t.start()
        return t

    def test_handshake_then_predict(self):
        gt = labels_from_art(TestMockOracle.GT)
        a, b, chan = socketpair_channel()
        t = self.serve_in_thread(MockOracleBackend(gt), b)
        client = WireBackend(chan, timeout=10)
        resp = client.predict(request_at(3, 1, side=8))
        assert resp.score == 1.0
        client.close()
        t.join(timeout=5)

    def test_malformed_frame_gets_error_and_close(self):
        gt = labels_from_art(TestMockOracle.GT)
        a, b, chan = socketpair_channel()
        t = self.serve_in_thread(MockOracleBackend(gt), b)
        frame = chan.read_frame(5)
        assert frame["type"] == "handshake"
        a.sendall(b"this is not json\n")
        err = chan.read_frame(5)
        assert err["type"] == "error" and err["code"] == "protocol"
        assert chan.read_frame(5) is None  # connection closed
        t.join(timeout=5)

    def test_validation_error_keeps_connection_alive(self):
        gt = labels_from_art(TestMockOracle.GT)
        a, b, chan = socketpair_channel()
        t = self.serve_in_thread(MockOracleBackend(gt), b)
        client = WireBackend(chan, timeout=10)
        bad = request_to_frame(request_at(1, 1))
        bad["points"] = []
        chan.write_frame(bad)
        with pytest.raises(ValidationError):
            client._read_result()
        resp = client.predict(request_at(3, 1))
        assert resp.score == 1.0
        client.close()
        t.join(timeout=5)

    def test_out_of_order_responses_are_reassembled(self):
        a, b = socket.socketpair()

        def reversed_server():
            recv = b.makefile("rb")
            send = b.makefile("wb")
            send.write(encode_frame(handshake_frame()))
            send.flush()
            frames = [decode_frame(recv.readline()) for _ in range(2)]
            for frame in reversed(frames):
                req = frame_to_request(frame)
                mask = np.full((req.height, req.width), req.request_id % 2, dtype=bool)
                send.write(encode_frame(response_to_frame(PredictResponse(req.request_id, mask, 1.0))))
                send.flush()

        t = threading.Thread(target=reversed_server, daemon=True)
        t.start()
        chan = FrameChannel(a.fileno(), a.makefile("wb"), on_close=a.close)
        client = WireBackend(chan, timeout=10)
        reqs = [request_at(0, 0, request_id=1), request_at(0, 0, request_id=2)]
        results = client.predict_many(reqs, max_in_flight=2)
        assert set(results) == {1, 2}
        assert results[1].mask.all()
        assert not results[2].mask.any()
        t.join(timeout=5)


class TestTransports:
    def test_exec_transport_round_trip(self, tmp_path):
        gt = labels_from_art(TestMockOracle.GT)
        gt_path = tmp_path / "gt.pgm"
        save_mask(gt, gt_path)
        cmd = (
            f"{sys.executable} -m slideprompt.cli serve "
            f"--backend mock --gt {gt_path} --transport stdio"
        )
        backend = connect_exec(cmd, timeout=30)
        try:
            resp = backend.predict(request_at(3, 1, side=8))
            assert resp.score == 1.0
            assert resp.mask[:2, 2:5].all()
        finally:
            backend.close()

    def test_tcp_transport_round_trip(self):
        gt = labels_from_art(TestMockOracle.GT)
        server = TcpServer(MockOracleBackend(gt))
        t = threading.Thread(target=server.serve_once, daemon=True)
        t.start()
        backend = connect_tcp(server.host, server.port, timeout=30)
        try:
            resp = backend.predict(request_at(3, 1, side=8))
            assert resp.score == 1.0
        finally:
            backend.close()
            t.join(timeout=5)
            server.close()

    def test_make_backend_specs(self):
        gt = labels_from_art(TestMockOracle.GT)
        assert make_backend("mock", gt=gt).predict(request_at(3, 1)).score == 1.0
        with pytest.raises(ValidationError):
            make_backend("mock")
        with pytest.raises(ValidationError):
            make_backend("warp-drive")
        with pytest.raises(ValidationError):
            make_backend("tcp:nope")
