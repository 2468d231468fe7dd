import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from segcalib.fileio import (
    FormatError,
    atomic_write,
    decode_pgm,
    decode_tensor,
    dumps_json,
    encode_pgm,
    encode_tensor,
    read_tensor,
    round_sig,
    to_csv,
    write_tensor,
)


def test_tensor_layout():
    buf = encode_tensor(np.array([[1.0, -2.0]]))
    assert buf[:4] == b"CALT"
    assert buf[4] == 1 and buf[5] == 2
    assert buf[6:14] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert buf[14:] == np.array([1.0, -2.0], dtype="<f4").tobytes()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.lists(st.integers(0, 4), min_size=0, max_size=4).map(tuple),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_tensor_roundtrip(a):
    b = decode_tensor(encode_tensor(a))
    assert b.shape == a.shape and np.array_equal(a, b)


@pytest.mark.parametrize("cut", [0, 3, 5, 9, 15])
def test_truncated_tensor(cut):
    buf = encode_tensor(np.ones((2, 2)))
    with pytest.raises(FormatError):
        decode_tensor(buf[:cut])


def test_bad_version_and_magic():
    buf = bytearray(encode_tensor(np.ones(2)))
    buf[4] = 2
    with pytest.raises(FormatError, match="version"):
        decode_tensor(bytes(buf))
    with pytest.raises(FormatError, match="magic"):
        decode_tensor(b"NOPE" + bytes(buf[4:]))


def test_pgm_roundtrip_and_comments():
    y = np.array([[0, 1, 2], [3, 0, 1]])
    assert np.array_equal(decode_pgm(encode_pgm(y)), y)
    buf = b"P5\n# made by hand\n3 2\n# max\n255\n" + bytes([0, 1, 2, 3, 0, 1])
    assert np.array_equal(decode_pgm(buf), y)


@pytest.mark.parametrize("buf", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00", b"P5\n1"])
def test_bad_pgm(buf):
    with pytest.raises(FormatError):
        decode_pgm(buf)


def test_round_sig():
    assert round_sig(0.123456789) == 0.123457
    assert round_sig({"a": [1.0 / 3, float("nan")], "b": np.int64(3)}) == {"a": [0.333333, None], "b": 3}
    assert round_sig(12345678.9) == 12345700.0


def test_json_and_csv():
    assert dumps_json({"x": 2.0000001}) == '{\n  "x": 2.0\n}\n'
    text = to_csv([{"a": 1, "b": 0.1234567}, {"a": 2, "b": float("nan")}])
    assert text == "a,b\n1,0.123457\n2,\n"


def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "x.bin"
    write_tensor(str(p), np.arange(3))
    assert np.array_equal(read_tensor(str(p)), [0, 1, 2])
    assert os.listdir(tmp_path) == ["x.bin"]


def test_atomic_write_failure_keeps_old_file(tmp_path):
    p = tmp_path / "x.txt"
    atomic_write(str(p), "old")

    class Boom:
        pass

    with pytest.raises(TypeError):
        atomic_write(str(p), Boom())
    assert p.read_text() == "old"
    assert os.listdir(tmp_path) == ["x.txt"]
