import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from inv2inv.errors import BadMagicError, BadVersionError, FormatError, ShapeError, TruncatedError
from inv2inv.tensorio import (decode_image, decode_tensor, encode_image, encode_tensor,
                              from_bytes8, load_array, read_image, read_tensor, to_bytes8,
                              write_image, write_tensor)


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=1, max_dims=4, max_side=5),
                  elements=st.floats(-1e6, 1e6, width=32)))
@settings(max_examples=50, deadline=None)
def test_round_trip_exact_at_32_bit(arr):
    out = decode_tensor(encode_tensor(arr))
    assert out.shape == arr.shape
    np.testing.assert_array_equal(out.astype(np.float32), arr)


def test_layout_by_hand():
    data = encode_tensor(np.array([[1.0, -2.0, 0.5]]))
    assert data[:4] == b"IVIT"
    assert data[4] == 1
    assert struct.unpack("<III", data[5:17]) == (2, 1, 3)
    assert struct.unpack("<3f", data[17:]) == (1.0, -2.0, 0.5)


def test_float64_rounds_to_float32(tmp_path):
    x = np.array([0.1, 1 / 3])
    write_tensor(tmp_path / "x.ivit", x)
    np.testing.assert_array_equal(read_tensor(tmp_path / "x.ivit"), x.astype(np.float32))


def test_distinct_parse_errors():
    good = encode_tensor(np.zeros((2, 3)))
    with pytest.raises(BadMagicError):
        decode_tensor(b"IVIX" + good[4:])
    with pytest.raises(BadVersionError):
        decode_tensor(good[:4] + b"\x02" + good[5:])
    with pytest.raises(TruncatedError) as exc:
        decode_tensor(good[:-5])
    assert (exc.value.expected, exc.value.actual) == (len(good), len(good) - 5)
    assert f"expected {len(good)} bytes, got {len(good) - 5}" in str(exc.value)
    with pytest.raises(FormatError):
        decode_tensor(good + b"\0")


def test_rank_zero_rejected():
    with pytest.raises(FormatError):
        decode_tensor(b"IVIT" + struct.pack("<BI", 1, 0) + struct.pack("<f", 1.0))
    with pytest.raises(ShapeError):
        encode_tensor(np.float32(1.0))


def test_read_error_names_file(tmp_path):
    p = tmp_path / "bad.ivit"
    p.write_bytes(b"IVIT\x01")
    with pytest.raises(FormatError, match="bad.ivit"):
        read_tensor(p)


# --- PGM / PPM ------------------------------------------------------------

def test_byte_map_by_hand():
    np.testing.assert_array_equal(to_bytes8([-1.0, 1.0, 0.0, 2.0, -5.0]), [0, 255, 128, 255, 0])
    # 0 maps to 127.5 exactly, the only representable tie, and rounds up
    assert to_bytes8([0.0 - 1e-12])[0] == 127
    assert from_bytes8([0, 255])[0] == -1.0 and from_bytes8([0, 255])[1] == 1.0


def test_image_round_trip_quantization(tmp_path, stream):
    x = stream.uniform((3, 5, 7)) * 2 - 1
    write_image(tmp_path / "x.ppm", x)
    y = read_image(tmp_path / "x.ppm")
    assert y.shape == x.shape
    assert np.max(np.abs(x - y)) <= 1 / 255


def test_headers():
    assert encode_image(np.zeros((3, 5, 7))).startswith(b"P6\n7 5\n255\n")
    assert encode_image(np.zeros((1, 2, 4))).startswith(b"P5\n4 2\n255\n")
    with pytest.raises(ShapeError):
        encode_image(np.zeros((2, 4, 4)))


def test_header_comments_and_errors():
    pix = bytes([0, 255, 128, 128])
    img = decode_image(b"P5 # comment\n2 2\n255\n" + pix)
    np.testing.assert_array_equal(to_bytes8(img)[0], [[0, 255], [128, 128]])
    with pytest.raises(FormatError):
        decode_image(b"P3\n2 2\n255\n" + pix)
    with pytest.raises(FormatError):
        decode_image(b"P5\n2 2\n65535\n" + pix)
    with pytest.raises(FormatError):
        decode_image(b"P5\n2 x\n255\n" + pix)
    with pytest.raises(TruncatedError):
        decode_image(b"P5\n2 2\n255\n" + pix[:3])


def test_load_array_dispatch(tmp_path):
    write_image(tmp_path / "a.pgm", np.zeros((1, 2, 2)))
    write_tensor(tmp_path / "a.ivit", np.zeros((1, 2, 2)))
    assert load_array(tmp_path / "a.pgm").shape == (1, 2, 2)
    assert load_array(tmp_path / "a.ivit").shape == (1, 2, 2)
