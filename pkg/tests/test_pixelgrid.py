import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spritesurrogate.pixelgrid import (
    DimensionError,
    Frame,
    ImageFormatError,
    decode_ppm,
    downsample,
    encode_ppm,
    framemax,
    pack_rgb,
    read_image,
    unpack_rgb,
    write_image,
)

A = pack_rgb((0, 0, 0))
B = pack_rgb((200, 10, 30))

frames = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda hw: arrays(np.uint8, (hw[0], hw[1], 3)).map(Frame)
)


def test_pack_roundtrip():
    assert pack_rgb((1, 2, 3)) == 0x010203
    assert unpack_rgb(0x010203) == (1, 2, 3)
    packed = pack_rgb(np.array([[[255, 0, 0], [0, 0, 255]]], dtype=np.uint8))
    assert packed.tolist() == [[0xFF0000, 0x0000FF]]


def test_frame_is_immutable_and_copies_input():
    rgb = np.zeros((2, 3, 3), dtype=np.uint8)
    f = Frame(rgb)
    rgb[0, 0] = 255
    assert f.color_at(0, 0) == 0
    with pytest.raises(ValueError):
        f.rgb[0, 0, 0] = 1
    assert (f.width, f.height) == (3, 2)


@pytest.mark.parametrize("shape", [(0, 3, 3), (3, 0, 3), (3, 3), (3, 3, 4)])
def test_frame_rejects_bad_shapes(shape):
    with pytest.raises(DimensionError):
        Frame(np.zeros(shape, dtype=np.uint8))


def test_downsample_uniform_2x2():
    out = downsample(Frame.filled(2, 2, B))
    assert (out.width, out.height) == (1, 1) and out.color_at(0, 0) == B


def test_downsample_atari_size():
    out = downsample(Frame.filled(160, 210, A))
    assert (out.height, out.width) == (105, 80)


def test_downsample_keeps_top_left_of_each_block():
    colors = np.full((4, 4), A)
    colors[0, 0] = B
    out = downsample(Frame.from_colors(colors))
    expected = np.full((2, 2), A)
    expected[0, 0] = B
    assert np.array_equal(out.colors, expected)
    # a pixel off the stride-2 lattice disappears
    colors = np.full((4, 4), A)
    colors[1, 1] = B
    assert np.all(downsample(Frame.from_colors(colors)).colors == A)


@pytest.mark.parametrize("w,h", [(3, 2), (2, 3), (1, 1)])
def test_downsample_rejects_odd(w, h):
    with pytest.raises(DimensionError):
        downsample(Frame.filled(w, h, A))


@given(frames)
def test_downsample_property(f):
    if f.width % 2 or f.height % 2:
        with pytest.raises(DimensionError):
            downsample(f)
        return
    out = downsample(f)
    assert (out.width, out.height) == (f.width // 2, f.height // 2)
    for y in range(out.height):
        for x in range(out.width):
            assert out.color_at(x, y) == f.color_at(2 * x, 2 * y)


def test_framemax_examples():
    black = Frame.filled(4, 4, 0)
    one = np.zeros((4, 4, 3), dtype=np.uint8)
    one[2, 1] = 255
    assert framemax(black, Frame(one)) == Frame(one)
    a = np.zeros((12, 12, 3), dtype=np.uint8)
    b = np.zeros((12, 12, 3), dtype=np.uint8)
    a[10, 10] = (200, 0, 0)
    b[10, 10] = (0, 200, 0)
    assert framemax(Frame(a), Frame(b)).rgb[10, 10].tolist() == [200, 200, 0]


def test_framemax_dimension_mismatch():
    with pytest.raises(DimensionError):
        framemax(Frame.filled(2, 2, 0), Frame.filled(2, 4, 0))


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_framemax_laws(h, w, data):
    a, b, c = (Frame(data.draw(arrays(np.uint8, (h, w, 3)))) for _ in range(3))
    assert framemax(a, a) == a
    assert framemax(a, b) == framemax(b, a)
    assert framemax(framemax(a, b), c) == framemax(a, framemax(b, c))
    m = framemax(a, b)
    assert np.all(m.rgb >= a.rgb) and np.all(m.rgb >= b.rgb)


@settings(max_examples=60)
@given(frames)
def test_ppm_roundtrip(f):
    assert decode_ppm(encode_ppm(f)) == f


def test_file_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    f = Frame(rng.integers(0, 256, (105, 80, 3), dtype=np.uint8))
    write_image(f, tmp_path / "f.ppm")
    assert read_image(tmp_path / "f.ppm") == f
    write_image(Frame.filled(1, 1, B), tmp_path / "one.ppm")
    g = read_image(tmp_path / "one.ppm")
    assert (g.width, g.height, g.color_at(0, 0)) == (1, 1, B)


def test_header_comments_and_whitespace():
    data = b"P6 # comment\n2\t1 # another\n255\n" + bytes([1, 2, 3, 4, 5, 6])
    f = decode_ppm(data)
    assert f.color_at(0, 0) == 0x010203 and f.color_at(1, 0) == 0x040506


def test_truncated_pixels():
    data = encode_ppm(Frame.filled(2, 2, B))[:-1]
    with pytest.raises(ImageFormatError) as err:
        decode_ppm(data)
    assert err.value.offset == len(data)


@pytest.mark.parametrize(
    "data,offset",
    [
        (b"P3\n1 1\n255\n000", 0),
        (b"", 0),
        (b"P6\n1 x\n255\n", 5),
        (b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00", 7),
        (b"P6\n0 1\n255\n", 3),
        (b"P6\n1 1\n255\n\x00\x00\x00\x00", 14),
        (b"P6\n1", 4),
    ],
)
def test_malformed_headers_report_offset(data, offset):
    with pytest.raises(ImageFormatError) as err:
        decode_ppm(data)
    assert err.value.offset == offset
    assert "byte" in str(err.value)
