"""Raster invariants and codec round trips.

The PNG decoder is checked against a reference encoder written here
from the format spec, covering every filter type, so decoding is not
just tested against our own encoder.
"""

import struct
import zlib

import numpy as np
import pytest

from downbench.errors import DecodeError, DimensionError, UnsupportedFormatError
from downbench.imagecore import (
    LUMA_WEIGHTS,
    PNG_SIGNATURE,
    Raster,
    clipped,
    decode,
    encode,
    quantize_u8,
    read_image,
    write_image,
)

from conftest import rand_raster


# --- reference PNG encoder (the oracle) ---------------------------------

def _paeth(left: int, up: int, ul: int) -> int:
    p = left + up - ul
    pa, pb, pc = abs(p - left), abs(p - up), abs(p - ul)
    if pa <= pb and pa <= pc:
        return left
    return up if pb <= pc else ul


def _filter_row(cur: bytes, prev: bytes, ftype: int, bpp: int) -> bytes:
    out = bytearray()
    for i, b in enumerate(cur):
        left = cur[i - bpp] if i >= bpp else 0
        up = prev[i]
        ul = prev[i - bpp] if i >= bpp else 0
        if ftype == 0:
            out.append(b)
        elif ftype == 1:
            out.append((b - left) & 0xFF)
        elif ftype == 2:
            out.append((b - up) & 0xFF)
        elif ftype == 3:
            out.append((b - (left + up) // 2) & 0xFF)
        elif ftype == 4:
            out.append((b - _paeth(left, up, ul)) & 0xFF)
        else:
            raise ValueError(ftype)
    return bytes(out)


def _chunk(ctype: bytes, body: bytes) -> bytes:
    return (struct.pack(">I", len(body)) + ctype + body
            + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF))


def ref_png(pixels: np.ndarray, color_type: int, filters=None,
            bit_depth: int = 8, interlace: int = 0, split_idat: bool = False) -> bytes:
    """Encode an (h, w, spp) uint8 array using the given filter per row."""
    h, w, spp = pixels.shape
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, interlace)
    raw = bytearray()
    prev = bytes(w * spp)
    for y in range(h):
        cur = pixels[y].tobytes()
        f = filters[y] if filters is not None else 0
        raw.append(f)
        raw.extend(_filter_row(cur, prev, f, spp))
        prev = cur
    comp = zlib.compress(bytes(raw))
    if split_idat:
        mid = len(comp) // 2
        idat = _chunk(b"IDAT", comp[:mid]) + _chunk(b"IDAT", comp[mid:])
    else:
        idat = _chunk(b"IDAT", comp)
    return PNG_SIGNATURE + _chunk(b"IHDR", ihdr) + idat + _chunk(b"IEND", b"")


# --- Raster -------------------------------------------------------------

def test_raster_promotes_2d_to_single_channel():
    r = Raster(np.zeros((4, 5)))
    assert r.shape == (4, 5, 1)
    assert r.channels == 1


def test_raster_rejects_bad_channel_count():
    with pytest.raises(DimensionError):
        Raster(np.zeros((4, 4, 2)))
    with pytest.raises(DimensionError):
        Raster(np.zeros((4, 4, 4)))


def test_raster_rejects_empty_and_out_of_range():
    with pytest.raises(DimensionError):
        Raster(np.zeros((0, 3, 1)))
    with pytest.raises(ValueError):
        Raster(np.full((2, 2, 1), 1.5))
    with pytest.raises(ValueError):
        Raster(np.full((2, 2, 1), -0.1))


def test_raster_is_float64_contiguous_readonly(gen):
    r = rand_raster(gen)
    assert r.data.dtype == np.float64
    assert r.data.flags.c_contiguous
    assert not r.data.flags.writeable


def test_raster_equality_and_hash(gen):
    a = rand_raster(gen, 4, 4)
    b = Raster(a.data)
    assert a == b
    assert hash(a) == hash(b)
    assert a != Raster(np.zeros((4, 4, 3)))


def test_constant_and_clipped():
    r = Raster.constant(0.25, 3, 4, 3)
    assert r.shape == (3, 4, 3)
    assert float(r.data.min()) == float(r.data.max()) == 0.25
    c = clipped(np.array([[-1.0, 2.0]]))
    assert c.data.min() == 0.0 and c.data.max() == 1.0


def test_luminance_weights():
    img = Raster(np.stack([np.ones((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))], axis=-1))
    assert img.luminance().data[0, 0, 0] == pytest.approx(LUMA_WEIGHTS[0])
    gray = Raster(np.full((2, 2), 0.3))
    assert gray.luminance() is gray


def test_quantize_u8_rounds_ties_to_even():
    # 127.5 and 0.5 are exact .5 cases
    assert quantize_u8(np.array([0.5]))[0] == 128
    assert quantize_u8(np.array([0.5 / 255.0]))[0] == 0
    assert quantize_u8(np.array([0.0, 1.0])).tolist() == [0, 255]


# --- PNG decode vs the reference encoder --------------------------------

@pytest.mark.parametrize("ftype", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("color_type,spp", [(0, 1), (2, 3)])
def test_png_each_filter_type_decodes(gen, ftype, color_type, spp):
    pixels = gen.integers(0, 256, size=(7, 5, spp), dtype=np.uint8)
    data = ref_png(pixels, color_type, filters=[ftype] * 7)
    img = decode(data)
    assert img.shape == (7, 5, spp)
    np.testing.assert_array_equal(quantize_u8(img.data), pixels)


def test_png_mixed_filters_and_split_idat(gen):
    pixels = gen.integers(0, 256, size=(10, 8, 3), dtype=np.uint8)
    filters = [0, 1, 2, 3, 4, 4, 3, 2, 1, 0]
    data = ref_png(pixels, 2, filters=filters, split_idat=True)
    np.testing.assert_array_equal(quantize_u8(decode(data).data), pixels)


def test_png_alpha_dropped_with_warning(gen):
    pixels = gen.integers(0, 256, size=(4, 4, 4), dtype=np.uint8)
    data = ref_png(pixels, 6)
    with pytest.warns(UserWarning, match="alpha"):
        img = decode(data)
    assert img.channels == 3
    np.testing.assert_array_equal(quantize_u8(img.data), pixels[:, :, :3])


def test_png_gray_alpha_dropped(gen):
    pixels = gen.integers(0, 256, size=(4, 4, 2), dtype=np.uint8)
    with pytest.warns(UserWarning):
        img = decode(ref_png(pixels, 4))
    assert img.channels == 1


def test_png_unsupported_variants(gen):
    pixels = gen.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    with pytest.raises(UnsupportedFormatError):
        decode(ref_png(pixels, 2, bit_depth=16))
    with pytest.raises(UnsupportedFormatError):
        decode(ref_png(pixels, 2, interlace=1))
    with pytest.raises(UnsupportedFormatError):
        decode(ref_png(pixels[:, :, :1], 3))  # palette


def test_png_corruption_is_decode_error(gen):
    pixels = gen.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    good = ref_png(pixels, 2)
    with pytest.raises(DecodeError):
        decode(good[:20])  # truncated mid-IHDR
    bad_crc = bytearray(good)
    bad_crc[-5] ^= 0xFF  # IEND crc
    with pytest.raises(DecodeError):
        decode(bytes(bad_crc))
    with pytest.raises(DecodeError):
        decode(b"not an image at all")
    # filter byte out of range
    raw = bytearray()
    raw.append(9)
    raw.extend(pixels[0].tobytes())
    body = (PNG_SIGNATURE
            + _chunk(b"IHDR", struct.pack(">IIBBBBB", 4, 1, 8, 2, 0, 0, 0))
            + _chunk(b"IDAT", zlib.compress(bytes(raw)))
            + _chunk(b"IEND", b""))
    with pytest.raises(DecodeError):
        decode(body)


def test_png_wrong_payload_size_is_decode_error():
    body = (PNG_SIGNATURE
            + _chunk(b"IHDR", struct.pack(">IIBBBBB", 4, 2, 8, 2, 0, 0, 0))
            + _chunk(b"IDAT", zlib.compress(b"\x00" + b"\x01" * 12))  # one row only
            + _chunk(b"IEND", b""))
    with pytest.raises(DecodeError):
        decode(body)


# --- round trips --------------------------------------------------------

@pytest.mark.parametrize("channels", [1, 3])
def test_png_round_trip_exact_on_8bit_grid(gen, channels):
    pixels = gen.integers(0, 256, size=(9, 6, channels), dtype=np.uint8)
    img = Raster(pixels.astype(np.float64) / 255.0)
    out = decode(encode(img, "png"))
    np.testing.assert_array_equal(out.data, img.data)


@pytest.mark.parametrize("channels", [1, 3])
def test_ppm_round_trip_exact_on_8bit_grid(gen, channels):
    pixels = gen.integers(0, 256, size=(5, 7, channels), dtype=np.uint8)
    img = Raster(pixels.astype(np.float64) / 255.0)
    out = decode(encode(img, "ppm"))
    np.testing.assert_array_equal(out.data, img.data)


def test_encode_rejects_unknown_format(gen):
    with pytest.raises(ValueError):
        encode(rand_raster(gen), "jpeg")


def test_round_trip_error_bound(gen):
    img = rand_raster(gen, 8, 8)
    out = decode(encode(img, "png"))
    assert float(np.abs(out.data - img.data).max()) <= 0.5 / 255.0 + 1e-12


def test_pnm_header_comments_and_p5():
    data = b"P5\n# a comment\n3 2\n255\n" + bytes(range(6))
    img = decode(data)
    assert img.shape == (2, 3, 1)
    assert quantize_u8(img.data).ravel().tolist() == list(range(6))


def test_pnm_errors():
    with pytest.raises(UnsupportedFormatError):
        decode(b"P6\n2 2\n65535\n" + b"\x00" * 24)
    with pytest.raises(DecodeError):
        decode(b"P6\n2 2\n255\n" + b"\x00" * 5)  # truncated pixels
    with pytest.raises(DecodeError):
        decode(b"P6\n2 x\n255\n")


def test_write_read_image_dispatch(tmp_path, gen):
    img = Raster(gen.integers(0, 256, size=(6, 6, 3), dtype=np.uint8) / 255.0)
    for name in ("a.png", "b.ppm", "c.PGM"):
        p = tmp_path / name
        write_image(img, p)
        assert read_image(p) == img
    assert (tmp_path / "b.ppm").read_bytes()[:2] == b"P6"
