"""In-memory image representation and its codecs.

Intensities live in [0, 1] float64 everywhere in the package; the 8-bit
conversion happens only at the codec boundary.  Supported interchange
formats are 8-bit PNG (gray/RGB; alpha is dropped with a warning) and
binary PPM (P6 for RGB, P5 for gray).  Quantization on encode is
round-to-nearest with ties to even, so one encode/decode round trip
moves a sample by at most 1/510 and 8-bit-origin data round-trips
exactly.
"""

from __future__ import annotations

import struct
import warnings
import zlib

import numpy as np

from .errors import DecodeError, DimensionError, UnsupportedFormatError

# Rec. 601 luma weights; recorded in report metadata.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class Raster:
    """Immutable image: float64 array of shape (height, width, channels), values in [0, 1].

    channels is 1 (gray) or 3 (RGB).  The backing array is C-contiguous
    and marked read-only, so rasters are safe to share across threads;
    every operation returns a new instance.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionError(f"expected (h, w, c) with c in {{1, 3}}, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"empty image: shape {arr.shape}")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"intensities outside [0, 1]: min={lo}, max={hi}")
        arr = np.ascontiguousarray(arr)
        if not arr.flags.owndata:
            arr = arr.copy()
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def channels(self) -> int:
        return self._data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._data.shape

    @classmethod
    def constant(cls, value: float, height: int, width: int, channels: int = 1) -> "Raster":
        return cls(np.full((height, width, channels), float(value)))

    def luminance(self) -> "Raster":
        """1-channel luma image (Rec. 601 weights for RGB, identity for gray)."""
        if self.channels == 1:
            return self
        r, g, b = LUMA_WEIGHTS
        y = r * self._data[:, :, 0] + g * self._data[:, :, 1] + b * self._data[:, :, 2]
        return clipped(y[:, :, np.newaxis])

    def __repr__(self) -> str:
        return f"Raster({self.height}x{self.width}x{self.channels})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))


def clipped(arr: np.ndarray) -> Raster:
    """Wrap a float array as a Raster, clipping into [0, 1] first."""
    return Raster(np.clip(arr, 0.0, 1.0))


def luminance(img: Raster) -> Raster:
    return img.luminance()


PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# color type -> samples per pixel
_PNG_CHANNELS = {0: 1, 2: 3, 4: 2, 6: 4}


def quantize_u8(arr: np.ndarray) -> np.ndarray:
    """[0,1] floats to the 8-bit grid (round to nearest, ties to even)."""
    return np.rint(np.asarray(arr) * 255.0).astype(np.uint8)


def decode(data: bytes) -> Raster:
    """Decode a PNG, PPM (P6) or PGM (P5) byte stream."""
    if data[:8] == PNG_SIGNATURE:
        return _decode_png(data)
    if data[:2] in (b"P6", b"P5"):
        return _decode_pnm(data)
    raise DecodeError("unrecognized image signature at offset 0")


def encode(img: Raster, format: str) -> bytes:
    """Encode to "png" or "ppm" (gray rasters use the P5 variant of PPM)."""
    fmt = format.lower()
    if fmt == "png":
        return _encode_png(img)
    if fmt == "ppm":
        return _encode_pnm(img)
    raise ValueError(f"unsupported format {format!r}; expected 'png' or 'ppm'")


def read_image(path) -> Raster:
    with open(path, "rb") as fh:
        return decode(fh.read())


def write_image(img: Raster, path) -> None:
    name = str(path).lower()
    fmt = "ppm" if name.endswith((".ppm", ".pgm")) else "png"
    with open(path, "wb") as fh:
        fh.write(encode(img, fmt))


# ---------------------------------------------------------------------------
# PNG

def _decode_png(data: bytes) -> Raster:
    pos = 8
    header = None
    idat = []
    seen_iend = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise DecodeError(f"truncated chunk header at offset {pos}")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        body_start = pos + 8
        body_end = body_start + length
        if body_end + 4 > len(data):
            raise DecodeError(f"truncated chunk body at offset {pos}")
        body = data[body_start:body_end]
        (crc,) = struct.unpack(">I", data[body_end : body_end + 4])
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise DecodeError(f"bad chunk crc at offset {body_end}")
        if ctype == b"IHDR":
            if len(body) != 13:
                raise DecodeError(f"bad IHDR length at offset {pos}")
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            if header is None:
                raise DecodeError(f"IDAT before IHDR at offset {pos}")
            idat.append(body)
        elif ctype == b"IEND":
            seen_iend = True
            break
        pos = body_end + 4
    if header is None:
        raise DecodeError("missing IHDR chunk")
    if not seen_iend:
        raise DecodeError(f"missing IEND chunk (stream ends at offset {len(data)})")
    if not idat:
        raise DecodeError("missing IDAT chunk")

    width, height, depth, color, compression, filter_method, interlace = header
    if width < 1 or height < 1:
        raise DecodeError(f"bad dimensions {width}x{height}")
    if depth != 8:
        raise UnsupportedFormatError(f"unsupported bit depth {depth} (only 8-bit)")
    if color not in _PNG_CHANNELS:
        raise UnsupportedFormatError(f"unsupported color type {color}")
    if compression != 0 or filter_method != 0:
        raise UnsupportedFormatError("unsupported compression/filter method")
    if interlace != 0:
        raise UnsupportedFormatError("interlaced PNG not supported")

    channels = _PNG_CHANNELS[color]
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise DecodeError(f"corrupt IDAT stream: {exc}") from exc
    stride = width * channels
    if len(raw) != height * (stride + 1):
        raise DecodeError(
            f"decompressed size {len(raw)} != expected {height * (stride + 1)}"
        )
    pixels = _defilter(np.frombuffer(raw, dtype=np.uint8), height, width, channels)

    if color in (4, 6):
        warnings.warn("PNG has an alpha channel; dropping it")
        pixels = pixels[:, :, : 1 if color == 4 else 3]
    return Raster(pixels.astype(np.float64) / 255.0)


def _defilter(raw: np.ndarray, height: int, width: int, channels: int) -> np.ndarray:
    bpp = channels
    stride = width * bpp
    rows = raw.reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.uint8)
    prior = np.zeros(stride, dtype=np.uint8)
    for y in range(height):
        ftype = int(rows[y, 0])
        line = rows[y, 1:].copy()
        if ftype == 0:
            recon = line
        elif ftype == 1:  # Sub: modular prefix sum per byte lane
            recon = np.add.accumulate(
                line.reshape(width, bpp), axis=0, dtype=np.uint8
            ).reshape(stride)
        elif ftype == 2:  # Up
            recon = line + prior
        elif ftype == 3:  # Average
            recon = line
            wide_prior = prior.astype(np.uint16)
            for x in range(width):
                seg = slice(x * bpp, (x + 1) * bpp)
                left = (
                    recon[(x - 1) * bpp : x * bpp].astype(np.uint16)
                    if x
                    else np.zeros(bpp, dtype=np.uint16)
                )
                recon[seg] = (recon[seg] + ((left + wide_prior[seg]) >> 1)).astype(np.uint8)
        elif ftype == 4:  # Paeth
            recon = line
            for x in range(width):
                seg = slice(x * bpp, (x + 1) * bpp)
                left = (
                    recon[(x - 1) * bpp : x * bpp].astype(np.int16)
                    if x
                    else np.zeros(bpp, dtype=np.int16)
                )
                up = prior[seg].astype(np.int16)
                ul = (
                    prior[(x - 1) * bpp : x * bpp].astype(np.int16)
                    if x
                    else np.zeros(bpp, dtype=np.int16)
                )
                p = left + up - ul
                pa, pb, pc = np.abs(p - left), np.abs(p - up), np.abs(p - ul)
                pred = np.where(
                    (pa <= pb) & (pa <= pc), left, np.where(pb <= pc, up, ul)
                )
                recon[seg] = (recon[seg].astype(np.int16) + pred).astype(np.uint8)
        else:
            raise DecodeError(f"bad filter type {ftype} on row {y}")
        out[y] = recon
        prior = recon
    return out.reshape(height, width, channels)


def _png_chunk(ctype: bytes, body: bytes) -> bytes:
    return (
        struct.pack(">I", len(body))
        + ctype
        + body
        + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF)
    )


def _encode_png(img: Raster) -> bytes:
    pixels = quantize_u8(img.data)
    color = 0 if img.channels == 1 else 2
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, color, 0, 0, 0)
    stride = img.width * img.channels
    flat = pixels.reshape(img.height, stride)
    scanlines = np.zeros((img.height, stride + 1), dtype=np.uint8)
    scanlines[:, 1:] = flat
    idat = zlib.compress(scanlines.tobytes(), 6)
    return (
        PNG_SIGNATURE
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", idat)
        + _png_chunk(b"IEND", b"")
    )


# ---------------------------------------------------------------------------
# PPM / PGM

def _decode_pnm(data: bytes) -> Raster:
    channels = 3 if data[:2] == b"P6" else 1
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise DecodeError(f"truncated header at offset {pos}")
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        elif c.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise DecodeError(f"unexpected byte {c!r} in header at offset {pos}")
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormatError(f"unsupported maxval {maxval} (only 255)")
    if width < 1 or height < 1:
        raise DecodeError(f"bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    n = width * height * channels
    body = data[pos : pos + n]
    if len(body) != n:
        raise DecodeError(
            f"truncated pixel data at offset {pos} (got {len(body)}, want {n})"
        )
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return Raster(arr.astype(np.float64) / 255.0)


def _encode_pnm(img: Raster) -> bytes:
    magic = b"P6" if img.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    return header + quantize_u8(img.data).tobytes()
