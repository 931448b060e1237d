"""Image containers and 8-bit raster I/O.

All pixel math in this package runs on float64 intensities, nominally in
[0, 1]. Arrays inside the containers are frozen (non-writeable) so values can
be shared across threads without defensive copies. Quantization to bytes is
round-half-up, which keeps encode/decode round trips bit-exact across
platforms.

PNG goes through Pillow; binary PPM (P6, maxval 255) has a hand-rolled codec
so golden fixtures can be written as literal bytes in tests.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class ImageIOError(Exception):
    """Raster I/O failure."""


class MissingFileError(ImageIOError):
    """Input path does not exist."""


class UnsupportedFormatError(ImageIOError):
    """Bytes are not an 8-bit RGB/RGBA PNG or a maxval-255 binary PPM."""


class TruncatedDataError(ImageIOError):
    """Header promised more pixel data than the stream holds."""


def _freeze(arr: np.ndarray, ndim: int, name: str) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, order="C")
    if arr.ndim != ndim:
        raise ValueError(f"{name} data must be {ndim}-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Plane:
    """Single-channel raster, row-major float64."""

    data: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _freeze(self.data, 2, "Plane"))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RgbImage:
    """Interleaved RGB raster, shape (height, width, 3), float64."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = _freeze(self.data, 3, "RgbImage")
        if arr.shape[2] != 3:
            raise ValueError(f"RgbImage needs 3 channels, got {arr.shape[2]}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0,1] floats to uint8 with round-half-up; out-of-range clips."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def max_channel(img: RgbImage) -> Plane:
    """Pointwise channel maximum (the classical initial illumination guess)."""
    return Plane(img.data.max(axis=2))


def luma(img: RgbImage) -> Plane:
    """Channel mean, used wherever a single-channel view of RGB is needed."""
    return Plane(img.data.mean(axis=2))


# ── PPM (P6) codec ──────────────────────────────────────────────────────────


def _ppm_read(data: bytes) -> RgbImage:
    pos = 2  # past magic
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise TruncatedDataError("PPM header ended early")
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isdigit():
            end = pos
            while end < len(data) and data[end : end + 1].isdigit():
                end += 1
            fields.append(int(data[pos:end]))
            pos = end
        else:
            raise UnsupportedFormatError(f"bad PPM header byte {c!r}")
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormatError(f"PPM maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise UnsupportedFormatError("PPM dimensions must be positive")
    pos += 1  # single whitespace byte separates header from raster
    need = width * height * 3
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise TruncatedDataError(
            f"PPM raster has {len(raster)} of {need} expected bytes"
        )
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(arr / 255.0)


def _ppm_write(arr8: np.ndarray) -> bytes:
    h, w = arr8.shape[:2]
    if arr8.ndim == 2:  # replicate gray into the three P6 channels
        arr8 = np.repeat(arr8[:, :, None], 3, axis=2)
    return b"P6\n%d %d\n255\n" % (w, h) + arr8.tobytes()


# ── PNG via Pillow ──────────────────────────────────────────────────────────


def _png_read(data: bytes) -> RgbImage:
    try:
        with Image.open(io.BytesIO(data)) as im:
            mode = im.mode
            if mode not in ("RGB", "RGBA"):
                raise UnsupportedFormatError(
                    f"PNG mode {mode!r} unsupported; need 8-bit RGB or RGBA"
                )
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        # The PNG magic already matched, so an undecodable stream means the
        # data ends (or breaks) before the promised raster does.
        raise TruncatedDataError(str(exc)) from exc
    return RgbImage(arr[:, :, :3] / 255.0)


def decode_image(data: bytes) -> RgbImage:
    """Decode PNG or P6 bytes into an RgbImage (alpha dropped)."""
    if data[:2] == b"P6":
        return _ppm_read(data)
    if data[: len(PNG_MAGIC)] == PNG_MAGIC:
        return _png_read(data)
    raise UnsupportedFormatError("not a PNG or binary PPM stream")


def encode_image(img: RgbImage | Plane, fmt: str = "png") -> bytes:
    """Quantize and encode. Planes become grayscale PNG or replicated P6."""
    if np.min(img.data) < 0.0 or np.max(img.data) > 1.0:
        raise ValueError("image values must lie in [0, 1] before encoding")
    arr8 = quantize(img.data)
    if fmt == "ppm":
        return _ppm_write(arr8)
    if fmt == "png":
        mode = "L" if arr8.ndim == 2 else "RGB"
        buf = io.BytesIO()
        Image.fromarray(arr8, mode).save(buf, format="PNG")
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}; use 'png' or 'ppm'")


def load_image(path: str | Path) -> RgbImage:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise MissingFileError(str(path)) from exc
    return decode_image(data)


def save_image(img: RgbImage | Plane, path: str | Path, fmt: str | None = None) -> None:
    """Write PNG or PPM; format defaults from the path suffix."""
    path = Path(path)
    if fmt is None:
        fmt = "ppm" if path.suffix.lower() in (".ppm", ".pnm") else "png"
    data = encode_image(img, fmt)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
