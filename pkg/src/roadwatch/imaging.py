"""Image decoding, integrity checks, resizing, rescaling and augmentation.

All operations are pure functions over immutable pixel buffers, so they are
safe to call concurrently. Interpolation is bilinear with half-pixel centre
alignment; fractional results round half-away-from-zero so outputs are
bit-identical across platforms.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError


class CorruptImageError(ValueError):
    """The byte stream does not decode to a usable RGB image."""


@dataclass(frozen=True)
class Image:
    """An RGB image: uint8 pixels in a read-only (height, width, 3) array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def size(self) -> tuple[int, int]:
        """(width, height), the conventional image-size order."""
        return (self.width, self.height)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)


def decode_and_check(body: bytes) -> Image:
    """Decode JPEG/PNG bytes, rejecting corrupt or truncated streams.

    Grayscale and palette images are promoted to RGB.
    """
    if not body:
        raise CorruptImageError("empty byte sequence")
    try:
        with PILImage.open(io.BytesIO(body)) as im:
            im.load()  # force a full parse so truncation surfaces here
            if im.width < 1 or im.height < 1:
                raise CorruptImageError("zero-dimension image")
            rgb = im.convert("RGB")
            return Image(np.asarray(rgb, dtype=np.uint8))
    except CorruptImageError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"undecodable image: {exc}") from exc


def encode_png(img: Image) -> bytes:
    """Lossless PNG encoding (fixtures, snapshots-at-rest)."""
    buf = io.BytesIO()
    PILImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _round_half_away(values: np.ndarray) -> np.ndarray:
    # Pixel values are non-negative, so floor(v + 0.5) is ties-away-from-zero.
    return np.floor(values + 0.5)


def _sample_bilinear(pixels: np.ndarray, ys: np.ndarray, xs: np.ndarray, fill: float) -> np.ndarray:
    """Sample float coordinates (grid ys by xs) with constant fill outside."""
    h, w = pixels.shape[:2]
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    def gather(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (yy[:, None] >= 0) & (yy[:, None] < h) & (xx[None, :] >= 0) & (xx[None, :] < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        vals = pixels[yc[:, None], xc[None, :]].astype(np.float64)
        return np.where(inside[:, :, None], vals, fill)

    top = gather(y0, x0) * (1.0 - wx) + gather(y0, x0 + 1) * wx
    bottom = gather(y0 + 1, x0) * (1.0 - wx) + gather(y0 + 1, x0 + 1) * wx
    return top * (1.0 - wy) + bottom * wy


def resize(img: Image, target: tuple[int, int]) -> Image:
    """Bilinear resize to (width, height) with half-pixel centre alignment."""
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError(f"target dims must be >= 1, got {target}")
    if (tw, th) == (img.width, img.height):
        return img
    sy = img.height / th
    sx = img.width / tw
    ys = (np.arange(th, dtype=np.float64) + 0.5) * sy - 0.5
    xs = (np.arange(tw, dtype=np.float64) + 0.5) * sx - 0.5
    # Clamp sampling into the source extent: resizing never looks outside.
    ys = np.clip(ys, 0.0, img.height - 1.0)
    xs = np.clip(xs, 0.0, img.width - 1.0)
    out = _sample_bilinear(img.pixels, ys, xs, fill=0.0)
    return Image(np.clip(_round_half_away(out), 0, 255).astype(np.uint8))


def rescale_01(img: Image) -> np.ndarray:
    """Map uint8 pixels to float64 values in [0, 1] (value = pixel / 255)."""
    return img.pixels.astype(np.float64) / 255.0


@dataclass(frozen=True)
class AugmentationConfig:
    """Ranges for the sampled augmentation transform.

    Shift ranges are fractions of the image extent; zoom and brightness are
    (low, high) multiplicative factor ranges. Vacated pixels are filled with
    the constant 0.
    """

    width_shift_range: float = 0.1
    height_shift_range: float = 0.1
    shear_range: float = 0.01
    zoom_range: tuple[float, float] = (0.9, 1.0)
    horizontal_flip: bool = True
    vertical_flip: bool = False
    fill_mode: str = "constant"
    brightness_range: tuple[float, float] = (0.5, 1.5)

    def __post_init__(self) -> None:
        if not 0.0 <= self.width_shift_range <= 1.0:
            raise ValueError("width_shift_range must be in [0, 1]")
        if not 0.0 <= self.height_shift_range <= 1.0:
            raise ValueError("height_shift_range must be in [0, 1]")
        zl, zh = self.zoom_range
        if not (0.0 < zl <= zh):
            raise ValueError("zoom_range must satisfy 0 < low <= high")
        bl, bh = self.brightness_range
        if not (0.0 < bl <= bh):
            raise ValueError("brightness_range must satisfy 0 < low <= high")
        if self.fill_mode != "constant":
            raise ValueError(f"unsupported fill_mode {self.fill_mode!r}")


IDENTITY_AUGMENTATION = AugmentationConfig(
    width_shift_range=0.0,
    height_shift_range=0.0,
    shear_range=0.0,
    zoom_range=(1.0, 1.0),
    horizontal_flip=False,
    vertical_flip=False,
    brightness_range=(1.0, 1.0),
)


@dataclass(frozen=True)
class AffineParams:
    """One concrete sampled transform (pixel-unit shifts, factors, flips)."""

    shift_x: float = 0.0
    shift_y: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    flip_horizontal: bool = False
    flip_vertical: bool = False


def apply_affine(img: Image, params: AffineParams, fill: int = 0) -> Image:
    """Apply shift, shear, zoom and flips about the image centre.

    Output pixels are sampled by inverting the transform (translate, then
    shear, then zoom, then flip, in forward order), bilinear with constant
    fill, so a pure integer shift copies columns/rows exactly.
    """
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)

    # Invert: undo translation, then flip, then zoom, then shear.
    u = xs - params.shift_x - cx
    v = ys - params.shift_y - cy
    if params.flip_horizontal:
        u = -u
    if params.flip_vertical:
        v = -v
    u = u / params.zoom
    v = v / params.zoom
    # Horizontal shear (forward x' = x + shear * y) inverted per output row.
    uu = u[None, :] - params.shear * v[:, None]
    vv = np.broadcast_to(v[:, None], (h, w))

    src_x = uu + cx
    src_y = vv + cy
    out = _sample_rectilinear(img.pixels, src_y, src_x, float(fill))
    return Image(np.clip(_round_half_away(out), 0, 255).astype(np.uint8))


def _sample_rectilinear(pixels: np.ndarray, ys: np.ndarray, xs: np.ndarray, fill: float) -> np.ndarray:
    """Bilinear sampling at per-pixel float coordinates with constant fill."""
    h, w = pixels.shape[:2]
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[..., None]
    wx = (xs - x0)[..., None]

    def gather(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        vals = pixels[yc, xc].astype(np.float64)
        return np.where(inside[..., None], vals, fill)

    top = gather(y0, x0) * (1.0 - wx) + gather(y0, x0 + 1) * wx
    bottom = gather(y0 + 1, x0) * (1.0 - wx) + gather(y0 + 1, x0 + 1) * wx
    return top * (1.0 - wy) + bottom * wy


def apply_brightness(img: Image, factor: float) -> Image:
    """Scale all channels by `factor`, clamping to [0, 255]."""
    if factor == 1.0:
        return img
    scaled = _round_half_away(img.pixels.astype(np.float64) * factor)
    return Image(np.clip(scaled, 0, 255).astype(np.uint8))


def sample_params(cfg: AugmentationConfig, seed: int, width: int, height: int) -> tuple[AffineParams, float]:
    """Draw one transform from the config's ranges, deterministically by seed.

    The generator is PCG64; draws happen in a fixed order (shift x, shift y,
    shear, zoom, horizontal flip, vertical flip, brightness) so outputs are
    stable across platforms and releases.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    shift_x = rng.uniform(-cfg.width_shift_range, cfg.width_shift_range) * width
    shift_y = rng.uniform(-cfg.height_shift_range, cfg.height_shift_range) * height
    shear = rng.uniform(-cfg.shear_range, cfg.shear_range)
    zoom = rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1])
    flip_h = cfg.horizontal_flip and bool(rng.integers(0, 2))
    flip_v = cfg.vertical_flip and bool(rng.integers(0, 2))
    brightness = rng.uniform(cfg.brightness_range[0], cfg.brightness_range[1])
    params = AffineParams(
        shift_x=shift_x,
        shift_y=shift_y,
        shear=shear,
        zoom=zoom,
        flip_horizontal=flip_h,
        flip_vertical=flip_v,
    )
    return params, brightness


def augment(img: Image, cfg: AugmentationConfig, seed: int) -> Image:
    """One sampled affine transform followed by brightness scaling.

    The same (image, config, seed) triple always yields an identical output;
    dimensions are preserved and vacated pixels are constant 0.
    """
    params, brightness = sample_params(cfg, seed, img.width, img.height)
    if (
        params == AffineParams()
        and brightness == 1.0
    ):
        return img
    return apply_brightness(apply_affine(img, params, fill=0), brightness)
