"""
PNG heat maps of phase-space densities and bar charts of norm histograms.
"""

import logging
from pathlib import Path
from typing import Final, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from .errors import ConfigError

logger: logging.Logger = logging.getLogger("semiclab")

MIN_PIXELS: Final[int] = 256
BAR_SIZE: Final[Tuple[int, int]] = (400, 240)


def _diverging(values: np.ndarray) -> np.ndarray:
  """Blue for negative, white at zero, red for positive; symmetric scale."""
  scale: float = float(np.max(np.abs(values)))
  t: np.ndarray = values / scale if scale > 0 else np.zeros_like(values)
  rgb: np.ndarray = np.empty(values.shape + (3, ), dtype=float)
  pos: np.ndarray = np.clip(t, 0, 1)
  neg: np.ndarray = np.clip(-t, 0, 1)
  rgb[..., 0] = 1.0 - neg
  rgb[..., 1] = 1.0 - pos - neg
  rgb[..., 2] = 1.0 - pos
  return np.clip(rgb * 255, 0, 255).astype(np.uint8)


def density_image(values: np.ndarray) -> Image.Image:
  """A 2D real array as an RGB image with ξ upwards and x to the right."""
  array: np.ndarray = np.real(np.asarray(values))
  if array.ndim != 2:
    raise ConfigError(f"Heat maps need a 2D array, got shape {array.shape}")
  # rows are x, columns ξ; the image wants rows ξ from the top
  pixels: np.ndarray = _diverging(array.T[::-1])
  img: Image.Image = Image.fromarray(pixels)
  factor: int = max(1, MIN_PIXELS // max(array.shape))
  if factor > 1:
    img = img.resize((array.shape[0] * factor, array.shape[1] * factor), Image.Resampling.NEAREST)
  return img


def save_density(values: np.ndarray, path: Union[str, Path]) -> Path:
  target: Path = Path(path)
  density_image(values).save(target, format="PNG")
  logger.debug(f"Wrote heat map {target}")
  return target


def save_histogram(counts: Sequence[int], path: Union[str, Path]) -> Path:
  """Bar chart of histogram counts on a white background."""
  target: Path = Path(path)
  width, height = BAR_SIZE
  img: Image.Image = Image.new("RGB", BAR_SIZE, "white")
  draw: ImageDraw.ImageDraw = ImageDraw.Draw(img)
  bins: int = len(counts)
  if bins:
    top: int = max(max(counts), 1)
    bar: float = width / bins
    for i, c in enumerate(counts):
      h: float = (height - 10) * c / top
      draw.rectangle([i * bar + 1, height - h, (i + 1) * bar - 1, height], fill=(70, 110, 180))
  img.save(target, format="PNG")
  logger.debug(f"Wrote histogram {target}")
  return target
