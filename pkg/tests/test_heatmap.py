import numpy as np
import pytest
from PIL import Image

from semiclab.errors import ConfigError
from semiclab.heatmap import BAR_SIZE, density_image, save_density, save_histogram


def test_density_image_colours():
  """Test the diverging scale and the orientation of the axes."""
  values = np.zeros((4, 4))
  values[0, 0] = 2.0  # x lowest, ξ lowest: bottom-left
  values[3, 3] = -2.0  # x highest, ξ highest: top-right
  img = density_image(values)
  assert img.size == (256, 256)
  assert img.getpixel((0, 255)) == (255, 0, 0)
  assert img.getpixel((255, 0)) == (0, 0, 255)
  assert img.getpixel((128, 128)) == (255, 255, 255)


def test_density_image_rejects_non_2d():
  with pytest.raises(ConfigError):
    density_image(np.zeros((2, 2, 2)))


def test_save_density(tmp_path):
  path = save_density(np.ones((300, 300)), tmp_path / "density.png")
  with Image.open(path) as img:
    assert img.format == "PNG"
    assert img.size == (300, 300)


def test_save_histogram(tmp_path):
  path = save_histogram([0, 3, 1], tmp_path / "hist.png")
  with Image.open(path) as img:
    assert img.size == BAR_SIZE
    # Tallest bar reaches near the top, empty bin stays white
    assert img.getpixel((200, 20)) == (70, 110, 180)
    assert img.getpixel((60, 200)) == (255, 255, 255)
  save_histogram([], tmp_path / "empty.png")
