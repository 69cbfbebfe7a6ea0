"""Cross-modal place recognition: equirectangular panoramas and LiDAR sub-maps
embedded into one descriptor space."""

from .config import RunConfig, load_config, toy_config
from .kernels import backend
from .model import CrossModalNet, ImageEncoder, PointEncoder

__version__ = "0.1.0"

__all__ = ["RunConfig", "load_config", "toy_config", "backend", "CrossModalNet", "ImageEncoder",
           "PointEncoder", "__version__"]
