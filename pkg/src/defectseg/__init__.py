"""Memory-guided surface defect segmentation.

Trains from normal images only: synthetic anomalies provide the
supervision, a pool of frozen features from normal samples provides the
contrast signal, and a U-Net style decoder turns both into per-pixel
anomaly probabilities.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config, save_config

__all__ = ["RunConfig", "load_config", "save_config", "__version__"]
