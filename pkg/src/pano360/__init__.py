"""pano360: geometry, losses, metrics and training machinery for
perspective-to-360 depth distillation."""

__version__ = "0.1.0"
