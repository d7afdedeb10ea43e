"""Relightable neural radiance fields for outdoor scenes.

Learns density, diffuse albedo, per-image spherical-harmonics lighting and a
shadow field from posed multi-illumination images; renders novel views under
novel lighting and exports a mesh+albedo asset for interactive viewers.
"""

from .backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
