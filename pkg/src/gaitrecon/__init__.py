"""Multi-camera 3D gait reconstruction and walkway validation."""

__version__ = "0.1.0"
