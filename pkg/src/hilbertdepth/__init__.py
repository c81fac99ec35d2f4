"""Sparse LiDAR to continuous depth images through Hilbert occupancy maps."""

__version__ = "0.1.0"
