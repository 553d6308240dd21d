"""Orchestration and preprocessing between 3D viewports and diffusion backends."""

__version__ = "0.1.0"
