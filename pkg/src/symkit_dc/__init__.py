"""Symbolic verification engine for diffusion-convection equations f u_t = (g A u_x)_x + h B u_x."""

__version__ = "0.1.0"
