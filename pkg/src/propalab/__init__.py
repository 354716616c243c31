"""Propagators of non-autonomous divergence-form parabolic equations on the torus."""

__version__ = "0.1.0"
