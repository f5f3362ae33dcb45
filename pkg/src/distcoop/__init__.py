"""Fully distributed state estimation and cooperative stabilization of LTI plants."""

__version__ = "0.1.0"
