"""Curation pipeline for long-take, high-motion videos with dense captions."""

__version__ = "0.1.0"
