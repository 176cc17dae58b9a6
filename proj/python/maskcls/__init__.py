"""Mask classification from precomputed embeddings."""

from ._maskcls import *  # noqa: F401,F403
from ._maskcls import attention  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
