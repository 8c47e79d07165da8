"""HTTP service exposing dataset generation, training, evaluation and
report extraction. The CLI is a thin client of this API."""

from .app import create_app

__all__ = ["create_app"]
