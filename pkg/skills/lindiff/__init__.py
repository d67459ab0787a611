"""Public package interface."""

from .pipeline import run

__all__ = ["run"]
