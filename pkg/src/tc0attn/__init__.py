"""Compile average-hard-attention transformers into threshold circuits."""

from .floatp import ConfigError, FloatP, Params

__version__ = "0.1.0"

__all__ = ["ConfigError", "FloatP", "Params", "__version__"]
