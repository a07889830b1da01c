"""Render charts from blocks-sim result directories."""
from .render import (FIGURE_KINDS, EmptyData, FigureError, FigureSpec,
                     MissingColumn, MissingInput, render)

__all__ = ["FIGURE_KINDS", "EmptyData", "FigureError", "FigureSpec",
           "MissingColumn", "MissingInput", "render"]
__version__ = "0.1.0"
