"""Figure rendering for clockbath simulation artifacts."""

__version__ = "0.1.0"

from .render import FIGURE_KINDS, FigureSpec, SchemaError, render
