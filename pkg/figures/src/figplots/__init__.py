"""Static figure rendering for the experiment CSVs.

This package never computes domain math: every number it draws or summarizes
is read verbatim from the CSV files produced by the experiment CLI.
"""

from .render import FAMILIES, FigureDataError, FigureSpec, render

__all__ = ["FAMILIES", "FigureDataError", "FigureSpec", "render"]
