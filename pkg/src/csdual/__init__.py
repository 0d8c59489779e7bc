"""Discrete Chern-Simons flatness and dual variational tools on su(2)-valued box grids."""

from .grid_fields import BoxGrid, CoeffField
from .g_pointwise import GParams
from .report import RunReport

__all__ = ["BoxGrid", "CoeffField", "GParams", "RunReport"]
__version__ = "0.1.0"
