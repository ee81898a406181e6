from .fitters import (FitError, InterpretResult, fit_addsub, fit_bevel, fit_extrude,
                      fit_sweep, interpret, line_search_offset, select_base_face)
from .providers import HeuristicProvider, OracleProvider, SegmentationProvider, make_provider

__all__ = [
    "FitError", "InterpretResult", "fit_addsub", "fit_bevel", "fit_extrude", "fit_sweep",
    "interpret", "line_search_offset", "select_base_face",
    "HeuristicProvider", "OracleProvider", "SegmentationProvider", "make_provider",
]
