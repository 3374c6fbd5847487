"""Distributed time-varying optimization via unbiased extremum seeking."""

from .costs import ConvexityBounds, CostModel, CustomCost, QuadSinSq, ShiftedQuadratic
from .dynamics import EsConfig, GrowthFn, SwarmState, make_averaged_rhs, make_rhs
from .graph import Digraph, laplacian, preset
from .integrate import StepPolicy, Trajectory, simulate
from .lmi import LmiCertificate, Rates, check_certificate, search_certificate, sym_eig
from .metrics import analyze, averaging_gap
from .scenario import load

__all__ = [
    "ConvexityBounds",
    "CostModel",
    "CustomCost",
    "Digraph",
    "EsConfig",
    "GrowthFn",
    "QuadSinSq",
    "ShiftedQuadratic",
    "StepPolicy",
    "SwarmState",
    "Trajectory",
    "LmiCertificate",
    "Rates",
    "analyze",
    "averaging_gap",
    "check_certificate",
    "laplacian",
    "load",
    "make_averaged_rhs",
    "make_rhs",
    "preset",
    "search_certificate",
    "simulate",
    "sym_eig",
]
