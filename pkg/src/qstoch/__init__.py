"""Executable calculus for quantum stochastic generators.

Ito/Stratonovich coefficient conversion with complex gauge, unitarity and
flow-structure checks, generator addition, and numerical experiments
separating the Ito-Dyson, exponentiated-Dyson and Stratonovich-Dyson
time-ordered exponentials.
"""
from .coeffs import (CoefficientBlock, ConversionReport, GaugeParameter, HPTriple,
                     add_generators, check_ito_unitarity, check_strat_selfadjoint,
                     composite_w, hp_from_ito, ito_from_hp, ito_to_strat,
                     neumann_resolvent, strat_to_ito)
from .flow import FlowGenerator, differential_oracle, eh_generator, structure_residual
from .itoalg import (OperatorGenerator, SuperGenerator, exp_generator, qv_bracket,
                     qv_product, strat_correction)

__version__ = "0.1.0"

__all__ = [
    "CoefficientBlock", "ConversionReport", "GaugeParameter", "HPTriple",
    "add_generators", "check_ito_unitarity", "check_strat_selfadjoint", "composite_w",
    "hp_from_ito", "ito_from_hp", "ito_to_strat", "neumann_resolvent", "strat_to_ito",
    "FlowGenerator", "differential_oracle", "eh_generator", "structure_residual",
    "OperatorGenerator", "SuperGenerator", "exp_generator", "qv_bracket", "qv_product",
    "strat_correction",
]
