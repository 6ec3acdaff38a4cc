"""Generalized Cole-Hopf linearisation of Burgers-type PDEs and convective ODEs.

The transform ``psi = P + Q * phi'/phi`` maps solutions of a linear equation
(the variable-coefficient heat equation, or ``phi'' = U phi``) onto solutions
of a nonlinear convective equation.  The package derives ``(P, Q)`` and the
induced coefficients symbolically, solves the linear partner numerically,
applies the transform and checks the nonlinear residual independently.
"""

__version__ = "0.1.0"

from .burgers import (
    BurgersProblem,
    TransformPair,
    compatibility_residual,
    derive_coefficients,
    derive_transform,
    h_family,
    h_ode_residual,
    implicit_w,
    is_compatible,
    m_family_implicit,
    m_family_linear_sq,
    m_ode_residual,
)
from .errors import (
    ColeHopfError,
    DegenerateError,
    EvaluationError,
    ParseError,
    SolverError,
    StageError,
    UnboundParameterError,
)
from .expr import Expr, compile_expr, differentiate, evaluate, parse, substitute, to_text
from .hopf import TransformedField, apply_transform
from .linsolve import Grid1D, LinearField, solve_heat, solve_linear_ode2
from .ode import (
    LinearPotential,
    OdeProblem,
    UOde,
    forward_derive,
    reduce_v1,
    reverse_synthesize,
    solve_u_ode,
)
from .verify import ResidualReport, ode_residual, pde_residual, roundtrip_burgers, roundtrip_ode

__all__ = [
    "BurgersProblem", "ColeHopfError", "DegenerateError", "EvaluationError", "Expr", "Grid1D",
    "LinearField", "LinearPotential", "OdeProblem", "ParseError", "ResidualReport", "SolverError",
    "StageError", "TransformPair", "TransformedField", "UOde", "UnboundParameterError",
    "apply_transform", "compatibility_residual", "compile_expr", "derive_coefficients",
    "derive_transform", "differentiate", "evaluate", "forward_derive", "h_family", "h_ode_residual",
    "implicit_w", "is_compatible", "m_family_implicit", "m_family_linear_sq", "m_ode_residual",
    "ode_residual", "parse", "pde_residual", "reduce_v1", "reverse_synthesize", "roundtrip_burgers",
    "roundtrip_ode", "solve_heat", "solve_linear_ode2", "solve_u_ode", "substitute", "to_text",
]
