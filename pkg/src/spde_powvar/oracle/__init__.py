"""Independent numerical reference for the closed-form kernels."""

from .quadrature import INTEGRAND_IDS, QuadResult, QuadratureSpec, quad_cov, quad_gamma_half
from .verify import FormulaCheck, VerificationReport, verify_closed_forms

__all__ = [
    "INTEGRAND_IDS",
    "QuadResult",
    "QuadratureSpec",
    "quad_cov",
    "quad_gamma_half",
    "FormulaCheck",
    "VerificationReport",
    "verify_closed_forms",
]
