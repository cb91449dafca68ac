"""Interior-point solver for linear and second-order cone programs."""
from .canonical import CanonicalProgram, InvalidProgramError, canonicalize, recover
from .solver import STATUSES, IpmResult, IpmSettings, kkt_residuals, solve

__all__ = ["CanonicalProgram", "InvalidProgramError", "canonicalize", "recover", "STATUSES", "IpmResult",
           "IpmSettings", "kkt_residuals", "solve"]
