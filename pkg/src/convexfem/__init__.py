"""Convex variational problems on triangular meshes, solved as conic programs."""
from .conic import Cone, ConicRepr, ConvexTerm, Free, NonNeg, Quad, RQuad
from .ipm import IpmResult, IpmSettings, solve
from .mesh import TriMesh, make_mesh, read_mesh, rectangle_mesh, unit_square_mesh, write_mesh
from .problem import BlockProblem, DirichletBC, SolutionBundle
from .program import StandardConicProgram

__version__ = "0.1.0"

__all__ = [
    "BlockProblem", "Cone", "ConicRepr", "ConvexTerm", "DirichletBC", "Free", "IpmResult", "IpmSettings",
    "NonNeg", "Quad", "RQuad", "SolutionBundle", "StandardConicProgram", "TriMesh", "make_mesh", "read_mesh",
    "rectangle_mesh", "solve", "unit_square_mesh", "write_mesh",
]
