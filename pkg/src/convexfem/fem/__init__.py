from .quadrature import QuadRule, quadrature_rule
from .spaces import (DiscreteField, FunctionSpace, QuadratureSpace, UnsupportedError, function_space,
                     interpolate, locate, vector_space)
from .expr import (AffineFieldExpr, Term, as_expr, avg, component, div, eval_points, grad, hessian, jump,
                   normal_grad_jump, partial, stack, sym_grad, trace, value)
from .assembly import assemble_linear_form, assemble_weak_block, cell_operator, default_rule, eval_expr_rows
