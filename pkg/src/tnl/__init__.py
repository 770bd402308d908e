"""Exact and numerical laboratory for non-unique transport by dyadic vortex fields."""
from tnl.dyadic import CellField, DyadicSquare, Window, cell_averages, cell_of, checkerboard
from tnl.fields import FieldSpec, eval_field, eval_u, eval_w, truncate_space, truncate_time
from tnl.exact import BranchSolution, apply_stage, branch_snapshot, evolve_exact

__version__ = "0.1.0"
