"""Linear-programming laboratory for the quadratic assignment problem.

Build the layered-graph LP model of a QAP instance, solve it with the
built-in revised simplex, and audit the optimum against brute force and a
decomposition into perfect matchings.
"""

from .analysis import audit, decompose, find_layered_path, flow_value, support_graph, vertex_is_integral
from .indexer import VariableSpace, build_space, growth_report, pair_admissible, triple_admissible
from .instance import (
    Matching,
    QapInstance,
    all_matchings,
    brute_force_optimum,
    evaluate,
    generate_random,
    handling_cost,
    make_uniform,
    read_instance,
    write_instance,
)
from .model import SparseModel, build_model, embed, objective_value
from .mps import export_mps, read_mps
from .simplex import LpSolution, SolverOptions, external_cross_check, solve, verify_solution

__version__ = "0.1.0"
