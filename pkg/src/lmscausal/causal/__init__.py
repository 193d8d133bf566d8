from .graph import ARROW, CIRCLE, TAIL, CausalGraph, GraphError, KnowledgeTiers, Mark
from .citest import fisher_z_test, mixed_ci_test
from .search import fci, pc_stable
from .sem import SemFit, fit_sem, pag_to_dag

__all__ = [
    "ARROW", "CIRCLE", "TAIL", "CausalGraph", "GraphError", "KnowledgeTiers", "Mark",
    "fisher_z_test", "mixed_ci_test", "pc_stable", "fci", "pag_to_dag", "fit_sem", "SemFit",
]
