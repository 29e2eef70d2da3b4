"""Ground-state solvers for the discretised model."""
from __future__ import annotations

from ..errors import ParameterError
from .bruteforce import solve_bruteforce
from .chain_dp import solve_chain_dp
from .coord_descent import solve_coordinate_descent
from .graphcut import solve_graphcut
from .maxflow import FlowNetwork, FlowResult, maxflow
from .problem import LabelProblem, SolveResult, build_problem
from .transfer import solve_transfer

SOLVERS = {
    "bruteforce": solve_bruteforce,
    "chain_dp": solve_chain_dp,
    "graphcut": solve_graphcut,
    "coord_descent": solve_coordinate_descent,
    "transfer": solve_transfer,
}


def get_solver(name: str):
    try:
        return SOLVERS[name]
    except KeyError:
        raise ParameterError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None


def solve(field, solver: str = "auto", tau=None, **opts) -> SolveResult:
    """Dispatch to a solver; "auto" picks chain_dp for d = 1, graphcut for n = 1,
    coordinate descent otherwise."""
    if solver == "auto":
        if field.domain.d == 1 and field.domain.is_box:
            solver = "chain_dp"
        elif field.n == 1:
            solver = "graphcut"
        else:
            solver = "coord_descent"
    return get_solver(solver)(field, tau=tau, **opts)


__all__ = ["FlowNetwork", "FlowResult", "LabelProblem", "SOLVERS", "SolveResult",
           "build_problem", "get_solver", "maxflow", "solve", "solve_bruteforce",
           "solve_chain_dp", "solve_coordinate_descent", "solve_graphcut", "solve_transfer"]
