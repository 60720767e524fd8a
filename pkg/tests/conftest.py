import pytest

from illposed.discretize import build_system, estimate_epsilon
from illposed.problems import get_problem, problem_catalog

GRID_N = (8, 16, 32)
SCHEMES = ("collocation", "interpolatory", "ortho-pc")


@pytest.fixture(scope="session")
def catalog():
    return {pid: get_problem(pid) for pid in problem_catalog()}


@pytest.fixture(scope="session")
def grid_systems(catalog):
    """All (problem, scheme, n) systems of the verification grid, with
    epsilon estimated once; building these dominates the suite runtime."""
    systems = {}
    for pid, problem in catalog.items():
        for scheme in SCHEMES:
            for n in GRID_N:
                system = build_system(problem.kernel, scheme, n)
                estimate_epsilon(system)
                systems[pid, scheme, n] = system
    return systems
