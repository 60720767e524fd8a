import numpy as np
import pytest

from illposed.discretize import (
    DiscreteSystem,
    SchemeKind,
    apply_adjoint,
    build_system,
    dump_matrix,
    estimate_epsilon,
    load_matrix,
    project_data,
)
from illposed.linalg import NumericalError
from illposed.problems import Domain, Kernel, get_problem
from illposed.quadrature import aligned_rule, composite_trapezoid, gauss_legendre

UNIT = Domain(0.0, 1.0)


def constant_kernel():
    return Kernel(lambda s, t: np.ones_like(np.broadcast_arrays(s, t)[0]), UNIT)


def test_scheme_parsing():
    assert SchemeKind.parse("ortho") is SchemeKind.ORTHO_PC
    assert SchemeKind.parse("Interpolatory") is SchemeKind.INTERPOLATORY
    assert SchemeKind.parse(SchemeKind.COLLOCATION) is SchemeKind.COLLOCATION
    with pytest.raises(ValueError):
        SchemeKind.parse("galerkin")


def test_collocation_constant_kernel_single_node():
    # hand computation: a_11 = w_1 * integral k(t_1, t)^2 dt = 1
    system = build_system(constant_kernel(), "collocation", 1)
    assert system.rule.nodes == pytest.approx([0.5])
    assert system.rule.weights == pytest.approx([1.0])
    assert system.matrix == pytest.approx(np.array([[1.0]]))


def test_hat_gram_closed_form():
    # n=3 hats on [0,1], h=1/2: diagonal (h/3, 2h/3, h/3), off-diagonal h/6
    system = build_system(constant_kernel(), "interpolatory", 3)
    gram = system.space.matrix
    assert np.diag(gram) == pytest.approx([1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0])
    assert gram[0, 1] == pytest.approx(1.0 / 12.0)
    assert gram[1, 2] == pytest.approx(1.0 / 12.0)
    assert gram[0, 2] == 0.0


def test_separable_kernel_has_numerical_rank_one():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 16)
    s = np.linalg.svd(system.sym_matrix, compute_uv=False)
    assert s[1] <= 1e-8 * s[0]


def test_inner_rule_must_be_fine_enough():
    with pytest.raises(ValueError):
        build_system(constant_kernel(), "collocation", 8,
                     inner_rule=gauss_legendre(16, UNIT))


def test_nonfinite_kernel_sample_rejected():
    kernel = constant_kernel()
    kernel.evaluator = lambda s, t: np.full_like(np.broadcast_arrays(s, t)[0], np.inf)
    with pytest.raises(NumericalError):
        build_system(kernel, "collocation", 4)


def test_build_argument_validation():
    kernel = constant_kernel()
    with pytest.raises(ValueError):
        build_system(kernel, "interpolatory", 1)
    with pytest.raises(ValueError):
        build_system(kernel, "ortho", 4, outer_rule=gauss_legendre(4, UNIT))
    with pytest.raises(ValueError):
        build_system(kernel, "collocation", 4, outer_rule=gauss_legendre(5, UNIT))


@pytest.mark.parametrize("scheme", ["collocation", "interpolatory", "ortho-pc"])
@pytest.mark.parametrize("n", [2, 4, 8, 16, 32])
def test_metric_symmetry_and_psd(scheme, n):
    # the data-space metric times the matrix must be symmetric PSD; checked
    # against numpy as the independent oracle
    prob = get_problem("green-m1")
    system = build_system(prob.kernel, scheme, n)
    metric_a = system.space.metric_dense() @ system.matrix
    scale = np.max(np.abs(metric_a))
    assert np.max(np.abs(metric_a - metric_a.T)) <= 1e-8 * scale
    eigvals = np.linalg.eigvalsh(0.5 * (system.sym_matrix + system.sym_matrix.T))
    assert eigvals[0] >= -1e-8 * eigvals[-1]


def test_sigma_min_matches_symmetrized_svd():
    # brute-force oracle: smallest positive singular value of the
    # w-symmetrized matrix via LAPACK
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    s = np.linalg.svd(system.sym_matrix, compute_uv=False)
    positive = s[s > 1e-10 * s[0]]
    assert system.sigma_min**2 == pytest.approx(positive[-1], rel=1e-10)


# ---------------------------------------------------------------------------
# projection and adjoint


def test_project_data_collocation_point_values():
    rule = composite_trapezoid(3, UNIT)
    system = build_system(constant_kernel(), "collocation", 3, outer_rule=rule)
    coords = project_data(system, lambda t: np.asarray(t) ** 2)
    assert coords == pytest.approx([0.0, 0.25, 1.0])


def test_project_data_zero_function():
    system = build_system(constant_kernel(), "collocation", 4)
    assert project_data(system, lambda t: 0.0 * np.asarray(t)) == pytest.approx(np.zeros(4))


def test_project_data_cell_averages():
    system = build_system(constant_kernel(), "ortho-pc", 2)
    coords = project_data(system, lambda t: np.asarray(t))
    assert coords == pytest.approx([0.25, 0.75])


def test_apply_adjoint_constant_kernel():
    system = build_system(constant_kernel(), "collocation", 1)
    fn = apply_adjoint(system, [3.5])
    s = np.linspace(0.0, 1.0, 7)
    assert fn(s) == pytest.approx(np.full(7, 3.5))
    assert fn(0.25) == pytest.approx(3.5)


def test_apply_adjoint_zero_vector():
    system = build_system(constant_kernel(), "ortho-pc", 4)
    fn = apply_adjoint(system, np.zeros(4))
    assert fn(np.linspace(0, 1, 9)) == pytest.approx(np.zeros(9))


@pytest.mark.parametrize("pid", ["rank1-sine", "green-m1"])
@pytest.mark.parametrize("scheme", ["collocation", "interpolatory", "ortho-pc"])
def test_adjoint_identity(pid, scheme):
    # <T_n x, v>_w == <x, T_n* v>_L2 for a random degree-5 polynomial and
    # random coordinates; the L2 side is measured on a rule aligned with the
    # scheme grid so kinked kernels do not limit the identity
    prob = get_problem(pid)
    system = build_system(prob.kernel, scheme, 8)
    rng = np.random.default_rng(42)
    coeffs = rng.standard_normal(6)
    poly = lambda t: np.polynomial.polynomial.polyval(np.asarray(t), coeffs)
    v = rng.standard_normal(8)

    inner = system.inner_rule
    tnx = system.slice_values(inner.nodes) @ (inner.weights * poly(inner.nodes))
    lhs = system.space.inner(tnx, v)

    ref = aligned_rule(system.grid_knots(), 256)
    adj = apply_adjoint(system, v)
    rhs = float(np.sum(ref.weights * poly(ref.nodes) * adj(ref.nodes)))
    assert abs(lhs - rhs) <= 1e-8 * (1.0 + abs(lhs))


# ---------------------------------------------------------------------------
# epsilon estimation


def test_epsilon_smooth_kernel_tiny():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 32)
    assert estimate_epsilon(system) <= 1e-6


def test_epsilon_zero_kernel():
    kernel = Kernel(lambda s, t: 0.0 * np.broadcast_arrays(s, t)[0], UNIT)
    system = build_system(kernel, "collocation", 4)
    assert system.sigma_min == 0.0
    assert estimate_epsilon(system) == 0.0


def test_epsilon_green_trapezoid_collocation_decreases():
    prob = get_problem("green-m1")
    values = []
    for n in (8, 16, 32):
        rule = composite_trapezoid(n, UNIT)
        system = build_system(prob.kernel, "collocation", n, outer_rule=rule)
        values.append(estimate_epsilon(system))
    assert values[0] > values[1] > values[2]


def test_epsilon_requires_fine_reference():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    with pytest.raises(ValueError):
        estimate_epsilon(system, gauss_legendre(16, UNIT))


def test_epsilon_monotone_trend_all_schemes(catalog, grid_systems):
    # halving the mesh may hit the floating-point floor for analytic kernels
    # under Gauss collocation, hence the absolute allowance
    floor = 1e-12
    for pid, problem in catalog.items():
        for scheme in ("collocation", "interpolatory", "ortho-pc"):
            eps = {n: grid_systems[pid, scheme, n].epsilon_n for n in (8, 16, 32)}
            big = build_system(problem.kernel, scheme, 64)
            eps[64] = estimate_epsilon(big)
            for n in (8, 16, 32):
                assert eps[2 * n] <= eps[n] + floor, (pid, scheme, n, eps)


def test_collocation_normal_operator_is_nystrom_composition():
    # <T_n x, T_n x>_w equals <x, F_n T x>_L2 where F_n samples the kernel
    # at the collocation nodes with the rule weights
    prob = get_problem("green-m1")
    system = build_system(prob.kernel, "collocation", 8)
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(6)
    poly = lambda t: np.polynomial.polynomial.polyval(np.asarray(t), coeffs)

    inner = system.inner_rule
    tnx = system.slice_values(inner.nodes) @ (inner.weights * poly(inner.nodes))
    lhs = system.space.inner(tnx, tnx)

    ref = aligned_rule(system.grid_knots(), 512)
    fnt = system.slice_values(ref.nodes).T @ (system.rule.weights * tnx)
    rhs = float(np.sum(ref.weights * poly(ref.nodes) * fnt))
    assert abs(lhs - rhs) <= 1e-8 * (1.0 + abs(lhs))


def test_epsilon_cache_write_once():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    value = estimate_epsilon(system)
    assert system.cache_epsilon(value) == value  # idempotent
    with pytest.raises(NumericalError):
        system.cache_epsilon(value + 1.0)


# ---------------------------------------------------------------------------
# matrix dump


def test_matrix_dump_roundtrip(tmp_path):
    matrix = np.array([[1.0, -2.5e-17], [3.0, 4.0]])
    path = tmp_path / "dump.csv"
    dump_matrix(matrix, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "2,2"
    assert np.array_equal(load_matrix(path), matrix)


@pytest.mark.parametrize("content", [
    "",
    "2,2\n1,2\n3\n",
    "2,2\n1,2\n3,abc\n",
    "3,2\n1,2\n3,4\n",
    "2,2\n1,2\n3,inf\n",
])
def test_matrix_dump_corruption_detected(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(NumericalError):
        load_matrix(path)
