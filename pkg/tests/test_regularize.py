import numpy as np
import pytest

from illposed.analysis import l2_error
from illposed.discretize import build_system, estimate_epsilon, project_data
from illposed.linalg import WeightedSpace
from illposed.problems import Domain, Kernel, get_problem, reference_rule
from illposed.regularize import (
    InconsistentDataError,
    NoiseSpec,
    add_noise,
    choose_alpha,
    dense_reference_solver,
    log_phi,
    min_norm_solution,
    phi_eval,
    phi_from_source,
    power_phi,
    tikhonov_continuous_reference,
    tikhonov_discrete,
    tikhonov_spectral_reference,
)

UNIT = Domain(0.0, 1.0)
REF = reference_rule(UNIT)


def zero_fn(t):
    return 0.0 * np.asarray(t)


# ---------------------------------------------------------------------------
# minimum-norm solve


def test_min_norm_zero_data():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    rec = min_norm_solution(system, np.zeros(8))
    assert rec.alpha_used == 0.0
    assert l2_error(rec.function, zero_fn, REF) == 0.0


def test_min_norm_rank1_recovers_solution():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 16)
    rec = min_norm_solution(system, project_data(system, prob.y))
    assert l2_error(prob.x_dagger, rec.function, REF) <= 1e-6


def test_min_norm_is_orthogonal_projection():
    # the minimum-norm solution is the projection of the true solution, so
    # the error is orthogonal to it and the solution is never longer
    prob = get_problem("green-m1")
    system = build_system(prob.kernel, "collocation", 32)
    rec = min_norm_solution(system, project_data(system, prob.y))
    diff = lambda t: np.asarray(prob.x_dagger(t)) - np.asarray(rec.function(t))
    inner = float(np.sum(REF.weights * diff(REF.nodes) * np.asarray(rec.function(REF.nodes))))
    norm_x = REF.norm(np.asarray(prob.x_dagger(REF.nodes)))
    norm_rec = REF.norm(np.asarray(rec.function(REF.nodes)))
    assert abs(inner) <= 1e-6 * norm_x**2
    assert norm_rec <= norm_x + 1e-6


def test_min_norm_rejects_out_of_range_data():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    bad = np.random.default_rng(0).standard_normal(8)
    with pytest.raises(InconsistentDataError):
        min_norm_solution(system, bad)
    # with an allowance covering the out-of-range mass it goes through
    allowance = system.space.norm(bad) * 2.0
    rec = min_norm_solution(system, bad, residual_allowance=allowance)
    assert np.all(np.isfinite(rec.coordinates))


# ---------------------------------------------------------------------------
# discrete Tikhonov


def test_tikhonov_scalar_oracle():
    # k = 1 on one Gauss node: (1 + alpha) v = beta, reconstruction is the
    # constant function v
    kernel = Kernel(lambda s, t: np.ones_like(np.broadcast_arrays(s, t)[0]), UNIT)
    system = build_system(kernel, "collocation", 1)
    beta, alpha = 2.5, 0.75
    rec = tikhonov_discrete(system, [beta], alpha)
    expected = beta / (1.0 + alpha)
    assert rec.function(np.array([0.1, 0.9])) == pytest.approx([expected, expected])
    assert rec.alpha_used == alpha


def test_tikhonov_zero_data():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    for alpha in (1e-6, 1.0, 1e6):
        rec = tikhonov_discrete(system, np.zeros(8), alpha)
        assert l2_error(rec.function, zero_fn, REF) == 0.0


def test_tikhonov_large_shift_vanishes():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 16)
    rec = tikhonov_discrete(system, project_data(system, prob.y), 1e6)
    assert l2_error(rec.function, zero_fn, REF) <= 1e-3


def test_tikhonov_converges_to_min_norm():
    # full-rank system: the shifted solutions approach the pseudo-inverse
    # solution monotonically as the shift vanishes
    prob = get_problem("green-m1")
    system = build_system(prob.kernel, "collocation", 8)
    y_n = project_data(system, prob.y)
    target = min_norm_solution(system, y_n)
    dists = [l2_error(tikhonov_discrete(system, y_n, alpha).function,
                      target.function, REF)
             for alpha in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert all(b < a for a, b in zip(dists, dists[1:]))


# ---------------------------------------------------------------------------
# continuous reference


def test_continuous_reference_rank1_closed_form():
    prob = get_problem("rank1-sine")
    x_alpha = tikhonov_continuous_reference(prob, REF, 0.25)
    assert l2_error(prob.x_dagger, x_alpha, REF) == pytest.approx(0.2, abs=1e-10)


def test_spectral_reference_small_alpha_limit():
    prob = get_problem("rank1-sine")
    x_alpha = tikhonov_spectral_reference(prob, REF, 1e-10)
    assert l2_error(prob.x_dagger, x_alpha, REF) <= 1e-8


def test_tikhonov_residual_monotone_in_alpha():
    prob = get_problem("rank3-decay")
    exp = prob.svd
    residuals = []
    for alpha in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
        coeffs = exp.coefficients(prob.y, REF, side="v")
        filtered = coeffs * exp.sigmas / (exp.sigmas**2 + alpha)
        tx = exp.synthesize(filtered * exp.sigmas, side="v")
        residuals.append(l2_error(tx, prob.y, REF))
    assert all(b < a for a, b in zip(residuals, residuals[1:]))


@pytest.mark.parametrize("pid", ["rank1-sine", "rank3-decay", "green-m1"])
def test_two_path_agreement(pid):
    # spectral filter vs dense grid solve of the regularized normal equation
    prob = get_problem(pid)
    solver = dense_reference_solver(prob, REF)
    for alpha in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        spectral = tikhonov_spectral_reference(prob, REF, alpha)
        assert l2_error(spectral, solver(alpha), REF) <= 1e-7


# ---------------------------------------------------------------------------
# source functions and the a-priori rule


def test_phi_eval_power():
    assert phi_eval(power_phi(0.5), 0.04) == pytest.approx(0.2)
    assert phi_eval(power_phi(1.0), 0.37) == pytest.approx(0.37)


def test_phi_eval_log():
    assert phi_eval(log_phi(1.0), np.exp(-2.0)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        phi_eval(log_phi(1.0), 1.0)
    with pytest.raises(ValueError):
        phi_eval(power_phi(0.5), 0.0)


def test_phi_constructors_validate():
    with pytest.raises(ValueError):
        power_phi(0.0)
    with pytest.raises(ValueError):
        power_phi(1.5)
    with pytest.raises(ValueError):
        log_phi(-1.0)


@pytest.mark.parametrize("nu", [0.25, 0.5, 1.0])
def test_source_condition_sup_power(nu):
    # sup over the spectrum grid of alpha phi(lam) / (lam + alpha) stays
    # below c0 phi(alpha) with c0 = 1 for the power family
    phi = power_phi(nu)
    lam = np.geomspace(1e-12, 1e2, 200)
    for alpha in np.geomspace(1e-6, 1e-1, 25):
        ratio = np.max(alpha * lam**nu / (lam + alpha)) / phi_eval(phi, alpha)
        assert ratio <= phi.c0 + 1e-12


def test_source_condition_sup_log():
    phi = log_phi(1.5)
    lam = np.geomspace(1e-12, 1e-1, 200)
    phi_lam = np.array([phi_eval(phi, x) for x in lam])
    for alpha in np.geomspace(1e-10, 1e-2, 20):
        ratio = np.max(alpha * phi_lam / (lam + alpha)) / phi_eval(phi, alpha)
        assert ratio <= phi.c0 + 1e-12


def test_source_bound_on_green():
    # ||x - x_alpha|| <= c0 ||u|| phi(alpha) for the smoothness certificate
    # the problem carries
    prob = get_problem("green-m1")
    phi = phi_from_source(prob.source_repr)
    for alpha in np.geomspace(1e-5, 1e-1, 9):
        x_alpha = tikhonov_continuous_reference(prob, REF, alpha)
        lhs = l2_error(prob.x_dagger, x_alpha, REF)
        rhs = phi.c0 * prob.source_repr.u_norm * phi_eval(phi, alpha)
        assert lhs <= rhs + 1e-6 * (1.0 + rhs)


def test_choose_alpha():
    assert choose_alpha(1e-3) == 1e-3
    with pytest.raises(ValueError):
        choose_alpha(0.0)
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "collocation", 8)
    eps = estimate_epsilon(system)
    assert choose_alpha(eps) == eps


# ---------------------------------------------------------------------------
# noise model


def test_add_noise_zero_delta():
    space = WeightedSpace(weights=np.full(5, 0.2))
    y = np.arange(5.0)
    assert np.array_equal(add_noise(y, space, NoiseSpec(0.0, 3)), y)


@pytest.mark.parametrize("delta", [1e-8, 1e-3, 2.0])
def test_add_noise_exact_norm(delta):
    space = WeightedSpace(weights=np.random.default_rng(5).uniform(0.1, 1.0, 8))
    y = np.random.default_rng(6).standard_normal(8)
    noisy = add_noise(y, space, NoiseSpec(delta, 13))
    assert space.norm(noisy - y) == pytest.approx(delta, rel=1e-14)


def test_add_noise_deterministic():
    space = WeightedSpace(weights=np.ones(6))
    y = np.zeros(6)
    a = add_noise(y, space, NoiseSpec(0.5, 21))
    b = add_noise(y, space, NoiseSpec(0.5, 21))
    c = add_noise(y, space, NoiseSpec(0.5, 22))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_add_noise_gram_metric():
    prob = get_problem("rank1-sine")
    system = build_system(prob.kernel, "interpolatory", 6)
    y = project_data(system, prob.y)
    noisy = add_noise(y, system.space, NoiseSpec(1e-2, 0))
    assert system.space.norm(noisy - y) == pytest.approx(1e-2, rel=1e-13)


@pytest.mark.parametrize("alpha", [1e-2, 1e-4])
@pytest.mark.parametrize("delta", [1e-2, 1e-4])
def test_noise_stability_bound(alpha, delta):
    # ||x_{alpha,n} - x~_{alpha,n}|| <= ||y - y~|| / sqrt(alpha)
    prob = get_problem("green-m1")
    system = build_system(prob.kernel, "collocation", 16)
    y_n = project_data(system, prob.y)
    y_tilde = add_noise(y_n, system.space, NoiseSpec(delta, 11))
    measured_delta = system.space.norm(y_tilde - y_n)
    rec = tikhonov_discrete(system, y_n, alpha)
    rec_noisy = tikhonov_discrete(system, y_tilde, alpha)
    gap = l2_error(rec.function, rec_noisy.function, REF)
    assert gap <= measured_delta / np.sqrt(alpha) + 1e-8
