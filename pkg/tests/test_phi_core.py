from math import factorial

import numpy as np
import pytest

from opcalc import linalg, phi_core
from opcalc.phi_core import OperatorFamily


def random_family(rng, dim, n, scale=1.0):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = linalg.hermitian(g @ g.conj().T / dim, require_nonneg=True)
    ps = tuple(
        scale * (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
        / np.sqrt(dim)
        for _ in range(n)
    )
    return OperatorFamily(h, ps)


def scalar_family(lam, ps):
    h = linalg.hermitian(np.array([[lam]]), require_nonneg=True)
    return OperatorFamily(h, tuple(np.array([[p]], dtype=complex) for p in ps))


# --- lift structure ---------------------------------------------------------


def test_build_lift_n1_structure():
    lam = 0.9
    fam = scalar_family(lam, [2.0])
    lift = phi_core.build_lift(fam)
    expect_h = np.kron(np.eye(2), np.array([[lam]]))
    expect_p = np.kron(np.array([[0, 0], [1, 0]]), np.array([[2.0]]))
    assert np.allclose(lift.h_part, expect_h)
    assert np.allclose(lift.p_part, expect_p)


def test_build_lift_slot_pattern_one_block_per_row_and_column():
    rng = np.random.default_rng(0)
    fam = random_family(rng, 3, 3)
    lift = phi_core.build_lift(fam)
    blk = (1 << 3) * 3
    occupancy = np.zeros((3, 3), dtype=int)
    for q in range(3):
        for r in range(3):
            block = lift.p_part[q * blk : (q + 1) * blk, r * blk : (r + 1) * blk]
            occupancy[q, r] = int(np.any(block != 0))
    assert np.array_equal(occupancy.sum(axis=0), [1, 1, 1])
    assert np.array_equal(occupancy.sum(axis=1), [1, 1, 1])
    # top-right carries index n, bottom row carries index 1
    assert occupancy[0, 2] == 1 and occupancy[2, 1] == 1


def test_lifted_perturbation_nilpotent_exactly():
    rng = np.random.default_rng(1)
    for n in (1, 2, 3):
        fam = random_family(rng, 2, n)
        p = phi_core.build_lift(fam).p_part
        power = np.linalg.matrix_power(p, n + 1)
        assert np.array_equal(power, np.zeros_like(power))


def test_build_lift_budget_enforced():
    rng = np.random.default_rng(2)
    fam = random_family(rng, 48, 3)  # 3 * 8 * 48 = 1152 ok, 48*3*8... fine
    phi_core.build_lift(fam)
    big = random_family(rng, 200, 3)  # 3 * 8 * 200 = 4800 > 4096
    with pytest.raises(ValueError):
        phi_core.build_lift(big)


# --- evaluators -------------------------------------------------------------


def test_phi_fermionic_n0_is_semigroup():
    rng = np.random.default_rng(3)
    fam = random_family(rng, 4, 0)
    got = phi_core.phi_fermionic(fam, 0.8).value
    assert np.allclose(got, linalg.herm_exp(fam.h, 0.8), atol=1e-13)


def test_phi_zero_time_conventions():
    rng = np.random.default_rng(4)
    fam = random_family(rng, 3, 2)
    assert np.allclose(phi_core.phi_fermionic(fam, 0.0).value, 0.0)
    fam0 = random_family(rng, 3, 0)
    assert np.allclose(phi_core.phi_fermionic(fam0, 0.0).value, np.eye(3))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_scalar_commuting_closed_form(n):
    lam, t = 0.7, 0.8
    ps = [0.5, -1.3, 2.0][:n]
    fam = scalar_family(lam, ps)
    exact = np.prod(ps) * t**n * np.exp(-lam * t) / factorial(n)
    for method, kwargs in (
        (phi_core.phi_fermionic, {}),
        (phi_core.phi_quadrature, {"nodes_per_dim": 16}),
    ):
        got = method(fam, t, **kwargs).value[0, 0]
        assert abs(got - exact) < 1e-10


def test_two_by_two_analytic_case():
    lam, t = 1.3, 0.6
    h = linalg.hermitian(np.diag([0.0, lam]), require_nonneg=True)
    p = np.array([[0, 1], [1, 0]], dtype=complex)
    fam = OperatorFamily(h, (p,))
    expect = (1 - np.exp(-lam * t)) / lam * p
    assert np.abs(phi_core.phi_fermionic(fam, t).value - expect).max() < 1e-10


def test_quadrature_constant_integrand_product_order():
    """H = 0 gives the simplex volume times the ordered product P_1 P_2."""
    rng = np.random.default_rng(5)
    h = linalg.hermitian(np.zeros((3, 3)), require_nonneg=True)
    p1 = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    p2 = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    fam = OperatorFamily(h, (p1, p2))
    t = 0.9
    got = phi_core.phi_quadrature(fam, t, 12).value
    assert np.allclose(got, p1 @ p2 * t**2 / 2, atol=1e-10)
    assert not np.allclose(p1 @ p2, p2 @ p1)  # the order genuinely matters


def test_cross_method_agreement_random():
    rng = np.random.default_rng(6)
    for n in (1, 2, 3):
        fam = random_family(rng, 6, n)
        t = 0.7
        f = phi_core.phi_fermionic(fam, t).value
        q = phi_core.phi_quadrature(fam, t, 32).value
        o = phi_core.phi_ode(fam, t, 2048).value
        scale = np.linalg.norm(f)
        assert np.linalg.norm(f - q) / scale < 1e-8
        assert np.linalg.norm(f - o) / scale < 1e-6


def test_ode_second_order_convergence():
    rng = np.random.default_rng(7)
    fam = random_family(rng, 4, 2)
    t = 0.8
    ref = phi_core.phi_fermionic(fam, t).value
    e1 = np.linalg.norm(phi_core.phi_ode(fam, t, 64).value - ref)
    e2 = np.linalg.norm(phi_core.phi_ode(fam, t, 128).value - ref)
    assert 3.0 < e1 / e2 < 5.0


def test_ode_time_zero_suffix_conventions():
    rng = np.random.default_rng(8)
    fam = random_family(rng, 3, 1)
    with pytest.raises(ValueError):
        phi_core.phi_ode(fam, 0.0, 64)
    with pytest.raises(ValueError):
        phi_core.phi_ode(fam, 0.5, 8)


def test_adjoint_symmetry_reversed_family():
    """Phi_t(P_1,...,P_n)^* equals Phi_t(P_n,...,P_1) for Hermitian data."""
    rng = np.random.default_rng(9)
    g = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    h = linalg.hermitian(g @ g.conj().T / 5, require_nonneg=True)
    ps = []
    for _ in range(3):
        m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        ps.append(0.5 * (m + m.conj().T))
    fam = OperatorFamily(h, tuple(ps))
    rev = OperatorFamily(h, tuple(ps[::-1]))
    a = phi_core.phi_fermionic(fam, 0.6).value
    b = phi_core.phi_fermionic(rev, 0.6).value
    assert np.linalg.norm(a.conj().T - b) < 1e-10


def test_continuity_at_zero_dominated_by_bound():
    rng = np.random.default_rng(10)
    fam = random_family(rng, 4, 2)
    prev = None
    for t in (0.2, 0.1, 0.05, 0.025):
        lhs, rhs, holds = phi_core.norm_bound_check(fam, t)
        assert holds
        if prev is not None:
            assert lhs < prev
        prev = lhs
    assert prev < 0.1 * phi_core.norm_bound_check(fam, 1.0)[0] + 1e-12


# --- simplex constant -------------------------------------------------------


def test_simplex_constant_examples():
    assert phi_core.simplex_constant([0.5]) == pytest.approx(2.0, abs=1e-12)
    for n in (1, 2, 3):
        assert phi_core.simplex_constant([1e-13] * n) == pytest.approx(
            1.0 / factorial(n), rel=1e-9
        )
    with pytest.raises(ValueError):
        phi_core.simplex_constant([1.2])


def test_simplex_constant_against_mc_oracle():
    for exps in ((0.5, 0.5), (0.3, 0.7), (0.4, 0.2, 0.6)):
        closed = phi_core.simplex_constant(exps)
        mc, se = phi_core.simplex_constant_mc(exps, samples=400000, seed=11)
        assert abs(mc - closed) <= 3.0 * se


# --- bounds and checks ------------------------------------------------------


def test_norm_bound_check_trivial_cases():
    rng = np.random.default_rng(12)
    h = linalg.hermitian(np.eye(3), require_nonneg=True)
    zero_fam = OperatorFamily(h, (np.zeros((3, 3)),))
    lhs, rhs, holds = phi_core.norm_bound_check(zero_fam, 0.7)
    assert holds and lhs <= 1e-300 and rhs == 0.0
    fam = random_family(rng, 3, 2)
    lhs, rhs, holds = phi_core.norm_bound_check(fam, 0.0)
    assert holds and lhs == 0.0
    fam6 = random_family(rng, 6, 2)
    assert phi_core.norm_bound_check(fam6, 1.0)[2]


def test_nilpotency_check_contrast():
    rng = np.random.default_rng(13)
    fam = random_family(rng, 2, 2)
    vanish = phi_core.nilpotency_check(fam, 0.7, 3)
    assert vanish <= 1e-10
    nonzero = phi_core.nilpotency_check(fam, 0.7, 2)
    assert nonzero > 1e-6


def test_derivative_check_empty_family():
    """No perturbations: the identity reduces to d/dt e^{-tH} = -H e^{-tH}."""
    rng = np.random.default_rng(14)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h = linalg.hermitian(g @ g.conj().T / 4, require_nonneg=True)
    fam = OperatorFamily(h)
    r1 = phi_core.derivative_check(fam, 0.5, 0.04)
    r2 = phi_core.derivative_check(fam, 0.5, 0.02)
    assert 3.0 < r1 / r2 < 5.0


def test_derivative_check_scalar_closed_form():
    lam, p, t = 1.1, 0.8, 0.5
    fam = scalar_family(lam, [p])
    # d/dt (p t e^{-lam t}) = p e^{-lam t} - lam p t e^{-lam t}
    res = phi_core.derivative_check(fam, t, 1e-3)
    assert res < 1e-5


def test_dyson_partial_sum_properties():
    rng = np.random.default_rng(15)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h = linalg.hermitian(g @ g.conj().T / 4, require_nonneg=True)
    # P = 0: approx equals the unperturbed semigroup for every order
    zero = phi_core.dyson_partial_sum(h, np.zeros((4, 4)), 0.4, 3)
    assert np.allclose(zero.approx, zero.true_value, atol=1e-12)
    # generic: error decreases monotonically in the order at small t
    p = 0.6 * (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    errors = [phi_core.dyson_partial_sum(h, p, 0.4, order).error for order in (1, 2, 3, 4)]
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert all(phi_core.dyson_partial_sum(h, p, 0.4, order).holds for order in (1, 3))


def test_dyson_scalar_exponential_series():
    p, t = 0.7, 0.5
    h = linalg.hermitian(np.zeros((1, 1)), require_nonneg=True)
    res = phi_core.dyson_partial_sum(h, np.array([[p]]), t, 6)
    series = sum((-p * t) ** k / factorial(k) for k in range(7))
    assert res.approx[0, 0] == pytest.approx(series, abs=1e-12)
    assert res.true_value[0, 0] == pytest.approx(np.exp(-p * t), abs=1e-12)
