"""Three independent evaluators of the iterated semigroup integral

    Phi_t(P_1, ..., P_n) = int_{0<=s_1<=...<=s_n<=t}
        e^{-s_1 H} P_1 e^{-(s_2-s_1) H} P_2 ... P_n e^{-(t-s_n) H} ds,

together with the enlarged-space (Fermionic) lift whose single matrix
exponential encodes Phi_t, the simplex norm-bound machinery, and structural
checks (nilpotency of the lifted perturbation, the suffix derivative
recursion, alternating partial sums of the perturbed semigroup).

Conventions fixed here:
  * lift layout is slot-major: row index ((j-1) * 2^n + S) * dim_H + h for
    slot j in 1..n, exterior-algebra bitmask S, and H-coordinate h;
  * the lifted perturbation places theta_hat(n-q+1) (x) P_{n-q+1} in slot-row
    q, slot-column q-1 (row 1 wraps to column n with theta_hat(n) (x) P_n);
  * Phi_t is (-1)^n times the block of exp(-t(H_lift + P_lift)) with rows at
    (slot n, full mask) and columns at (slot n, empty mask).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.special import gammaln

from . import linalg
from .grassmann import theta_hat_matrix
from .linalg import HermitianOperator, herm_exp, op_norm


@dataclass(frozen=True)
class OperatorFamily:
    """Nonnegative Hermitian H with perturbations P_1..P_n and exponents a_j.

    The exponents enter only through norm bounds; they default to 1/2,
    matching the first-order-operator regime where P (H+1)^{-1/2} is
    order zero.
    """

    h: HermitianOperator
    perturbations: tuple = ()
    exponents: tuple = ()

    def __post_init__(self):
        perts = tuple(np.asarray(p, dtype=complex) for p in self.perturbations)
        for p in perts:
            if p.shape != self.h.matrix.shape:
                raise ValueError("every perturbation must share H's dimension")
        exps = tuple(self.exponents) if self.exponents else (0.5,) * len(perts)
        if len(exps) != len(perts):
            raise ValueError("need one exponent per perturbation")
        for a in exps:
            if not 0.0 < a < 1.0:
                raise ValueError(f"exponent {a} outside (0,1)")
        object.__setattr__(self, "perturbations", perts)
        object.__setattr__(self, "exponents", exps)

    @property
    def n(self) -> int:
        return len(self.perturbations)

    @property
    def dim(self) -> int:
        return self.h.dim

    def suffix(self, k: int) -> "OperatorFamily":
        """Family (H, P_{k+1}, ..., P_n) of the last n-k perturbations."""
        return OperatorFamily(self.h, self.perturbations[k:], self.exponents[k:])


@dataclass(frozen=True)
class FermionicLift:
    """Enlarged-space generator H_lift + P_lift in the slot-major layout."""

    n: int
    dim_h: int
    h_part: np.ndarray
    p_part: np.ndarray

    @property
    def dim(self) -> int:
        return self.n * (1 << self.n) * self.dim_h

    @property
    def generator(self) -> np.ndarray:
        return self.h_part + self.p_part

    def block_index(self, slot: int, mask: int) -> int:
        """Row offset of (slot in 1..n, exterior bitmask) in the layout."""
        return ((slot - 1) * (1 << self.n) + mask) * self.dim_h


@dataclass(frozen=True)
class PhiResult:
    value: np.ndarray
    method: str
    t: float
    diagnostics: dict = field(default_factory=dict)


def build_lift(family: OperatorFamily) -> FermionicLift:
    """Assemble the enlarged-space generator for n >= 1."""
    n, dim_h = family.n, family.dim
    if n < 1:
        raise ValueError("lift requires at least one perturbation")
    dim = n * (1 << n) * dim_h
    if dim > linalg.DIMENSION_BUDGET:
        raise ValueError(
            f"lifted dimension {dim} exceeds budget {linalg.DIMENSION_BUDGET}"
        )
    lam = 1 << n
    h_part = np.kron(np.eye(n * lam), family.h.matrix)
    p_part = np.zeros((dim, dim), dtype=complex)
    blk = lam * dim_h

    def place(row_slot: int, col_slot: int, index: int):
        theta = theta_hat_matrix(index, n).entries
        block = np.kron(theta, family.perturbations[index - 1])
        r0 = (row_slot - 1) * blk
        c0 = (col_slot - 1) * blk
        p_part[r0 : r0 + blk, c0 : c0 + blk] = block

    place(1, n, n)
    for q in range(2, n + 1):
        place(q, q - 1, n - q + 1)
    return FermionicLift(n, dim_h, h_part, p_part)


def phi_fermionic(family: OperatorFamily, t: float) -> PhiResult:
    """Phi_t via one exponential of the enlarged-space generator."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if family.n == 0:
        return PhiResult(herm_exp(family.h, t), "fermionic", t, {"lift_dim": family.dim})
    lift = build_lift(family)
    big = linalg.expm(-t * lift.generator)
    n, dim_h = family.n, family.dim
    r0 = lift.block_index(n, (1 << n) - 1)
    c0 = lift.block_index(n, 0)
    value = (-1.0) ** n * big[r0 : r0 + dim_h, c0 : c0 + dim_h]
    return PhiResult(value, "fermionic", t, {"lift_dim": lift.dim})


def _batch_herm_exp(h: HermitianOperator, taus: np.ndarray) -> np.ndarray:
    """Stack of exp(-tau H) for an array of nonnegative times."""
    u = h.eigvecs
    weights = np.exp(-np.multiply.outer(taus, h.eigvals))  # (N, dim)
    return np.einsum("ab,nb,cb->nac", u, weights, u.conj())


def phi_quadrature(family: OperatorFamily, t: float, nodes_per_dim: int = 32) -> PhiResult:
    """Nested Gauss-Legendre evaluation of the iterated integral.

    Integration order is int_0^t ds_n int_0^{s_n} ds_{n-1} ... via the
    recursion K_j(u) = int_0^u K_{j-1}(s) P_j e^{-(u-s) H} ds with
    K_0(u) = e^{-u H}; node sums run in lexicographic order, each level
    reduced with numpy's pairwise summation.  The integrand is smooth in
    finite dimension, so no endpoint singularities arise.
    """
    if t <= 0:
        raise ValueError("quadrature requires t > 0")
    if family.n < 1:
        raise ValueError("quadrature requires n >= 1")
    if nodes_per_dim < 4:
        raise ValueError("need at least 4 nodes per dimension")
    n, dim = family.n, family.dim
    x0, w0 = np.polynomial.legendre.leggauss(nodes_per_dim)

    def level_values(j: int, uppers: np.ndarray) -> np.ndarray:
        """K_j evaluated at each upper limit, shape (len(uppers), dim, dim)."""
        if j == 0:
            return _batch_herm_exp(family.h, uppers)
        # children: Gauss-Legendre nodes of [0, u] for every parent u
        half = uppers[:, None] / 2.0
        nodes = half * (x0[None, :] + 1.0)          # (N, q)
        weights = half * w0[None, :]                # (N, q)
        child_vals = level_values(j - 1, nodes.reshape(-1))
        child_vals = child_vals.reshape(len(uppers), nodes_per_dim, dim, dim)
        gaps = uppers[:, None] - nodes               # u - s >= 0
        decay = _batch_herm_exp(family.h, gaps.reshape(-1))
        decay = decay.reshape(len(uppers), nodes_per_dim, dim, dim)
        p = family.perturbations[j - 1]
        integrand = np.einsum("nqab,bc,nqcd->nqad", child_vals, p, decay)
        return np.einsum("nq,nqad->nad", weights, integrand)

    value = level_values(n, np.array([t]))[0]
    return PhiResult(
        value,
        "quadrature",
        t,
        {"nodes_per_dim": nodes_per_dim, "total_nodes": nodes_per_dim**n},
    )


def phi_ode(family: OperatorFamily, t: float, steps: int = 4096) -> PhiResult:
    """Integrate the coupled suffix system with exact semigroup propagators.

    Each suffix level k obeys Phi' = -H Phi + P_k Phi(suffix), stepped by
    the variation-of-constants midpoint rule
        Phi(s+h) = e^{-hH} Phi(s) + h e^{-(h/2)H} P_k Phi_{s+h/2}(suffix).
    Level k runs on step h / 2^(k-1) so every midpoint suffix value is a
    grid point of the next level; the empty suffix is e^{-sH} exactly.
    Second-order accurate in the step size.
    """
    if t <= 0:
        raise ValueError("ode evaluation requires t > 0")
    if steps < 16:
        raise ValueError("need at least 16 steps")
    n, dim = family.n, family.dim
    if n == 0:
        return PhiResult(herm_exp(family.h, t), "ode", t, {"steps": steps})
    if t / (steps * 2 ** (n - 1)) < 1e-15 * t:
        raise ValueError("step underflow")

    suffix_vals = None  # level k+1 trajectory on its grid
    for k in range(n, 0, -1):
        nsteps = steps * 2 ** (k - 1)
        h = t / nsteps
        e_full = herm_exp(family.h, h)
        e_half = herm_exp(family.h, h / 2.0)
        p = family.perturbations[k - 1]
        vals = np.zeros((nsteps + 1, dim, dim), dtype=complex)
        if k == n:
            # suffix is empty: midpoint values are exact semigroup elements
            mids = _batch_herm_exp(family.h, (np.arange(nsteps) + 0.5) * h)
        cur = np.zeros((dim, dim), dtype=complex)  # Phi_0 = 0 for n >= 1
        for i in range(nsteps):
            mid = mids[i] if k == n else suffix_vals[2 * i + 1]
            cur = e_full @ cur + h * (e_half @ (p @ mid))
            vals[i + 1] = cur
        suffix_vals = vals
    return PhiResult(
        suffix_vals[-1], "ode", t, {"steps": steps, "step_size": t / steps}
    )


def simplex_constant(exponents) -> float:
    """Dirichlet closed form of the singular simplex integral

        int_{sigma_n} (s_2-s_1)^(-a_1) ... (1-s_n)^(-a_n) ds
            = prod_j Gamma(1-a_j) / Gamma(n+1 - sum_j a_j).

    Validated against the sorted-uniform Monte Carlo oracle
    (:func:`simplex_constant_mc`) in the test suite before use.
    """
    exps = tuple(exponents)
    for a in exps:
        if not 0.0 < a < 1.0:
            raise ValueError(f"exponent {a} outside (0,1)")
    n = len(exps)
    if n == 0:
        return 1.0
    log_val = sum(gammaln(1.0 - a) for a in exps) - gammaln(n + 1.0 - sum(exps))
    return float(np.exp(log_val))


def simplex_constant_mc(
    exponents, samples: int = 10**6, seed: int = 0, symmetrize: bool = True
):
    """Monte Carlo oracle for :func:`simplex_constant`.

    Sorted uniforms are uniform on the ordered simplex (volume 1/n!), so the
    integral is E[f] / n!.  The spacings of sorted uniforms are exchangeable,
    so with ``symmetrize`` the integrand is averaged over cyclic assignments
    of the exponents to the n+1 spacings; this is a variance reduction of
    the same sampler, not a different estimator.  Returns (estimate, stderr).
    """
    exps = np.asarray(tuple(exponents), dtype=float)
    n = len(exps)
    if n == 0:
        return 1.0, 0.0
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    chunk = 1 << 17
    done = 0
    exps_padded = np.concatenate([[0.0], exps])  # spacing s_1 carries no factor
    while done < samples:
        m = min(chunk, samples - done)
        s = np.sort(rng.random((m, n)), axis=1)
        # all n+1 spacings: s_1, s_2-s_1, ..., 1-s_n
        gaps = np.concatenate(
            [s[:, :1], np.diff(s, axis=1), 1.0 - s[:, -1:]], axis=1
        )
        if symmetrize:
            f = np.zeros(m)
            for shift in range(n + 1):
                f += np.prod(gaps ** (-np.roll(exps_padded, shift)), axis=1)
            f /= n + 1
        else:
            f = np.prod(gaps ** (-exps_padded), axis=1)
        total += float(np.sum(f))
        total_sq += float(np.sum(f * f))
        done += m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    scale = 1.0 / factorial(n)
    return mean * scale, np.sqrt(var / samples) * scale


def perturbation_constant(family: OperatorFamily) -> float:
    """prod_j ||P_j (H+1)^(-a_j)||."""
    out = 1.0
    for p, a in zip(family.perturbations, family.exponents):
        out *= op_norm(p @ linalg.frac_power_inv(family.h, a))
    return out


def norm_bound_check(family: OperatorFamily, t: float):
    """Check ||Phi_t|| against the simplex bound.

    rhs = prod_j ||P_j (H+1)^(-a_j)|| * simplex_constant * e^{nt} * t^{n - sum a_j}.
    Returns (lhs, rhs, holds).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = family.n
    lhs = op_norm(phi_fermionic(family, t).value)
    power = n - sum(family.exponents)
    t_pow = 0.0 if (t == 0.0 and power > 0) else t**power
    rhs = (
        perturbation_constant(family)
        * simplex_constant(family.exponents)
        * np.exp(n * t)
        * t_pow
    )
    if n == 0:
        rhs = 1.0  # ||e^{-tH}|| <= 1 for H >= 0
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-8) + 1e-300)


def nilpotency_check(family: OperatorFamily, t: float, l: int, nodes_per_dim: int = 4):
    """Norm of the l-fold repeated lifted-perturbation integral.

    Every product of l >= n+1 copies of the lifted perturbation repeats an
    exterior generator, so there the integrand vanishes identically and the
    returned norm measures only the floating-point residue of the assembled
    structure; smaller l give the genuinely nonzero contrast values.
    """
    if l < 1:
        raise ValueError("need at least one factor")
    lift = build_lift(family)
    lifted_family = OperatorFamily(
        linalg.hermitian(lift.h_part, require_nonneg=True),
        (lift.p_part,) * l,
    )
    res = phi_quadrature(lifted_family, t, nodes_per_dim)
    return op_norm(res.value)


def derivative_check(family: OperatorFamily, t: float, h: float) -> float:
    """Residual of the suffix derivative identity at time t.

    Compares the central difference of Phi against
    -H Phi_t(P_1,...,P_n) + P_1 Phi_t(P_2,...,P_n); the second summand is
    P_1 e^{-tH} for n = 1 and absent for n = 0.  O(h^2) by construction.
    """
    if not t > h > 0:
        raise ValueError("need t > h > 0")
    plus = phi_fermionic(family, t + h).value
    minus = phi_fermionic(family, t - h).value
    center = phi_fermionic(family, t).value
    rhs = -family.h.matrix @ center
    if family.n >= 1:
        rhs = rhs + family.perturbations[0] @ phi_fermionic(family.suffix(1), t).value
    return op_norm((plus - minus) / (2 * h) - rhs)


@dataclass(frozen=True)
class DysonResult:
    approx: np.ndarray
    true_value: np.ndarray
    bound: float

    @property
    def error(self) -> float:
        return op_norm(self.approx - self.true_value)

    @property
    def holds(self) -> bool:
        return self.error <= self.bound * (1 + 1e-8) + 1e-300


def dyson_partial_sum(
    h: HermitianOperator, p: np.ndarray, t: float, order: int, a: float = 0.5
) -> DysonResult:
    """Alternating partial sum of the perturbed semigroup expansion.

    approx = e^{-tH} + sum_{l=1}^{order} (-1)^l Phi_t(P,...,P) against
    expm(-t(H+P)), with the simplex-constant tail bound
    sum_{l>order} c^l S_l e^{lt} t^{l(1-a)}.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    p = np.asarray(p, dtype=complex)
    approx = herm_exp(h, t)
    for l in range(1, order + 1):
        fam = OperatorFamily(h, (p,) * l, (a,) * l)
        approx = approx + (-1.0) ** l * phi_fermionic(fam, t).value
    true_value = linalg.expm(-t * (h.matrix + p))

    c = op_norm(p @ linalg.frac_power_inv(h, a))
    bound = 0.0
    l = order + 1
    while l < order + 400:
        term = (
            c**l
            * simplex_constant((a,) * l)
            * np.exp(l * t)
            * t ** (l * (1.0 - a))
        )
        bound += term
        if term < 1e-18 * max(bound, 1e-300):
            break
        l += 1
    return DysonResult(approx, true_value, bound)
