"""Flat-torus bundle models with constant coefficients.

The torus is [0, 2pi)^d.  A model carries a metric connection nabla = d +
sum_j A_j dx^j (A_j constant skew-Hermitian), a constant Hermitian potential
W, and first-order perturbations P_j = sum_m S_j^m nabla_m + V_j.  Constant
coefficients make every operator a Fourier multiplier, so the per-mode
blocks

    H_k = (1/2) sum_m (i k_m I + A_m)^* (i k_m I + A_m) + W
    P_{j,k} = sum_m S_j^m (i k_m I + A_m) + V_j

yield an exact spectral oracle for the semigroup integrals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .. import linalg
from ..linalg import hermitian
from ..phi_core import OperatorFamily, phi_fermionic

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PerturbationSpec:
    """First-order symbol coefficients S^1..S^d and zeroth-order part V."""

    first_order: tuple  # d matrices, each r x r
    zeroth_order: np.ndarray

    def __post_init__(self):
        fo = tuple(np.asarray(s, dtype=complex) for s in self.first_order)
        zo = np.asarray(self.zeroth_order, dtype=complex)
        object.__setattr__(self, "first_order", fo)
        object.__setattr__(self, "zeroth_order", zo)

    @staticmethod
    def zeroth(v: np.ndarray, d: int) -> "PerturbationSpec":
        v = np.asarray(v, dtype=complex)
        zero = np.zeros_like(v)
        return PerturbationSpec((zero,) * d, v)


@dataclass(frozen=True)
class TorusModel:
    d: int
    r: int
    connection: tuple = ()   # d skew-Hermitian r x r matrices
    potential: np.ndarray = None
    perturbations: tuple = ()
    _window: int = field(default=8, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be positive")
        conn = tuple(np.asarray(a, dtype=complex) for a in self.connection)
        if not conn:
            conn = tuple(np.zeros((self.r, self.r), dtype=complex) for _ in range(self.d))
        if len(conn) != self.d:
            raise ValueError("need one connection coefficient per coordinate")
        for a in conn:
            if a.shape != (self.r, self.r):
                raise ValueError("connection coefficients must be r x r")
            if np.linalg.norm(a + a.conj().T, 2) > 1e-12 * max(1.0, np.linalg.norm(a, 2)):
                raise ValueError("connection coefficients must be skew-Hermitian")
        pot = self.potential
        pot = np.zeros((self.r, self.r), dtype=complex) if pot is None else np.asarray(pot, dtype=complex)
        if np.linalg.norm(pot - pot.conj().T, 2) > 1e-12 * max(1.0, np.linalg.norm(pot, 2)):
            raise ValueError("potential must be Hermitian")
        perts = tuple(self.perturbations)
        for p in perts:
            if not isinstance(p, PerturbationSpec):
                raise TypeError("perturbations must be PerturbationSpec instances")
            if len(p.first_order) != self.d:
                raise ValueError("need d first-order coefficients per perturbation")
        object.__setattr__(self, "connection", conn)
        object.__setattr__(self, "potential", pot)
        object.__setattr__(self, "perturbations", perts)
        self._assert_nonnegative()

    def _assert_nonnegative(self):
        """min eigenvalue of H_k over the check window must be >= -1e-10."""
        worst = np.inf
        for k in _mode_range(self.d, self._window):
            vals = np.linalg.eigvalsh(self.mode_hamiltonian(k))
            worst = min(worst, vals[0])
        if worst < -1e-10:
            raise ValueError(f"mode Hamiltonians are not nonnegative: min eig {worst:.3e}")

    @property
    def n(self) -> int:
        return len(self.perturbations)

    def mode_matrix(self, k) -> tuple:
        """The d per-mode covariant factors i k_m I + A_m."""
        eye = np.eye(self.r)
        return tuple(1j * km * eye + a for km, a in zip(k, self.connection))

    def mode_hamiltonian(self, k) -> np.ndarray:
        out = np.zeros((self.r, self.r), dtype=complex)
        for m in self.mode_matrix(k):
            out += 0.5 * (m.conj().T @ m)
        return out + self.potential

    def mode_perturbation(self, j: int, k) -> np.ndarray:
        spec = self.perturbations[j]
        out = spec.zeroth_order.copy()
        for s, m in zip(spec.first_order, self.mode_matrix(k)):
            out = out + s @ m
        return out

    def with_perturbations(self, perts) -> "TorusModel":
        return TorusModel(self.d, self.r, self.connection, self.potential, tuple(perts))


def _mode_range(d: int, kmax: int):
    rng = range(-kmax, kmax + 1)
    idx = [0] * d

    def rec(j, prefix):
        if j == d:
            yield tuple(prefix)
            return
        for k in rng:
            yield from rec(j + 1, prefix + [k])

    yield from rec(0, [])


def heat_kernel(d: int, t: float, x, y) -> float:
    """Wrapped Gaussian kernel of -Laplacian/2 on the torus, tail < 1e-14."""
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (d,) or y.shape != (d,):
        raise ValueError(f"points must be {d}-vectors")
    out = 1.0
    wmax = winding_cutoff(t)
    ws = np.arange(-wmax, wmax + 1)
    for m in range(d):
        delta = y[m] - x[m]
        out *= np.sum(np.exp(-((delta + TWO_PI * ws) ** 2) / (2.0 * t))) / np.sqrt(
            TWO_PI * t
        )
    return float(out)


def winding_cutoff(t: float) -> int:
    """Image count keeping the wrapped-Gaussian tail below 1e-14 * total."""
    return max(2, int(np.ceil((np.pi + np.sqrt(2.0 * t * 40.0)) / TWO_PI)) + 1)


def spectral_phi_kernel(model: TorusModel, t: float, x, y, truncation: int):
    """Exact Fourier oracle for the semigroup-integral kernel at (x, y).

    (2 pi)^-d sum_{|k|_inf <= K} e^{i k (x-y)} Phi^{H_k}_t(P_{1,k}, ..., P_{n,k}),
    rejecting truncations whose Gaussian tail estimate exceeds 1e-10.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tail = _truncation_tail(model, t, truncation)
    if tail > 1e-10:
        raise ValueError(
            f"truncation K={truncation} has tail estimate {tail:.2e} > 1e-10"
        )
    out = np.zeros((model.r, model.r), dtype=complex)
    n = model.n
    for k in _mode_range(model.d, truncation):
        h_k = hermitian(model.mode_hamiltonian(k), require_nonneg=True)
        fam = OperatorFamily(
            h_k, tuple(model.mode_perturbation(j, k) for j in range(n))
        )
        phase = np.exp(1j * np.dot(k, x - y))
        out += phase * phi_fermionic(fam, t).value
    return out / TWO_PI**model.d


def _truncation_tail(model: TorusModel, t: float, truncation: int) -> float:
    """Crude rigorous bound on the discarded mode sum, per kernel entry."""
    amax = max((np.linalg.norm(a, 2) for a in model.connection), default=0.0)
    wmin = float(np.linalg.eigvalsh(model.potential)[0]) if model.r else 0.0
    p_consts = []
    for spec in model.perturbations:
        s_norm = sum(np.linalg.norm(s, 2) for s in spec.first_order)
        p_consts.append((s_norm, np.linalg.norm(spec.zeroth_order, 2) + s_norm * amax))
    n = model.n
    total = 0.0
    for q in range(truncation + 1, truncation + 200):
        lam = 0.5 * max(q - amax, 0.0) ** 2 + wmin
        shell = (2 * q + 1) ** model.d - (2 * q - 1) ** model.d
        prod = 1.0
        for s_norm, c0 in p_consts:
            prod *= s_norm * np.sqrt(model.d) * q + c0
        term = shell * prod * t**n / factorial(n) * np.exp(-t * lam)
        total += term
        if term < 1e-18 * max(total, 1e-300):
            break
    return total / TWO_PI**model.d
