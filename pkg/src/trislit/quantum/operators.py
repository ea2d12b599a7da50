"""Ladder operators on a truncated three-mode Fock space, and coherent states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from ..core import NumericalError

#: product-space dimension above which operator construction is refused
DEFAULT_MAX_DIM = 200_000


class TruncationError(NumericalError):
    """The Fock cutoff is too small for the requested states."""


def tail_rule(alpha: complex) -> int:
    """Smallest admissible cutoff for a coherent amplitude: ceil(|a|^2 + 6|a|)."""
    r = abs(alpha)
    return math.ceil(r * r + 6 * r)


def coherent_tail_mass(alpha: complex, cutoff: int) -> float:
    """Probability a coherent state puts on occupations >= cutoff."""
    if alpha == 0:
        return 0.0
    return float(poisson.sf(cutoff - 1, abs(alpha) ** 2))


def _real_dtype(precision: str):
    if precision == "double":
        return np.float64
    if precision == "extended":
        return np.longdouble
    raise ValueError(f"precision must be 'double' or 'extended', got {precision!r}")


def complex_dtype(precision: str):
    return np.complex128 if precision == "double" else np.clongdouble


def coherent_state(alpha: complex, cutoff: int, precision: str = "double") -> np.ndarray:
    """Normalized coherent state truncated to occupations 0 .. cutoff-1."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if cutoff < tail_rule(alpha):
        raise TruncationError(
            f"cutoff {cutoff} too small for |alpha| = {abs(alpha):.4g}; need >= {tail_rule(alpha)}"
        )
    real = _real_dtype(precision)
    cdt = complex_dtype(precision)
    amp = cdt(complex(alpha))
    coeffs = np.zeros(cutoff, dtype=cdt)
    coeffs[0] = np.exp(-real(abs(complex(alpha))) ** 2 / 2)
    for k in range(1, cutoff):
        coeffs[k] = coeffs[k - 1] * amp / np.sqrt(real(k))
    return coeffs / np.sqrt(np.sum(np.abs(coeffs) ** 2))


def product_state(alphas, cutoffs, precision: str = "double") -> np.ndarray:
    s1, s2, s3 = (coherent_state(a, n, precision) for a, n in zip(alphas, cutoffs))
    return np.kron(np.kron(s1, s2), s3)


def _annihilation(n: int, real) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n, dtype=real)), 1, shape=(n, n), format="csr", dtype=real)


@dataclass(frozen=True, eq=False)
class ModeOperatorSet:
    """Ladder/number operators for three modes and the interaction generator.

    ``generator`` is K = a1 a2 a3^dag - a1^dag a2^dag a3. The matrices are
    shared between callers and must be treated as read-only.
    """

    cutoffs: tuple[int, int, int]
    a: tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    adag: tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    number: tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    generator: sp.csr_matrix

    @property
    def dim(self) -> int:
        return int(np.prod(self.cutoffs))

    def hamiltonian(self, chi: float, omega: float = 0.0) -> sp.csr_matrix:
        """H / hbar = omega (n1 + n2 + 2 n3) + i chi K."""
        n1, n2, n3 = self.number
        h = 1j * chi * self.generator
        if omega:
            h = h + omega * (n1 + n2 + 2 * n3)
        return sp.csr_matrix(h)


def build_operators(cutoffs, precision: str = "double", max_dim: int = DEFAULT_MAX_DIM) -> ModeOperatorSet:
    cutoffs = tuple(int(n) for n in cutoffs)
    if len(cutoffs) != 3:
        raise ValueError("need one cutoff per mode")
    if min(cutoffs) < 2:
        raise ValueError(f"cutoffs must be >= 2, got {cutoffs}")
    dim = int(np.prod(cutoffs))
    if dim > max_dim:
        raise MemoryError(
            f"product dimension {dim} exceeds the cap of {max_dim}; lower the Fock cutoffs "
            f"(currently {cutoffs}) or reduce the coherent amplitudes"
        )
    real = _real_dtype(precision)
    eye = [sp.identity(n, dtype=real, format="csr") for n in cutoffs]

    def embed(op, k):
        parts = list(eye)
        parts[k] = op
        return sp.kron(sp.kron(parts[0], parts[1]), parts[2], format="csr")

    a = tuple(embed(_annihilation(n, real), k) for k, n in enumerate(cutoffs))
    adag = tuple(op.T.tocsr() for op in a)
    number = tuple((ad @ op).tocsr() for ad, op in zip(adag, a))
    raise_3 = (a[0] @ a[1] @ adag[2]).tocsr()
    generator = (raise_3 - raise_3.T).tocsr()
    generator.eliminate_zeros()
    return ModeOperatorSet(cutoffs, a, adag, number, generator)
