"""Normal-ordered polynomials in three boson modes, with exact integer coefficients.

The Heisenberg series n3(G) = sum_m G^m/m! C_m, C_{m+1} = [C_m, K], is built
here symbolically so its coherent-state expectation can be evaluated at any
photon number. In normal order, <alpha| a^dag^p a^q |alpha> = conj(alpha)^p alpha^q,
so the expectation of each C_m is just a polynomial in the amplitudes.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np

# a monomial is (p1, q1, p2, q2, p3, q3): prod_k a_k^dag^p_k a_k^q_k
Monomial = tuple[int, int, int, int, int, int]
Poly = dict[Monomial, int]


def _mode_product(p, q, r, s):
    """a^dag^p a^q a^dag^r a^s in normal order as [(coeff, P, Q)]."""
    return [
        (comb(q, j) * comb(r, j) * factorial(j), p + r - j, q + s - j)
        for j in range(min(q, r) + 1)
    ]


def multiply(x: Poly, y: Poly) -> Poly:
    out: Poly = {}
    for mx, cx in x.items():
        for my, cy in y.items():
            parts = [_mode_product(mx[2 * k], mx[2 * k + 1], my[2 * k], my[2 * k + 1]) for k in range(3)]
            for c1, p1, q1 in parts[0]:
                for c2, p2, q2 in parts[1]:
                    for c3, p3, q3 in parts[2]:
                        key = (p1, q1, p2, q2, p3, q3)
                        out[key] = out.get(key, 0) + cx * cy * c1 * c2 * c3
    return {k: v for k, v in out.items() if v}


def commutator(x: Poly, y: Poly) -> Poly:
    xy = multiply(x, y)
    for key, value in multiply(y, x).items():
        xy[key] = xy.get(key, 0) - value
    return {k: v for k, v in xy.items() if v}


NUMBER_3: Poly = {(0, 0, 0, 0, 1, 1): 1}
# K = a1 a2 a3^dag - a1^dag a2^dag a3
GENERATOR: Poly = {(0, 1, 0, 1, 1, 0): 1, (1, 0, 1, 0, 0, 1): -1}


@lru_cache(maxsize=None)
def series_terms(order: int) -> tuple[Poly, ...]:
    """Normal-ordered C_0 .. C_order."""
    terms = [NUMBER_3]
    for _ in range(order):
        terms.append(commutator(terms[-1], GENERATOR))
    return tuple(terms)


def expectation(poly: Poly, alphas):
    """Coherent-state expectation; each alpha may be a scalar or an array."""
    a = [np.asarray(x, dtype=complex) for x in alphas]
    total = 0j
    for (p1, q1, p2, q2, p3, q3), coeff in poly.items():
        total = total + coeff * (
            np.conj(a[0]) ** p1 * a[0] ** q1
            * np.conj(a[1]) ** p2 * a[1] ** q2
            * np.conj(a[2]) ** p3 * a[2] ** q3
        )
    return total


def series_n3(alphas, gamma, order: int = 6):
    """<n3> after the interaction, truncated at ``order`` in gamma."""
    gamma = np.asarray(gamma, dtype=float)
    total = 0.0
    for m, term in enumerate(series_terms(order)):
        total = total + gamma**m / factorial(m) * expectation(term, alphas).real
    return total


def series_n3_derivative(alphas, gamma, order: int = 6):
    """d<n3>/d(gamma) of the truncated series."""
    gamma = np.asarray(gamma, dtype=float)
    total = 0.0
    for m, term in enumerate(series_terms(order)):
        if m:
            total = total + gamma ** (m - 1) / factorial(m - 1) * expectation(term, alphas).real
    return total
