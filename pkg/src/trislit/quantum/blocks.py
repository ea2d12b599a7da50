"""Exact propagation of the three-mode interaction via its conserved quantities.

K = a1 a2 a3^dag - a1^dag a2^dag a3 moves (n1, n2, n3) to (n1-1, n2-1, n3+1)
and back, so m1 = n1 + n3 and m2 = n2 + n3 are conserved. In the basis
ordered by (m1, m2, n3) the truncated K is block diagonal with tridiagonal,
real antisymmetric blocks no larger than the mode-3 cutoff. exp(gamma K) is
then a stack of small dense exponentials.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .expm import expm
from .operators import _real_dtype


class BlockStructure:
    """Index bookkeeping and generator blocks for one set of cutoffs.

    ``groups`` maps a block size s > 1 to (indices, blocks): ``indices`` has
    shape (B, s) with flat Fock indices, ``blocks`` shape (B, s, s) holds K
    restricted to each block. Size-one blocks have K = 0 and are left out.
    """

    def __init__(self, cutoffs, precision: str = "double"):
        n1c, n2c, n3c = (int(n) for n in cutoffs)
        self.cutoffs = (n1c, n2c, n3c)
        self.precision = precision
        real = _real_dtype(precision)
        by_size: dict[int, tuple[list, list]] = {}
        for m1 in range(n1c + n3c - 1):
            for m2 in range(n2c + n3c - 1):
                lo = max(0, m1 - n1c + 1, m2 - n2c + 1)
                hi = min(n3c - 1, m1, m2)
                size = hi - lo + 1
                if size < 2:
                    continue
                j = np.arange(lo, hi + 1)
                n1, n2 = m1 - j, m2 - j
                idx = (n1 * n2c + n2) * n3c + j
                # <n1-1, n2-1, n3+1| a1 a2 a3^dag |n1, n2, n3> between consecutive members
                amp = np.sqrt(n1[:-1].astype(real) * n2[:-1].astype(real) * (j[:-1] + 1).astype(real))
                block = np.zeros((size, size), dtype=real)
                rows = np.arange(size - 1)
                block[rows + 1, rows] = amp
                block[rows, rows + 1] = -amp
                by_size.setdefault(size, ([], []))
                by_size[size][0].append(idx)
                by_size[size][1].append(block)
        self.groups = {
            s: (np.array(ix), np.array(bl)) for s, (ix, bl) in sorted(by_size.items())
        }

    def unitary(self, gamma: float):
        """exp(gamma K) as {size: (indices, U blocks)}."""
        return {s: (ix, expm(bl * bl.dtype.type(gamma))) for s, (ix, bl) in self.groups.items()}

    @staticmethod
    def apply(unitaries, psi):
        """Apply block unitaries to a state vector (dim,) or a batch (dim, S)."""
        out = np.array(psi, copy=True)
        for ix, u in unitaries.values():
            sub = psi[ix]  # (B, s) or (B, s, S)
            if sub.ndim == 2:
                out[ix] = np.einsum("bij,bj->bi", u, sub)
            else:
                out[ix] = np.einsum("bij,bjk->bik", u, sub)
        return out


@lru_cache(maxsize=16)
def block_structure(cutoffs, precision: str = "double") -> BlockStructure:
    return BlockStructure(tuple(cutoffs), precision)
