"""Scaling-and-squaring Padé matrix exponential for stacks of small dense matrices.

Works in any floating dtype numpy can do arithmetic in, including
``np.longdouble``; LAPACK is never called, so the linear solve is a batched
Gaussian elimination with partial pivoting.
"""

import numpy as np

# degree-13 Padé numerator coefficients (Higham 2005)
_B13 = (
    64764752532480000, 32382376266240000, 7771770303897600, 1187353796428800,
    129060195264000, 10559470521600, 670442572800, 33522128640, 1323241920,
    40840800, 960960, 16380, 182, 1,
)

# largest 1-norm the degree-13 approximant handles at the dtype's roundoff.
# 5.37 is Higham's double-precision bound; for 64-bit mantissas the leading
# truncation term (13!)^2 / (26! 27!) * theta^27 stays below eps at theta = 2.
_THETA13 = {8: 5.371920351148152, 16: 2.0}


def _theta(dtype) -> float:
    real = np.finfo(dtype)
    if real.eps >= 1e-16:
        return _THETA13[8]
    return _THETA13[16]


def _solve(a, b):
    """Solve a @ x = b for stacks of square matrices (shape (B, n, n))."""
    a = a.copy()
    x = b.copy()
    n = a.shape[-1]
    batch = np.arange(a.shape[0])
    for k in range(n):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if swap.any():
            rows = batch[swap]
            pk = piv[swap]
            a[rows, k], a[rows, pk] = a[rows, pk].copy(), a[rows, k].copy()
            x[rows, k], x[rows, pk] = x[rows, pk].copy(), x[rows, k].copy()
        if k + 1 < n:
            factor = a[:, k + 1:, k] / a[:, k, k][:, None]
            a[:, k + 1:, k:] -= factor[:, :, None] * a[:, k, None, k:]
            x[:, k + 1:, :] -= factor[:, :, None] * x[:, k, None, :]
    for k in range(n - 1, -1, -1):
        if k + 1 < n:
            x[:, k, :] -= np.einsum("bj,bjc->bc", a[:, k, k + 1:], x[:, k + 1:, :])
        x[:, k, :] /= a[:, k, k][:, None]
    return x


def expm(a):
    """exp(a) for a square matrix or a stack of them, shape (..., n, n)."""
    a = np.asarray(a)
    if a.dtype.kind not in "fc":
        a = a.astype(float)
    if a.shape[-1] != a.shape[-2]:
        raise ValueError("expm needs square matrices")
    lead = a.shape[:-2]
    n = a.shape[-1]
    stack = a.reshape((-1, n, n))
    if stack.shape[0] == 0 or n == 0:
        return np.empty_like(a)

    real_dtype = np.finfo(a.dtype).dtype
    norm = np.abs(stack).sum(axis=1).max()  # largest 1-norm in the stack
    theta = _theta(real_dtype)
    s = 0
    if norm > theta:
        s = int(np.ceil(np.log2(float(norm) / theta)))
    scaled = stack / a.dtype.type(2**s) if s else stack

    b = [a.dtype.type(v) for v in _B13]
    ident = np.broadcast_to(np.eye(n, dtype=a.dtype), stack.shape)
    a2 = scaled @ scaled
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = scaled @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = _solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r.reshape(lead + (n, n))
