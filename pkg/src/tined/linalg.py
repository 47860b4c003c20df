"""Dense double-precision linear algebra: products, QR least squares, power iteration.

Matrices are plain 2-D ``numpy.float64`` arrays.
"""

import numpy as np

from .errors import ConvergenceError, RankError, ShapeError

RANK_TOL = 1e-10


def as_matrix(m, name="matrix"):
    """Return ``m`` as a C-contiguous 2-D float64 array; 1-D input becomes one row."""
    arr = np.ascontiguousarray(m, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def frobenius_norm(m):
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


def householder_qr(a):
    """Thin Householder QR.

    Returns ``(v_list, betas, r)`` where the reflectors are stored implicitly,
    ``r`` is the ``cols x cols`` upper-triangular factor. Use :func:`apply_qt`
    to form ``Q^T b``.
    """
    a = as_matrix(a, "a").copy()
    m, n = a.shape
    if m < n:
        raise ShapeError(f"QR needs rows >= cols, got {m}x{n}")
    reflectors = []
    for j in range(n):
        x = a[j:, j]
        normx = np.sqrt(np.sum(x * x))
        if normx == 0.0:
            reflectors.append(None)
            continue
        alpha = -normx if x[0] >= 0 else normx
        v = x.copy()
        v[0] -= alpha
        vnorm2 = np.sum(v * v)
        if vnorm2 == 0.0:
            reflectors.append(None)
            continue
        v /= np.sqrt(vnorm2)
        a[j:, j:] -= 2.0 * np.outer(v, v @ a[j:, j:])
        a[j + 1:, j] = 0.0
        reflectors.append(v)
    return reflectors, np.triu(a[:n, :])


def apply_qt(reflectors, b):
    """Apply ``Q^T`` (product of stored reflectors) to ``b`` in place order."""
    b = as_matrix(b, "b").copy()
    for j, v in enumerate(reflectors):
        if v is None:
            continue
        b[j:, :] -= 2.0 * np.outer(v, v @ b[j:, :])
    return b


def back_substitute(r, y):
    n = r.shape[0]
    x = np.zeros((n, y.shape[1]))
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def least_squares(a, b):
    """Solve ``min_W ||A W - B||_F`` for full-column-rank ``A`` via Householder QR."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"row mismatch: a is {a.shape[0]}x{a.shape[1]}, b is {b.shape[0]}x{b.shape[1]}")
    if a.shape[0] < a.shape[1]:
        raise RankError(f"underdetermined system {a.shape[0]}x{a.shape[1]}", rank=a.shape[0])
    reflectors, r = householder_qr(a)
    diag = np.abs(np.diag(r))
    top = diag.max() if diag.size else 0.0
    rank = int(np.sum(diag > RANK_TOL * top)) if top > 0 else 0
    if rank < a.shape[1]:
        raise RankError(f"matrix is rank deficient: estimated rank {rank} < {a.shape[1]} columns", rank=rank)
    qtb = apply_qt(reflectors, b)
    return back_substitute(r, qtb[: a.shape[1]])


def _start_vectors(n):
    ones = np.ones(n) / np.sqrt(n)
    yield ones
    bumped = np.ones(n)
    bumped[0] += 1e-6
    yield bumped / np.linalg.norm(bumped)
    g = np.random.default_rng(0).standard_normal(n)
    yield g / np.linalg.norm(g)


def lambda_max_symmetric(m, tol=1e-12, max_iter=100_000):
    """Largest eigenvalue of a symmetric matrix by power iteration.

    A Gershgorin shift makes the iterated matrix PSD so the dominant eigenvalue is
    the largest one rather than the largest in magnitude. Start vectors are tried in
    order (all-ones, all-ones bumped in the first coordinate, seeded Gaussian) until
    one is not already an eigenvector.
    """
    m = as_matrix(m, "m")
    n = m.shape[0]
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"matrix must be square, got {m.shape[0]}x{m.shape[1]}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ShapeError("matrix is not symmetric within 1e-12")
    if n == 0:
        raise ShapeError("empty matrix")
    absrow = np.sum(np.abs(m), axis=1) - np.abs(np.diag(m))
    lower = float(np.min(np.diag(m) - absrow))
    shift = max(0.0, -lower)
    ms = m + shift * np.eye(n) if shift > 0 else m
    scale = max(float(np.max(np.abs(ms))), 1.0)
    if not np.any(ms):
        return 0.0 - shift

    rho = 0.0
    for v in _start_vectors(n):
        w = ms @ v
        rho = float(v @ w)
        if np.linalg.norm(w - rho * v) <= 1e-12 * scale and n > 1:
            # v is already an eigenvector; it may not be the leading one
            continue
        for _ in range(max_iter):
            v = w / np.linalg.norm(w)
            w = ms @ v
            new_rho = float(v @ w)
            if abs(new_rho - rho) <= tol:
                return new_rho - shift
            rho = new_rho
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations", estimate=rho - shift
        )
    # every start vector is an eigenvector with the same eigenvalue (m is a multiple of I)
    return rho - shift
