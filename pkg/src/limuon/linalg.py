"""Dense linear algebra used by the optimizers.

Matrices are plain 2-D ``float64`` numpy arrays.  The factorizations that
matter for the optimizer (Householder QR, one-sided Jacobi SVD, polar factor,
Newton-Schulz) are implemented here rather than delegated to LAPACK so their
conventions (signs, rank handling, convergence thresholds) are fixed and
testable.  The two scalar-loop kernels are compiled with numba.
"""

from __future__ import annotations

from typing import NamedTuple

import numba
import numpy as np

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60
RANK_TOL = 1e-10


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


class QrResult(NamedTuple):
    q: np.ndarray
    r: np.ndarray


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite, nonempty 2-D float64 array (copy-free when possible)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def make_rng(seed) -> np.random.Generator:
    """Deterministic PCG64 generator; the same seed always yields the same stream."""
    return np.random.Generator(np.random.PCG64(seed))


def gaussian_matrix(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. standard normal entries (numpy's ziggurat sampler), advancing ``rng``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"dimensions must be positive, got ({rows}, {cols})")
    return rng.standard_normal((rows, cols))


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def inner(a, b) -> float:
    """Frobenius inner product <A, B> = trace(A^T B)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


# --------------------------------------------------------------------------
# Householder QR


@numba.njit(cache=True)
def _householder_qr(y):
    m, l = y.shape
    r = y.copy()
    vs = np.zeros((m, l))
    betas = np.zeros(l)
    for k in range(l):
        norm_x = 0.0
        for i in range(k, m):
            norm_x += r[i, k] * r[i, k]
        norm_x = np.sqrt(norm_x)
        if norm_x == 0.0:
            continue
        alpha = -norm_x if r[k, k] >= 0.0 else norm_x
        vv = 0.0
        for i in range(k, m):
            vs[i, k] = r[i, k]
        vs[k, k] -= alpha
        for i in range(k, m):
            vv += vs[i, k] * vs[i, k]
        if vv == 0.0:
            continue
        betas[k] = 2.0 / vv
        for j in range(k, l):
            dot = 0.0
            for i in range(k, m):
                dot += vs[i, k] * r[i, j]
            dot *= betas[k]
            for i in range(k, m):
                r[i, j] -= dot * vs[i, k]
    # accumulate the thin Q by applying reflectors to the first l columns of I
    q = np.zeros((m, l))
    for j in range(l):
        q[j, j] = 1.0
    for k in range(l - 1, -1, -1):
        if betas[k] == 0.0:
            continue
        for j in range(l):
            dot = 0.0
            for i in range(k, m):
                dot += vs[i, k] * q[i, j]
            dot *= betas[k]
            for i in range(k, m):
                q[i, j] -= dot * vs[i, k]
    return q, r[:l, :]


def qr_decompose(y) -> QrResult:
    """Thin Householder QR of a tall (or square) matrix.

    The diagonal of ``r`` is made non-negative and everything below it is
    exactly zero.
    """
    y = as_matrix(y, name="Y")
    m, l = y.shape
    if m < l:
        raise ValueError(f"qr_decompose needs rows >= cols, got {y.shape}")
    q, r = _householder_qr(np.ascontiguousarray(y))
    r = np.triu(r)
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    # + 0.0 folds signed zeros so identities print cleanly
    return QrResult(q * signs + 0.0, r * signs[:, None] + 0.0)


# --------------------------------------------------------------------------
# One-sided Jacobi SVD


@numba.njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):
    # Hestenes rotations on column pairs until every pair is orthogonal to
    # relative tolerance tol; returns the number of sweeps used.
    m, n = a.shape
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    alpha += a[i, p] * a[i, p]
                    beta += a[i, q] * a[i, q]
                    gamma += a[i, p] * a[i, q]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sign = 1.0 if zeta >= 0.0 else -1.0
                t = sign / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    x = a[i, p]
                    y = a[i, q]
                    a[i, p] = c * x - s * y
                    a[i, q] = s * x + c * y
                for i in range(n):
                    x = v[i, p]
                    y = v[i, q]
                    v[i, p] = c * x - s * y
                    v[i, q] = s * x + c * y
        if not rotated:
            return sweep + 1
    return max_sweeps


def _complete_columns(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` not in ``keep`` by an orthonormal completion."""
    m, k = u.shape
    out = u.copy()
    basis = [out[:, j] for j in range(k) if keep[j]]
    candidates = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        for e in candidates:
            w = e.copy()
            for _ in range(2):
                for b in basis:
                    w -= (b @ w) * b
            nrm = np.linalg.norm(w)
            if nrm > 0.5:
                w /= nrm
                break
        out[:, j] = w
        basis.append(w)
    return out


def _svd_tall(a: np.ndarray) -> SvdResult:
    m, n = a.shape
    work = np.array(a, dtype=np.float64, order="C", copy=True)
    v = np.eye(n)
    _jacobi_sweeps(work, v, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    sigma = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]
    smax = sigma[0] if n else 0.0
    keep = sigma > max(m, n) * np.finfo(float).eps * smax
    if smax == 0.0:
        keep[:] = False
    u = np.zeros((m, n))
    u[:, keep] = work[:, keep] / sigma[keep]
    if not np.all(keep):
        u = _complete_columns(u, keep)
    return SvdResult(u, sigma, v)


def _fix_signs(res: SvdResult) -> SvdResult:
    u, sigma, v = res
    idx = np.argmax(np.abs(u), axis=0)
    flip = np.where(u[idx, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    return SvdResult(u * flip, sigma, v * flip)


def svd(a) -> SvdResult:
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` by one-sided Jacobi.

    ``sigma`` is non-increasing and has length ``min(m, n)``.  Each column of
    ``u`` has its largest-magnitude entry positive.  Directions belonging to
    (numerically) zero singular values are an arbitrary orthonormal
    completion.
    """
    a = as_matrix(a, name="A")
    m, n = a.shape
    if m >= n:
        res = _svd_tall(a)
    else:
        u, sigma, v = _svd_tall(a.T)
        res = SvdResult(v, sigma, u)
    return _fix_signs(res)


def numerical_rank(sigma: np.ndarray, rtol: float = RANK_TOL) -> int:
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rtol * sigma[0]))


def orthogonal_factor(a, rtol: float = RANK_TOL) -> np.ndarray:
    """Polar factor U V^T of ``a`` restricted to its numerical range.

    Singular triples with sigma <= rtol * sigma_max are dropped, so for a
    full-rank input this is the usual semi-orthogonal factor (O^T O = I when
    m >= n, O O^T = I otherwise) and for a rank-deficient one
    ``||O||_F^2`` equals the numerical rank.  The zero matrix maps to zero.
    """
    u, sigma, v = svd(a)
    k = numerical_rank(sigma, rtol)
    return u[:, :k] @ v[:, :k].T


def nuclear_norm(a) -> float:
    return float(np.sum(svd(a).sigma))


def newton_schulz(a, iters: int, *, normalize: bool = True) -> np.ndarray:
    """Approximate the polar factor with the cubic iteration X <- 1.5 X - 0.5 X X^T X.

    With ``normalize`` the input is first divided by its Frobenius norm so
    that every singular value lies in (0, 1], where the iteration converges
    monotonically.  ``normalize=False`` runs the raw recursion.
    """
    x = as_matrix(a, name="A").copy()
    if iters < 1:
        raise ValueError("iters must be positive")
    nrm = frobenius_norm(x)
    if nrm == 0.0:
        raise ValueError("newton_schulz of the zero matrix is undefined")
    if normalize:
        x /= nrm
    tall = x.shape[0] >= x.shape[1]
    for _ in range(iters):
        if tall:
            x = 1.5 * x - 0.5 * (x @ (x.T @ x))
        else:
            x = 1.5 * x - 0.5 * ((x @ x.T) @ x)
    return x


def random_orthonormal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random matrix with orthonormal columns (rows >= cols)."""
    q, r = qr_decompose(gaussian_matrix(rows, cols, rng))
    return q


def matrix_with_spectrum(m: int, n: int, sigma, rng: np.random.Generator) -> np.ndarray:
    """Random ``m x n`` matrix whose singular values are ``sigma`` (padded with zeros)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    k = sigma.size
    if k > min(m, n):
        raise ValueError(f"{k} singular values do not fit a {m}x{n} matrix")
    u = random_orthonormal(m, k, rng)
    v = random_orthonormal(n, k, rng)
    return (u * sigma) @ v.T
