"""Symmetric eigensolvers built on cyclic Jacobi rotations.

One sweep visits every off-diagonal pair exactly once, ordered as
round-robin rounds of disjoint pairs so each round's rotations commute and
can be applied with vectorized row/column updates.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericFault


def _offdiag_norm(m: np.ndarray) -> float:
    off = m.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings of 0..m-1 (m even) into m-1 rounds of disjoint pairs."""
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps = np.array([idx[i] for i in range(m // 2)], dtype=np.intp)
        qs = np.array([idx[m - 1 - i] for i in range(m // 2)], dtype=np.intp)
        rounds.append((ps, qs))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a real symmetric matrix via cyclic Jacobi sweeps.

    Returns (eigenvalues ascending, eigenvectors as columns).  Iterates until
    the off-diagonal Frobenius norm drops below ``tol * max(1, ||a||_F)``;
    raises NumericFault if that does not happen within ``max_sweeps`` sweeps.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"jacobi_eigh needs a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ContractViolation("jacobi_eigh needs a symmetric matrix")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    m = np.array(a)
    v = np.eye(n)
    if n == 1:
        return np.diag(m).copy(), v

    threshold = tol * max(1.0, float(np.linalg.norm(a)))
    padded = n + (n % 2)
    rounds = [(p[(p < n) & (q < n)], q[(p < n) & (q < n)])
              for p, q in _round_robin(padded)]

    for _ in range(max_sweeps):
        if _offdiag_norm(m) <= threshold:
            break
        for p, q in rounds:
            apq = m[p, q]
            active = np.abs(apq) > 1e-300
            diff = m[q, q] - m[p, p]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                theta = np.where(active, diff / (2.0 * np.where(active, apq, 1.0)), 0.0)
                big = np.abs(theta) > 1e150
                safe = np.where(big, 1.0, theta)
                t = np.sign(safe) / (np.abs(safe) + np.sqrt(safe * safe + 1.0))
                t = np.where(big, 1.0 / (2.0 * theta), t)
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            rp = m[p, :].copy()
            rq = m[q, :].copy()
            m[p, :] = c[:, None] * rp - s[:, None] * rq
            m[q, :] = s[:, None] * rp + c[:, None] * rq
            cp = m[:, p].copy()
            cq = m[:, q].copy()
            m[:, p] = c[None, :] * cp - s[None, :] * cq
            m[:, q] = s[None, :] * cp + c[None, :] * cq
            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = c[None, :] * vp - s[None, :] * vq
            v[:, q] = s[None, :] * vp + c[None, :] * vq
    else:
        raise NumericFault(
            f"jacobi_eigh did not converge after {max_sweeps} sweeps "
            f"(off-diagonal norm {_offdiag_norm(m):.3e})")

    eigvals = np.diag(m).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], np.ascontiguousarray(v[:, order])


def sqrtm_psd(a: np.ndarray, neg_tol: float = -1e-8) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues in [neg_tol, 0) are clipped to zero; anything below neg_tol
    raises NumericFault.
    """
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    vals, vecs = jacobi_eigh(a)
    if np.any(vals < neg_tol * scale):
        raise NumericFault(
            f"matrix is not PSD within tolerance (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T
