"""Eigenvalue-decay profiles and condition numbers in log10 decades.

Everything here works on Hermitian Gram spectra: for a channel matrix H we
examine eig(H @ H^H), for a sensing Gram G we examine eig(G) directly. The
log-domain normalization (ratios to the dominant eigenvalue) is what the
rank and conditioning studies plot.
"""

from __future__ import annotations

import numpy as np

# Relative eigenvalue ratios below this are indistinguishable from zero in
# double precision; they clamp the decay profile and trip the singular
# sentinel in condition_decades.
RATIO_FLOOR = 1e-15

# Aggregations cap singular condition numbers at this many decades so that
# sweep averages stay finite while still dominating every regular value.
CONDITION_CAP = 15.0


def gram_eigenvalues(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of H @ H^H sorted descending, clipped at zero.

    Computed on the smaller Gram side for speed; the nonzero spectrum of
    H H^H and H^H H coincide and the larger one only pads zeros.
    """
    h = np.asarray(h)
    if h.ndim != 2:
        raise ValueError("expected a matrix")
    n, m = h.shape
    gram = h @ h.conj().T if n <= m else h.conj().T @ h
    vals = np.linalg.eigvalsh(gram)[::-1]
    vals = np.clip(vals, 0.0, None)
    if n > m:
        vals = np.concatenate([vals, np.zeros(n - m)])
    elif m > n:
        vals = vals[:n]
    return vals


def eigen_decay_profile(h: np.ndarray) -> np.ndarray:
    """log10 of eigenvalues of H H^H relative to the dominant one.

    Entry 0 is always 0.0; ratios are clamped at RATIO_FLOOR so the
    profile bottoms out at -15 rather than -inf.
    """
    vals = gram_eigenvalues(h)
    if vals[0] <= 0.0:
        raise ValueError("zero matrix has no decay profile")
    ratios = np.clip(vals / vals[0], RATIO_FLOOR, None)
    profile = np.log10(ratios)
    profile[0] = 0.0
    return profile


def hermitian_spectrum(g: np.ndarray) -> np.ndarray:
    """Eigenvalues of an already-Hermitian matrix, sorted descending."""
    g = np.asarray(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("expected a square matrix")
    return np.linalg.eigvalsh(g)[::-1]


def condition_decades(g: np.ndarray, *, hermitian: bool = True) -> float:
    """Condition number of a PSD matrix in decades: log10(l_max / l_min).

    Returns inf when the smallest eigenvalue is at or below the double
    precision floor relative to the largest (numerically singular). A
    well-conditioned identity gives exactly 0.0. With hermitian=True the
    input must actually be Hermitian (within 1e-10 relative); otherwise
    the Gram spectrum of a general matrix is used.
    """
    if hermitian:
        g = np.asarray(g)
        scale = np.linalg.norm(g)
        if np.linalg.norm(g - g.conj().T) > 1e-10 * max(scale, 1e-300):
            raise ValueError("condition_decades expects a Hermitian matrix")
    vals = hermitian_spectrum(g) if hermitian else gram_eigenvalues(g)
    lmax = float(vals[0])
    lmin = float(vals[-1])
    if lmax <= 0.0:
        return float("inf")
    if lmin <= RATIO_FLOOR * lmax:
        return float("inf")
    return float(np.log10(lmax / lmin))


def cap_condition(decades: float, cap: float = CONDITION_CAP) -> float:
    """Clamp a condition value for averaging; inf maps to the cap."""
    if not np.isfinite(decades):
        return cap
    return min(decades, cap)


def numerical_rank(h: np.ndarray, rel_tol: float) -> int:
    """Count eigenvalues of H H^H above rel_tol times the largest."""
    vals = gram_eigenvalues(h)
    if vals[0] <= 0.0:
        return 0
    return int(np.count_nonzero(vals > rel_tol * vals[0]))
