"""Two-timescale decomposition of the effective channel.

The effective channel factorizes as H_eff(t) = H_eff(0) @ diag(d(t)) with
d(t) = h_ur(t) / h_ur(0) elementwise. The large-timescale object is the
initial effective channel, stored piecewise (column blocks) in low-rank
factored form; the small-timescale object is the length-M scaling vector
per block, which is what the estimator actually recovers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization


def partition_columns(m_total: int, q_pieces: int) -> list[slice]:
    """Contiguous equal column blocks as 0-based slices.

    With m_total=128 and q_pieces=4 the first block covers columns 0..31
    (elements 1..32 in 1-based array indexing).
    """
    if q_pieces <= 0 or m_total % q_pieces != 0:
        raise ValueError("q_pieces must divide the column count")
    width = m_total // q_pieces
    return [slice(q * width, (q + 1) * width) for q in range(q_pieces)]


def small_timescale_truth(h0: np.ndarray, ht: np.ndarray) -> np.ndarray:
    """Elementwise scaling vector d with ht = h0 * d.

    Raises on near-zero reference entries, naming the offending indices,
    since the ratio is undefined there.
    """
    h0 = np.asarray(h0)
    ht = np.asarray(ht)
    if h0.shape != ht.shape or h0.ndim != 1:
        raise ValueError("expected two vectors of equal length")
    rms = np.sqrt(np.mean(np.abs(h0) ** 2))
    bad = np.flatnonzero(np.abs(h0) < 1e-12 * max(rms, 1e-300))
    if bad.size:
        head = ", ".join(str(i) for i in bad[:8])
        more = "" if bad.size <= 8 else f" (+{bad.size - 8} more)"
        raise ValueError(
            f"reference vector has near-zero entries at indices [{head}]{more}; "
            "scaling ratios are undefined"
        )
    return ht / h0


@dataclass(frozen=True)
class PiecewiseDecomposition:
    """Column-blocked low-rank factorization of the initial effective channel.

    pieces[q] stores the retained product subspaces[q] @ coefficients[q],
    i.e. the rank-r_q approximation of block q. When the retained rank
    equals the true block rank this reproduces the original columns to
    floating-point accuracy.
    """

    pieces: list[np.ndarray]         # (n_bs, m_sub) per block, rank-r product
    subspaces: list[np.ndarray]      # (n_bs, r_q) orthonormal columns
    coefficients: list[np.ndarray]   # (r_q, m_sub)
    ranks: list[int]
    index_sets: list[slice]          # column slice of each block

    @property
    def q_pieces(self) -> int:
        return len(self.pieces)

    @property
    def m_total(self) -> int:
        return sum(p.shape[1] for p in self.pieces)

    def reassemble(self) -> np.ndarray:
        return np.concatenate(self.pieces, axis=1)


def low_rank_decompose(
    h0_eff: np.ndarray,
    q_pieces: int,
    *,
    rank: int | None = None,
    rel_threshold: float | None = None,
) -> PiecewiseDecomposition:
    """Split the initial effective channel into column blocks and factor each.

    Either fix the retained rank per block, or keep singular values above
    rel_threshold times the block's largest (default: keep everything
    above double-precision noise). The left factors have orthonormal
    columns; by Eckart-Young the retained product is the best
    Frobenius-norm approximation at that rank.
    """
    h0_eff = np.asarray(h0_eff)
    if rank is not None and rel_threshold is not None:
        raise ValueError("pass either rank or rel_threshold, not both")
    index_sets = partition_columns(h0_eff.shape[1], q_pieces)
    m_sub = h0_eff.shape[1] // q_pieces
    if rank is not None and rank > min(h0_eff.shape[0], m_sub):
        raise ValueError(
            f"requested rank {rank} exceeds the block dimension "
            f"min({h0_eff.shape[0]}, {m_sub})"
        )
    pieces, lefts, rights, ranks = [], [], [], []
    for sl in index_sets:
        block = h0_eff[:, sl]
        u, s, vh = np.linalg.svd(block, full_matrices=False)
        if rank is not None:
            r = rank
        elif rel_threshold is not None:
            r = int(np.count_nonzero(s >= rel_threshold * s[0])) if s[0] > 0 else 0
            r = max(r, 1)
        else:
            r = int(np.count_nonzero(s >= 1e-12 * s[0])) if s[0] > 0 else 0
            r = max(r, 1)
        lefts.append(u[:, :r])
        rights.append(s[:r, None] * vh[:r])
        pieces.append(lefts[-1] @ rights[-1])
        ranks.append(r)
    return PiecewiseDecomposition(
        pieces=pieces, subspaces=lefts, coefficients=rights,
        ranks=ranks, index_sets=index_sets,
    )


def reconstruct_effective(
    decomp: PiecewiseDecomposition, d: np.ndarray
) -> np.ndarray:
    """Apply a small-timescale scaling vector to the stored pieces."""
    d = np.asarray(d)
    if d.shape != (decomp.m_total,):
        raise ValueError("scaling vector length must match the channel width")
    blocks = [
        piece * d[sl][None, :]
        for piece, sl in zip(decomp.pieces, decomp.index_sets)
    ]
    return np.concatenate(blocks, axis=1)


def effective_from_realization(
    realization: ChannelRealization, t: int
) -> np.ndarray:
    return realization.h_eff[t]


def perturb_initial(
    h0_eff: np.ndarray, error_db: float | str, rng: np.random.Generator
) -> np.ndarray:
    """Model imperfect initial acquisition.

    "perfect" returns an identical copy. A negative dB level adds a
    complex Gaussian error rescaled so the energy ratio ||E||^2/||H||^2
    is exactly 10^(error_db/10); 0 dB means an error as strong as the
    channel itself. Positive levels are rejected.
    """
    h0_eff = np.asarray(h0_eff)
    if isinstance(error_db, str):
        if error_db != "perfect":
            raise ValueError(f"unknown perturbation level {error_db!r}")
        return h0_eff.copy()
    if error_db > 0:
        raise ValueError("perturbation level must be <= 0 dB (or 'perfect')")
    noise = (
        rng.standard_normal(h0_eff.shape) + 1j * rng.standard_normal(h0_eff.shape)
    ) / np.sqrt(2.0)
    target = 10.0 ** (error_db / 10.0) * np.linalg.norm(h0_eff) ** 2
    scale = np.sqrt(target) / np.linalg.norm(noise)
    return h0_eff + scale * noise
