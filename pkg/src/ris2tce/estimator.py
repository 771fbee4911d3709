"""Small-timescale estimation: sensing matrices, Gram analysis, multi-LS
solves, and the subspace-coefficient benchmarks.

For piece q the despread observation under beam b is
z[b,q] = W @ H_pw(q,t) @ v_b + noise, and with the column-scaling model
H_pw(q,t) = H_pw(q,0) @ diag(d) this is linear in d through the sensing
matrix A[b,q] = W @ H_pw(q,0) @ diag(v_b). Accumulating all B subframes
yields the normal equation with Gram matrix G_q = sum_b A^H A; its rank
(at most B * min(n_rf, piece rank)) dictates the minimum subframe count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import ceil

import numpy as np

from .beamtraining import PilotObservations, ReflectionSchedule
from .spectral import condition_decades

# Relative eigenvalue cutoff below which the normal equation is treated as
# singular and the solve falls back to the minimum-norm solution.
SOLVE_CUTOFF = 1e-15

# Relative eigenvalue cutoff for rank diagnostics (looser than the solver
# cutoff so reported ranks are stable under rounding noise).
RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# Sensing and Gram assembly


def sensing_matrix(
    combiner: np.ndarray, h_pw0: np.ndarray, v_b: np.ndarray
) -> np.ndarray:
    """Sensing matrix W @ H_pw0 @ diag(v_b) for one (subframe, piece) pair."""
    combiner = np.asarray(combiner)
    h_pw0 = np.asarray(h_pw0)
    v_b = np.asarray(v_b)
    if combiner.ndim != 2 or h_pw0.ndim != 2 or v_b.ndim != 1:
        raise ValueError("expected a matrix, a matrix, and a vector")
    if combiner.shape[1] != h_pw0.shape[0] or h_pw0.shape[1] != v_b.shape[0]:
        raise ValueError(
            f"dimension mismatch: combiner {combiner.shape}, piece {h_pw0.shape}, "
            f"beam {v_b.shape}"
        )
    return (combiner @ h_pw0) * v_b[None, :]


def sensing_blocks(
    schedule: ReflectionSchedule, pieces0: list[np.ndarray]
) -> np.ndarray:
    """All sensing matrices for a schedule, shape (B, Q, n_rf, m_sub)."""
    wh = np.stack([schedule.combiner @ piece for piece in pieces0], axis=0)
    # wh[q] is (n_rf, m_sub); scale columns by each beam
    return np.einsum("qrm,bm->bqrm", wh, schedule.subframe_vectors)


def beam_gram_factor(beam_matrix: np.ndarray) -> np.ndarray:
    """Beam-side factor of the Gram Hadamard identity.

    Entry (m, m') is sum_b conj(v_b(m)) * v_b(m'), i.e. the conjugate of
    the usual beam outer-product sum, which is the orientation that makes
    G_q = factor o ((W @ H)^H @ (W @ H)) hold exactly.
    """
    v = np.asarray(beam_matrix)
    return v.conj() @ v.T


def gram_matrix(
    sensing: np.ndarray | list[np.ndarray],
    factors: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Gram matrix sum_b A_b^H @ A_b of one piece's sensing stack.

    When ``factors`` supplies (beam_matrix, combined_piece) the Hadamard
    product form is cross-validated against the direct sum and a mismatch
    raises, guarding the assembly against indexing slips.
    """
    stack = np.asarray(sensing)
    if stack.ndim != 3 or stack.shape[0] < 1:
        raise ValueError("expected a nonempty stack of sensing matrices")
    flat = stack.reshape(-1, stack.shape[-1])
    gram = flat.conj().T @ flat
    gram = 0.5 * (gram + gram.conj().T)
    if factors is not None:
        beam_matrix, combined = factors
        kernel = combined.conj().T @ combined
        hadamard = beam_gram_factor(beam_matrix) * kernel
        scale = max(float(np.linalg.norm(gram)), 1e-300)
        if np.linalg.norm(gram - hadamard) > 1e-10 * scale:
            raise ValueError("Gram assembly disagrees with its Hadamard form")
    return gram


def b_min(m_ris: int, q_pieces: int, n_rf: int, ranks) -> int:
    """Minimum subframe count for an invertible normal equation.

    Each subframe contributes at most min(n_rf, piece rank) to the rank of
    a piece's Gram, which must reach m_sub = M/Q.
    """
    if m_ris < 1 or q_pieces < 1 or n_rf < 1:
        raise ValueError("inputs must be positive")
    ranks = np.atleast_1d(np.asarray(ranks, dtype=int))
    if np.any(ranks < 1):
        raise ValueError("piece ranks must be positive")
    m_sub = m_ris // q_pieces
    return max(ceil(m_sub / min(n_rf, int(r))) for r in ranks)


# ---------------------------------------------------------------------------
# Multi-LS problem and solver


@dataclass(frozen=True)
class MultiLsProblem:
    """Normal-equation data for one piece: G d = rhs.

    The stacked observation vector is kept alongside the accumulated rhs
    so the solution can be computed from the (better conditioned) stacked
    system while the diagnostics stay on the Gram.
    """

    sensing: np.ndarray       # (B, n_rf, m_sub)
    gram: np.ndarray          # (m_sub, m_sub) Hermitian PSD
    rhs: np.ndarray           # (m_sub,) accumulated sum_b A_b^H z_b
    observations: np.ndarray  # (B * n_rf,) stacked despread vectors z_b
    piece_index: int


@dataclass(frozen=True)
class SolveDiagnostics:
    condition_decades: float   # log10(eigenvalue spread), inf if singular
    rank: int                  # eigenvalue count above RANK_TOL relative
    residual_norm: float       # ||rhs - G d||, first-order optimality
    unique: bool               # False when the min-norm fallback was used


def build_problems(
    schedule: ReflectionSchedule,
    pieces0: list[np.ndarray],
    observations: PilotObservations,
) -> list[MultiLsProblem]:
    """Assemble one multi-LS problem per piece from despread observations."""
    if observations.z.shape[0] < 1:
        raise ValueError("no observations")
    stacks = sensing_blocks(schedule, pieces0)
    problems = []
    for q in range(len(pieces0)):
        stack = np.ascontiguousarray(stacks[:, q])
        z_flat = observations.z[:, q, :].reshape(-1)
        rhs = stack.reshape(-1, stack.shape[-1]).conj().T @ z_flat
        problems.append(
            MultiLsProblem(
                sensing=stack, gram=gram_matrix(stack), rhs=rhs,
                observations=z_flat, piece_index=q,
            )
        )
    return problems


def solve_multi_ls(
    problem: MultiLsProblem, ridge: float = 0.0
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Solve the normal equation of one piece.

    The returned vector is the normal-equation solution G^-1 rhs (or the
    minimum-norm least-squares solution when G is numerically singular:
    Gram eigenvalues below SOLVE_CUTOFF relative are dropped and the
    non-uniqueness flag is raised). It is computed by factoring the
    stacked sensing system rather than inverting G, which yields the same
    vector with the conditioning of the stack instead of its square. A
    positive ridge shifts every eigenvalue and always yields a unique
    (biased) solution. Diagnostics are derived from the Gram itself.
    """
    if problem.sensing.shape[0] < 1:
        raise ValueError("no observations")
    gram = problem.gram
    m_sub = gram.shape[0]
    vals = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    lmax = float(vals[-1])
    kappa = condition_decades(gram)
    rank = int(np.count_nonzero(vals > RANK_TOL * lmax)) if lmax > 0 else 0
    flat = problem.sensing.reshape(-1, m_sub)
    if ridge > 0.0:
        augmented = np.vstack([flat, np.sqrt(ridge) * np.eye(m_sub, dtype=complex)])
        target = np.concatenate([problem.observations, np.zeros(m_sub, dtype=complex)])
        d = np.linalg.lstsq(augmented, target, rcond=None)[0]
        unique = True
    else:
        keep = vals > SOLVE_CUTOFF * lmax if lmax > 0 else np.zeros_like(vals, bool)
        unique = bool(np.all(keep))
        # singular-value cutoff equivalent to the eigenvalue cutoff on G
        d = np.linalg.lstsq(
            flat, problem.observations, rcond=float(np.sqrt(SOLVE_CUTOFF))
        )[0]
    residual = float(np.linalg.norm(problem.rhs - gram @ d))
    return d, SolveDiagnostics(
        condition_decades=kappa, rank=rank, residual_norm=residual, unique=unique
    )


def estimate_small_timescale(
    schedule: ReflectionSchedule,
    pieces0: list[np.ndarray],
    observations: PilotObservations,
    ridge: float = 0.0,
) -> tuple[np.ndarray, list[SolveDiagnostics]]:
    """Full small-timescale scaling vector: solve every piece and concatenate."""
    problems = build_problems(schedule, pieces0, observations)
    parts, diags = [], []
    for problem in problems:
        d, diag = solve_multi_ls(problem, ridge=ridge)
        parts.append(d)
        diags.append(diag)
    return np.concatenate(parts), diags


# ---------------------------------------------------------------------------
# Subspace-coefficient benchmarks


@dataclass(frozen=True)
class BenchmarkEstimate:
    coefficients: list[np.ndarray]   # per piece, (r_q, m_sub)
    reconstruction: np.ndarray       # (n_bs, m_total)


def benchmark_small_timescale(
    mode: str,
    subspaces: list[np.ndarray],
    observations: np.ndarray,
    schedule: ReflectionSchedule,
    combiners: np.ndarray,
) -> BenchmarkEstimate:
    """Re-estimate per-piece coefficient matrices against known subspaces.

    The protocol sweeps every beam of the full M_sub DFT while cycling the
    combiner over ``combiners`` (stacked row blocks of a unitary matrix),
    then solves, per piece, the least-squares problem
    z[j,b,q] = W_j @ S_q @ T_q @ v_b for T_q. ``mode`` selects between the
    piecewise variant ("pwclra", any Q) and the whole-channel variant
    ("clra"), which is simply the Q=1 special case: with a single piece
    the two modes run the identical computation.
    """
    if mode not in ("pwclra", "clra"):
        raise ValueError(f"unknown benchmark mode {mode!r}")
    if mode == "clra" and len(subspaces) != 1:
        raise ValueError("clra treats the channel as a single piece (Q=1)")
    if len(subspaces) != schedule.q_pieces:
        raise ValueError("one subspace factor per piece is required")
    z = np.asarray(observations)
    if z.ndim != 4:
        raise ValueError("observations must be (combiner blocks, B, Q, n_rf)")
    j_blocks, b_obs = z.shape[0], z.shape[1]
    if b_obs < schedule.m_sub:
        raise ValueError(
            f"identifiability needs a full beam sweep: {schedule.m_sub} subframes "
            f"required, got {b_obs}"
        )
    max_rank = max(s.shape[1] for s in subspaces)
    if j_blocks * schedule.n_rf < max_rank:
        need = ceil(max_rank / schedule.n_rf)
        raise ValueError(
            f"identifiability needs at least {need} combiner blocks for subspace "
            f"rank {max_rank}, got {j_blocks}"
        )
    w_stack = combiners.reshape(j_blocks * schedule.n_rf, schedule.n_bs)
    v = schedule.beam_matrix()          # (m_sub, B) with B == m_sub: square DFT
    v_inv = v.conj().T / schedule.m_sub
    coefficients, blocks = [], []
    for q, s_q in enumerate(subspaces):
        z_q = z[:, :, q, :]                       # (J, B, n_rf)
        z_mat = z_q.transpose(0, 2, 1).reshape(-1, b_obs)
        y = z_mat @ v_inv                         # undo the beam mixing
        m_q = w_stack @ s_q
        t_hat, *_ = np.linalg.lstsq(m_q, y, rcond=None)
        coefficients.append(t_hat)
        blocks.append(s_q @ t_hat)
    return BenchmarkEstimate(
        coefficients=coefficients, reconstruction=np.concatenate(blocks, axis=1)
    )


DIAGNOSTIC_COLUMNS = [
    "seed", "piece", "t_block", "b_subframes", "b_min",
    "condition_decades", "rank", "residual_norm", "unique",
]


def write_diagnostics_csv(
    path,
    records: list[tuple[int, int, int, int, int, SolveDiagnostics]],
) -> None:
    """Append-style export of solver diagnostics, one row per solve.

    Each record is (seed, piece, t_block, b_subframes, b_min, diagnostics).
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for seed, piece, t_block, b_subframes, bmin, diag in records:
            writer.writerow(
                [
                    seed, piece, t_block, b_subframes, bmin,
                    repr(float(diag.condition_decades)), diag.rank,
                    repr(float(diag.residual_norm)), int(diag.unique),
                ]
            )
