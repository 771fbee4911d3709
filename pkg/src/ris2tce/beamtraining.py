"""Constant-modulus RIS reflection schedules, pilot simulation, despreading.

A training frame is organized as B subframes of Q symbols. During subframe
b, symbol i, the RIS applies the length-M reflection vector whose q-th
block of M_sub entries is sqrt(Q) * phi(q, i) * v_b, where phi is the
unitary Q-point DFT (spreading across column pieces) and v_b is a
modulus-1 DFT beam on M_sub points. The BS receives through a fixed
constant-modulus analog combiner. Despreading the Q symbols of a subframe
with phi^H separates the pieces: entry (b, q) of the despread block is
the piece-q observation under beam b.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelRealization
from .config import SystemConfig


@dataclass(frozen=True)
class ReflectionSchedule:
    """Training schedule: spreading matrix, subframe beams, analog combiner."""

    phi_q: np.ndarray             # (Q, Q) unitary DFT, entries modulus 1/sqrt(Q)
    subframe_vectors: np.ndarray  # (B, m_sub) modulus-1 DFT beams
    combiner: np.ndarray          # (n_rf, n_bs) rows of the unitary n_bs DFT
    b_subframes: int
    pilot_power: float

    @property
    def q_pieces(self) -> int:
        return self.phi_q.shape[0]

    @property
    def m_sub(self) -> int:
        return self.subframe_vectors.shape[1]

    @property
    def n_rf(self) -> int:
        return self.combiner.shape[0]

    @property
    def n_bs(self) -> int:
        return self.combiner.shape[1]

    @property
    def m_total(self) -> int:
        return self.q_pieces * self.m_sub

    def beam_matrix(self) -> np.ndarray:
        """Beams as columns: (m_sub, B)."""
        return self.subframe_vectors.T.copy()

    def reflection_vector(self, b: int, i: int) -> np.ndarray:
        """Full length-M RIS profile for subframe b, symbol i (modulus 1)."""
        blocks = (
            np.sqrt(self.q_pieces)
            * self.phi_q[:, i][:, None]
            * self.subframe_vectors[b][None, :]
        )
        return blocks.reshape(-1)


@dataclass(frozen=True)
class PilotObservations:
    """Despread observations for one block: z[b, q] is an n_rf vector."""

    z: np.ndarray          # (B, Q, n_rf)
    t_index: int
    noise_sigma: float
    pilot_power: float

    @property
    def b_subframes(self) -> int:
        return self.z.shape[0]

    @property
    def q_pieces(self) -> int:
        return self.z.shape[1]


def build_schedule(config: SystemConfig, b_subframes: int) -> ReflectionSchedule:
    """Assemble the DFT-based schedule with B subframe beams.

    Beams are the first B columns of the modulus-1 M_sub-point DFT, so they
    are mutually orthogonal; B beyond M_sub would only repeat columns and
    is rejected.
    """
    if not 1 <= b_subframes <= config.m_sub:
        raise ValueError(
            f"b_subframes must lie in [1, {config.m_sub}], got {b_subframes}"
        )
    phi = scipy.linalg.dft(config.q_pieces, scale="sqrtn")
    beams = scipy.linalg.dft(config.m_sub)[:, :b_subframes].T
    combiner = scipy.linalg.dft(config.n_bs, scale="sqrtn")[
        config.combiner_offset : config.combiner_offset + config.n_rf
    ]
    return ReflectionSchedule(
        phi_q=phi,
        subframe_vectors=beams,
        combiner=combiner,
        b_subframes=b_subframes,
        pilot_power=config.pilot_power,
    )


def combiner_bank(config: SystemConfig) -> np.ndarray:
    """All n_bs/n_rf row blocks of the unitary DFT; stacked, they form the
    complete unitary matrix. Used by protocols that cycle the combiner to
    observe the full antenna dimension."""
    full = scipy.linalg.dft(config.n_bs, scale="sqrtn")
    blocks = config.n_bs // config.n_rf
    return full.reshape(blocks, config.n_rf, config.n_bs)


def piece_signals(
    schedule: ReflectionSchedule,
    h_eff_t: np.ndarray,
    combiner: np.ndarray | None = None,
) -> np.ndarray:
    """Noise-free piece responses x[b, q] = W @ H_pw(q) @ v_b, shape (B, Q, n_rf)."""
    w = schedule.combiner if combiner is None else combiner
    wh = (w @ h_eff_t).reshape(w.shape[0], schedule.q_pieces, schedule.m_sub)
    return np.einsum("rqm,bm->bqr", wh, schedule.subframe_vectors)


def simulate_subframes(
    realization: ChannelRealization,
    schedule: ReflectionSchedule,
    t: int,
    sigma: float,
    rng: np.random.Generator,
    combiner: np.ndarray | None = None,
) -> np.ndarray:
    """Received pilot symbols, already divided by the known pilot sqrt(P).

    Returns y[b, i] (shape (B, Q, n_rf)): the combined signal for symbol i
    of subframe b plus combined noise scaled by 1/sqrt(P).
    """
    w = schedule.combiner if combiner is None else combiner
    x = piece_signals(schedule, realization.h_eff[t], combiner=combiner)
    y = np.sqrt(schedule.q_pieces) * np.einsum("bqr,qi->bir", x, schedule.phi_q)
    if sigma > 0.0:
        shape = (schedule.b_subframes, schedule.q_pieces, w.shape[1])
        noise = (
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        ) * (sigma / np.sqrt(2.0))
        y = y + np.einsum("rn,bin->bir", w, noise) / np.sqrt(schedule.pilot_power)
    return y


def despread(y_raw: np.ndarray, phi_q: np.ndarray) -> np.ndarray:
    """Per subframe, Z_b = (1/sqrt(Q)) * Y_b @ phi^H; returns z[b, q]."""
    q = phi_q.shape[0]
    return np.einsum("bir,qi->bqr", y_raw, phi_q.conj()) / np.sqrt(q)


def simulate_and_despread(
    realization: ChannelRealization,
    schedule: ReflectionSchedule,
    t: int,
    sigma: float,
    rng: np.random.Generator,
    combiner: np.ndarray | None = None,
) -> PilotObservations:
    """Simulate one block's pilot subframes with fresh noise and despread.

    With sigma = 0 the observation z[b, q] equals W @ H_pw(q, t) @ v_b
    exactly; with noise, each despread entry carries independent complex
    Gaussian perturbation of variance sigma^2 / (Q * P).
    """
    y = simulate_subframes(realization, schedule, t, sigma, rng, combiner=combiner)
    return PilotObservations(
        z=despread(y, schedule.phi_q),
        t_index=t,
        noise_sigma=sigma,
        pilot_power=schedule.pilot_power,
    )


def mean_combined_signal_power(
    realization: ChannelRealization,
    schedule: ReflectionSchedule,
    combiners: np.ndarray | None = None,
) -> float:
    """Average over all (t, b, i) slots of ||W H_t nu||^2, in closed form.

    Orthonormality of the spreading rows collapses the symbol average:
    mean_i ||W H_t nu_{b,i}||^2 = sum_q ||W H_pw(q,t) v_b||^2. When a
    combiner bank is given (cycled protocols) the average also runs over
    the bank.
    """
    if combiners is None:
        combiners = schedule.combiner[None, :, :]
    total = 0.0
    for t in range(realization.t_blocks):
        for w in combiners:
            x = piece_signals(schedule, realization.h_eff[t], combiner=w)
            total += float(np.sum(np.abs(x) ** 2)) / schedule.b_subframes
    return total / (realization.t_blocks * len(combiners))


def calibrate_noise(
    realization: ChannelRealization,
    schedule: ReflectionSchedule,
    snr_db: float,
    combiners: np.ndarray | None = None,
) -> float:
    """Per-antenna noise standard deviation sigma hitting a target pilot SNR.

    SNR is the ratio of average combined received signal power
    P * mean||W H nu||^2 over the realization's training slots to the
    combined noise power E||W n||^2 = n_rf * sigma^2. An infinite target
    returns sigma = 0.
    """
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    signal = schedule.pilot_power * mean_combined_signal_power(
        realization, schedule, combiners=combiners
    )
    if signal <= 0.0:
        raise ValueError("zero signal power over the training slots")
    snr_lin = 10.0 ** (snr_db / 10.0)
    return float(np.sqrt(signal / (schedule.n_rf * snr_lin)))


def measure_snr(
    realization: ChannelRealization,
    schedule: ReflectionSchedule,
    sigma: float,
    rng: np.random.Generator,
    noise_draws: int = 10_000,
) -> float:
    """Monte Carlo re-measurement of the pilot SNR in dB, for calibration
    cross-checks: empirical mean combined noise power against the closed
    form signal average."""
    signal = schedule.pilot_power * mean_combined_signal_power(realization, schedule)
    n = (
        rng.standard_normal((noise_draws, schedule.n_bs))
        + 1j * rng.standard_normal((noise_draws, schedule.n_bs))
    ) * (sigma / np.sqrt(2.0))
    noise_power = float(np.mean(np.sum(np.abs(n @ schedule.combiner.T) ** 2, axis=1)))
    return 10.0 * np.log10(signal / noise_power)


def full_sweep_observations(
    realization: ChannelRealization,
    config: SystemConfig,
    t: int,
    sigma: float,
    rng: np.random.Generator,
) -> tuple[ReflectionSchedule, np.ndarray]:
    """Exhaustive acquisition for one block: all M_sub beams, combiner
    cycled over every row block so the stacked combiner is unitary.

    Returns the schedule and z of shape (n_blocks, B, Q, n_rf).
    """
    schedule = build_schedule(config, config.m_sub)
    bank = combiner_bank(config)
    z = np.stack(
        [
            simulate_and_despread(realization, schedule, t, sigma, rng, combiner=w).z
            for w in bank
        ]
    )
    return schedule, z


def schedule_to_csv(schedule: ReflectionSchedule, path) -> None:
    """Export a schedule for cross-implementation comparison.

    One row per matrix entry, complex values split into re,im columns:
    spreading (Q x Q), beam b (one row per m), combiner (n_rf x n_bs).
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["component", "row", "col", "re", "im"])
        sections = [
            ("spreading", schedule.phi_q),
            ("beam", schedule.subframe_vectors),
            ("combiner", schedule.combiner),
        ]
        for name, matrix in sections:
            for i, row in enumerate(np.atleast_2d(matrix)):
                for j, value in enumerate(row):
                    writer.writerow(
                        [name, i, j, repr(float(value.real)), repr(float(value.imag))]
                    )
