"""Near-field channel synthesis with visual-region blocking, plus the
far-field sparse and Rayleigh comparison models.

The physical model: a quasi-static RIS-to-BS matrix channel H_rb and a
fast-varying user-to-RIS vector channel h_ur(t), combining into the
effective channel H_eff(t) = H_rb @ diag(h_ur(t)). LoS terms follow the
spherical-wavefront response (1/r) * exp(j*k*r) per element pair, are
masked entrywise by independent Bernoulli visual-region (VR) indicators,
and are augmented by scattered paths attenuated relative to the LoS term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .config import SystemConfig, config_from_dict
from .geometry import ArrayGeometry, distances_to_point, pairwise_distances, ula

# |h_ur(0, m)| below this fraction of the vector RMS makes the elementwise
# ratio h_ur(t)/h_ur(0) numerically meaningless; such draws are flagged.
DEGENERACY_FLOOR = 1e-12

CHANNEL_MODELS = ("nearfield", "sparse", "rayleigh", "identity")


# ---------------------------------------------------------------------------
# Near-field thresholds


def mimo_advanced_rayleigh_distance(config: SystemConfig) -> float:
    """Distance below which the joint BS/RIS aperture product makes the
    spherical-wavefront (near-field) model necessary: 4*D_bs*D_ris/lambda."""
    return 4.0 * config.aperture_bs * config.aperture_ris / config.wavelength


def mimo_rayleigh_distance(config: SystemConfig) -> float:
    """Classical two-aperture Rayleigh threshold 2*D_ris^2/lambda."""
    return 2.0 * config.aperture_ris**2 / config.wavelength


# ---------------------------------------------------------------------------
# LoS responses


def los_matrix(rx: ArrayGeometry, tx: ArrayGeometry, wave_number: float) -> np.ndarray:
    """Spherical-wavefront LoS matrix, entry (n, m) = exp(j*k*r_nm)/r_nm."""
    r = pairwise_distances(rx, tx)
    if np.any(r <= 0.0):
        raise ValueError("coincident elements: zero distance in LoS matrix")
    return np.exp(1j * wave_number * r) / r


def los_vector(geom: ArrayGeometry, point, wave_number: float) -> np.ndarray:
    """Spherical-wavefront LoS vector from a point source to one array."""
    r = distances_to_point(geom, point)
    if np.any(r <= 0.0):
        raise ValueError("source coincides with an array element")
    return np.exp(1j * wave_number * r) / r


def sample_vr(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Entrywise-independent visibility mask: 1 with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return (rng.random(shape) < p).astype(np.float64)


# ---------------------------------------------------------------------------
# Scattered (NLoS) components


def _scatterer_box(end_a, end_b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(end_a, dtype=float)
    b = np.asarray(end_b, dtype=float)
    return np.minimum(a, b), np.maximum(a, b)


def _complex_normal(rng: np.random.Generator, shape=()) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _nlos_matrix(
    rx: ArrayGeometry,
    tx: ArrayGeometry,
    wave_number: float,
    paths: int,
    attenuation_db: float,
    los_reference: np.ndarray,
    box: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
) -> np.ndarray:
    """Sum of single-bounce paths for a matrix link.

    Each path is the outer product of the two spherical-wavefront responses
    to one scatterer, rescaled so the path's Frobenius norm sits exactly
    attenuation_db below the LoS reference, then weighted by a unit-mean
    complex Gaussian gain.
    """
    out = np.zeros((rx.count, tx.count), dtype=complex)
    if paths == 0:
        return out
    ref_norm = np.linalg.norm(los_reference)
    amp = 10.0 ** (attenuation_db / 20.0) * ref_norm
    lo, hi = box
    for _ in range(paths):
        scat = rng.uniform(lo, hi)
        response = np.outer(
            los_vector(rx, scat, wave_number), los_vector(tx, scat, wave_number)
        )
        gain = _complex_normal(rng)
        out += gain * (amp / np.linalg.norm(response)) * response
    return out


def _nlos_vector(
    geom: ArrayGeometry,
    wave_number: float,
    paths: int,
    attenuation_db: float,
    los_reference: np.ndarray,
    box: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
) -> np.ndarray:
    out = np.zeros(geom.count, dtype=complex)
    if paths == 0:
        return out
    ref_norm = np.linalg.norm(los_reference)
    amp = 10.0 ** (attenuation_db / 20.0) * ref_norm
    lo, hi = box
    for _ in range(paths):
        scat = rng.uniform(lo, hi)
        response = los_vector(geom, scat, wave_number)
        gain = _complex_normal(rng)
        out += gain * (amp / np.linalg.norm(response)) * response
    return out


# ---------------------------------------------------------------------------
# Realizations


@dataclass(frozen=True)
class RisBsLink:
    """Quasi-static RIS-to-BS channel with its synthesis internals."""

    h: np.ndarray          # (n_bs, m_ris) assembled channel
    los: np.ndarray        # unmasked LoS matrix
    vr: np.ndarray         # (n_bs, m_ris) binary visibility mask
    nlos: np.ndarray       # scattered component


@dataclass(frozen=True)
class ChannelRealization:
    """One frame: a fixed RIS-BS matrix and T user-RIS vectors.

    h_eff[t] = h_rb * h_ur[t] column-scaled; the identity holds by
    construction and is re-asserted in tests.
    """

    model: str
    h_rb: np.ndarray            # (n_bs, m_ris)
    h_ur: np.ndarray            # (t_blocks, m_ris)
    h_eff: np.ndarray           # (t_blocks, n_bs, m_ris)
    vr_matrix: np.ndarray       # (n_bs, m_ris) binary
    vr_vectors: np.ndarray      # (t_blocks, m_ris) binary
    degenerate: bool            # near-zero entries in h_ur[0]
    los_rb: np.ndarray | None = None
    nlos_rb: np.ndarray | None = None
    los_ur: np.ndarray | None = None      # (t_blocks, m_ris)
    nlos_ur: np.ndarray | None = None     # (t_blocks, m_ris)
    user_depths: np.ndarray | None = None  # (t_blocks,)

    @property
    def n_bs(self) -> int:
        return self.h_rb.shape[0]

    @property
    def m_ris(self) -> int:
        return self.h_rb.shape[1]

    @property
    def t_blocks(self) -> int:
        return self.h_ur.shape[0]


def bs_array(config: SystemConfig) -> ArrayGeometry:
    return ula(config.bs_position, config.n_bs, config.element_spacing)


def ris_array(config: SystemConfig) -> ArrayGeometry:
    return ula(config.ris_position, config.m_ris, config.element_spacing)


def user_position(config: SystemConfig, depth: float) -> np.ndarray:
    y, z = config.user_lateral
    return np.array([-depth, y, z])


def sample_rb_link(config: SystemConfig, rng: np.random.Generator) -> RisBsLink:
    """Draw the quasi-static RIS-to-BS channel: masked LoS plus scattering."""
    bs = bs_array(config)
    ris = ris_array(config)
    k = config.wave_number
    los = los_matrix(bs, ris, k)
    vr = sample_vr(los.shape, config.vr_prob, rng)
    masked = los * vr
    box = _scatterer_box(config.bs_position, config.ris_position)
    nlos = _nlos_matrix(
        bs, ris, k, config.nlos_paths_rb, config.nlos_attenuation_db, masked, box, rng
    )
    return RisBsLink(h=masked + nlos, los=los, vr=vr, nlos=nlos)


def _sample_ur_block(config: SystemConfig, ris: ArrayGeometry, rng: np.random.Generator):
    lo, hi = config.user_distance_range
    depth = rng.uniform(lo, hi)
    user = user_position(config, depth)
    a = los_vector(ris, user, config.wave_number)
    f = sample_vr(a.shape, config.vr_prob, rng)
    masked = a * f
    box = _scatterer_box(user, config.ris_position)
    nlos = _nlos_vector(
        ris, config.wave_number, config.nlos_paths_ur,
        config.nlos_attenuation_db, masked, box, rng,
    )
    return masked + nlos, a, f, nlos, depth


def _is_degenerate(h0: np.ndarray) -> bool:
    rms = np.sqrt(np.mean(np.abs(h0) ** 2))
    if rms == 0.0:
        return True
    return bool(np.any(np.abs(h0) < DEGENERACY_FLOOR * rms))


def _effective_sequence(h_rb: np.ndarray, h_ur: np.ndarray) -> np.ndarray:
    return h_rb[None, :, :] * h_ur[:, None, :]


def assemble_channels(
    config: SystemConfig,
    rng: np.random.Generator,
    rb: RisBsLink | None = None,
) -> ChannelRealization:
    """Draw a full frame of the considered near-field channel.

    Passing a pre-drawn ``rb`` keeps the RIS-BS channel fixed while the
    user-RIS sequence varies, the Monte Carlo protocol used by the
    experiment harness.
    """
    if rb is None:
        rb = sample_rb_link(config, rng)
    ris = ris_array(config)
    t_blocks = config.t_blocks
    h_ur = np.zeros((t_blocks, config.m_ris), dtype=complex)
    los_ur = np.zeros_like(h_ur)
    nlos_ur = np.zeros_like(h_ur)
    vr_vecs = np.zeros((t_blocks, config.m_ris))
    depths = np.zeros(t_blocks)
    for t in range(t_blocks):
        h_ur[t], los_ur[t], vr_vecs[t], nlos_ur[t], depths[t] = _sample_ur_block(
            config, ris, rng
        )
    return ChannelRealization(
        model="nearfield",
        h_rb=rb.h,
        h_ur=h_ur,
        h_eff=_effective_sequence(rb.h, h_ur),
        vr_matrix=rb.vr,
        vr_vectors=vr_vecs,
        degenerate=_is_degenerate(h_ur[0]),
        los_rb=rb.los,
        nlos_rb=rb.nlos,
        los_ur=los_ur,
        nlos_ur=nlos_ur,
        user_depths=depths,
    )


# ---------------------------------------------------------------------------
# Comparison models


def _far_field_steering(count: int, sine: float) -> np.ndarray:
    """Planar-wavefront ULA response at half-wavelength spacing, modulus 1."""
    return np.exp(-1j * np.pi * sine * np.arange(count))


def _sparse_matrix(n: int, m: int, paths: int, att_db: float, rng) -> np.ndarray:
    h = np.zeros((n, m), dtype=complex)
    # dominant path with unit-modulus gain, scattered paths attenuated
    for ell in range(paths + 1):
        u_rx = rng.uniform(-1.0, 1.0)
        u_tx = rng.uniform(-1.0, 1.0)
        if ell == 0:
            gain = np.exp(2j * np.pi * rng.random())
        else:
            gain = 10.0 ** (att_db / 20.0) * _complex_normal(rng)
        h += gain * np.outer(_far_field_steering(n, u_rx), _far_field_steering(m, u_tx))
    return h


def _sparse_vector(m: int, paths: int, att_db: float, rng) -> np.ndarray:
    h = np.zeros(m, dtype=complex)
    for ell in range(paths + 1):
        u = rng.uniform(-1.0, 1.0)
        if ell == 0:
            gain = np.exp(2j * np.pi * rng.random())
        else:
            gain = 10.0 ** (att_db / 20.0) * _complex_normal(rng)
        h += gain * _far_field_steering(m, u)
    return h


def sample_comparison_channel(
    model: str, config: SystemConfig, rng: np.random.Generator
) -> ChannelRealization:
    """Far-field sparse or i.i.d. Rayleigh stand-ins for the rank study."""
    n, m, t_blocks = config.n_bs, config.m_ris, config.t_blocks
    if model == "sparse":
        h_rb = _sparse_matrix(n, m, config.nlos_paths_rb, config.nlos_attenuation_db, rng)
        h_ur = np.stack(
            [
                _sparse_vector(m, config.nlos_paths_ur, config.nlos_attenuation_db, rng)
                for _ in range(t_blocks)
            ]
        )
    elif model == "rayleigh":
        h_rb = _complex_normal(rng, (n, m))
        h_ur = _complex_normal(rng, (t_blocks, m))
    else:
        raise ValueError(f"unknown comparison model {model!r}")
    return ChannelRealization(
        model=model,
        h_rb=h_rb,
        h_ur=h_ur,
        h_eff=_effective_sequence(h_rb, h_ur),
        vr_matrix=np.ones((n, m)),
        vr_vectors=np.ones((t_blocks, m)),
        degenerate=_is_degenerate(h_ur[0]),
    )


def _identity_channel(config: SystemConfig) -> ChannelRealization:
    """Synthetic self-check channel whose sensing Gram is exactly B*I.

    Each piece equals the conjugate transpose of the combiner, so the
    combined piece response is the identity. Requires m_sub == n_rf.
    """
    if config.m_sub != config.n_rf:
        raise ValueError("identity model needs m_sub == n_rf")
    w = scipy.linalg.dft(config.n_bs, scale="sqrtn")[
        config.combiner_offset : config.combiner_offset + config.n_rf
    ]
    piece = w.conj().T
    h_rb = np.tile(piece, (1, config.q_pieces))
    h_ur = np.ones((config.t_blocks, config.m_ris), dtype=complex)
    return ChannelRealization(
        model="identity",
        h_rb=h_rb,
        h_ur=h_ur,
        h_eff=_effective_sequence(h_rb, h_ur),
        vr_matrix=np.ones(h_rb.shape),
        vr_vectors=np.ones(h_ur.shape),
        degenerate=False,
    )


def sample_channel(
    config: SystemConfig, model: str, rng: np.random.Generator
) -> ChannelRealization:
    """Dispatch on model name: nearfield, sparse, rayleigh, or identity."""
    if model == "nearfield":
        return assemble_channels(config, rng)
    if model in ("sparse", "rayleigh"):
        return sample_comparison_channel(model, config, rng)
    if model == "identity":
        return _identity_channel(config)
    raise ValueError(f"unknown channel model {model!r}; choose from {CHANNEL_MODELS}")


# ---------------------------------------------------------------------------
# Fixture dump


def save_realization(realization: ChannelRealization, path: str | Path) -> None:
    """Persist a realization as a compressed npz fixture."""
    arrays = {
        "h_rb": realization.h_rb,
        "h_ur": realization.h_ur,
        "h_eff": realization.h_eff,
        "vr_matrix": realization.vr_matrix,
        "vr_vectors": realization.vr_vectors,
    }
    meta = np.array(
        [realization.model, "1" if realization.degenerate else "0"], dtype=object
    )
    np.savez_compressed(path, _meta=meta, **arrays)


def load_realization(path: str | Path) -> ChannelRealization:
    with np.load(path, allow_pickle=True) as data:
        meta = data["_meta"]
        return ChannelRealization(
            model=str(meta[0]),
            h_rb=data["h_rb"],
            h_ur=data["h_ur"],
            h_eff=data["h_eff"],
            vr_matrix=data["vr_matrix"],
            vr_vectors=data["vr_vectors"],
            degenerate=meta[1] == "1",
        )
