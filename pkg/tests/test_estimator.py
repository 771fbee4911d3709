"""Sensing matrices, Gram analysis, the multi-LS solver, and benchmarks.

Linear-algebra identities are certified against explicit loops and
handmade rank-deficient constructions; the solver is certified against
ground-truth scaling vectors it has never seen.
"""

from dataclasses import replace

import numpy as np
import pytest

from ris2tce import (
    b_min,
    beam_gram_factor,
    benchmark_small_timescale,
    build_problems,
    build_schedule,
    calibrate_noise,
    cap_condition,
    combiner_bank,
    estimate_small_timescale,
    full_sweep_observations,
    gram_matrix,
    low_rank_decompose,
    sensing_blocks,
    sensing_matrix,
    simulate_and_despread,
    small_timescale_truth,
    solve_multi_ls,
    write_diagnostics_csv,
)
from ris2tce.channel import assemble_channels
from ris2tce.estimator import DIAGNOSTIC_COLUMNS, RANK_TOL, SolveDiagnostics


def _random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _random_phases(rng, shape):
    return np.exp(2j * np.pi * rng.random(shape))


class TestSensingMatrix:
    def test_all_ones_beam_reduces_to_combined_piece(self):
        rng = np.random.default_rng(0)
        w = _random_complex(rng, (3, 6))
        h = _random_complex(rng, (6, 5))
        a = sensing_matrix(w, h, np.ones(5, dtype=complex))
        assert np.array_equal(a, w @ h)

    def test_commutes_scaling_onto_the_beam(self):
        # A @ d must equal W @ H @ diag(d) @ v for every scaling vector
        rng = np.random.default_rng(1)
        w = _random_complex(rng, (4, 7))
        h = _random_complex(rng, (7, 6))
        v = _random_phases(rng, 6)
        a = sensing_matrix(w, h, v)
        for _ in range(100):
            d = _random_complex(rng, 6)
            direct = w @ (h @ (d * v))
            assert np.linalg.norm(a @ d - direct) < 1e-12 * np.linalg.norm(direct)

    def test_full_scale_shape(self, paper_config):
        schedule = build_schedule(paper_config, 2)
        piece = _random_complex(np.random.default_rng(2), (128, 32))
        a = sensing_matrix(schedule.combiner, piece, schedule.subframe_vectors[0])
        assert a.shape == (16, 32)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="dimension mismatch"):
            sensing_matrix(
                _random_complex(rng, (3, 5)),
                _random_complex(rng, (6, 4)),
                np.ones(4, dtype=complex),
            )
        with pytest.raises(ValueError, match="matrix, a matrix, and a vector"):
            sensing_matrix(
                _random_complex(rng, (3, 5)),
                _random_complex(rng, (5, 4)),
                np.ones((4, 1), dtype=complex),
            )

    def test_block_stack_matches_pairwise_assembly(self, desk_config, desk_realization):
        schedule = build_schedule(desk_config, 3)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        stacks = sensing_blocks(schedule, decomp.pieces)
        assert stacks.shape == (
            3, desk_config.q_pieces, desk_config.n_rf, desk_config.m_sub
        )
        for b in range(3):
            for q in range(desk_config.q_pieces):
                direct = sensing_matrix(
                    schedule.combiner, decomp.pieces[q], schedule.subframe_vectors[b]
                )
                assert np.linalg.norm(stacks[b, q] - direct) < 1e-12 * np.linalg.norm(
                    direct
                )


class TestGramMatrix:
    def test_identity_sensing_gives_identity(self):
        stack = np.eye(4, dtype=complex)[None, :, :]
        assert np.allclose(gram_matrix(stack), np.eye(4), atol=1e-15)

    def test_matches_explicit_accumulation(self):
        rng = np.random.default_rng(4)
        stack = _random_complex(rng, (5, 3, 7))
        oracle = np.zeros((7, 7), dtype=complex)
        for a in stack:
            oracle += a.conj().T @ a
        gram = gram_matrix(stack)
        assert np.linalg.norm(gram - oracle) < 1e-10 * np.linalg.norm(oracle)

    def test_hermitian_and_psd(self):
        stack = _random_complex(np.random.default_rng(5), (3, 4, 6))
        gram = gram_matrix(stack)
        assert np.array_equal(gram, gram.conj().T)
        vals = np.linalg.eigvalsh(gram)
        assert vals.min() > -1e-12 * vals.max()

    def test_hadamard_identity_cross_validates(self, desk_config, desk_realization):
        schedule = build_schedule(desk_config, 3)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        stacks = sensing_blocks(schedule, decomp.pieces)
        for q in range(desk_config.q_pieces):
            combined = schedule.combiner @ decomp.pieces[q]
            gram = gram_matrix(
                stacks[:, q], factors=(schedule.beam_matrix(), combined)
            )
            direct = gram_matrix(stacks[:, q])
            assert np.allclose(gram, direct)

    def test_wrong_factors_rejected(self, desk_config, desk_realization):
        schedule = build_schedule(desk_config, 3)
        other = build_schedule(desk_config, 5)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        stacks = sensing_blocks(schedule, decomp.pieces)
        combined = schedule.combiner @ decomp.pieces[0]
        with pytest.raises(ValueError, match="Hadamard"):
            gram_matrix(stacks[:, 0], factors=(other.beam_matrix(), combined))

    def test_empty_stack_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            gram_matrix(np.zeros((0, 3, 3), dtype=complex))

    def test_beam_factor_orientation(self):
        v = _random_phases(np.random.default_rng(6), (4, 3)).T   # (m_sub=4? no
        factor = beam_gram_factor(v)
        oracle = np.zeros((v.shape[0], v.shape[0]), dtype=complex)
        for b in range(v.shape[1]):
            oracle += np.outer(v[:, b].conj(), v[:, b])
        assert np.allclose(factor, oracle)

    def test_rank_bound_on_random_instances(self):
        # rank(G) <= B * min(n_rf, piece rank) across 100 draws
        rng = np.random.default_rng(7)
        for _ in range(100):
            n_rf = int(rng.integers(2, 4))
            r = int(rng.integers(1, 4))
            b_count = int(rng.integers(1, 4))
            piece = _random_complex(rng, (5, r)) @ _random_complex(rng, (r, 6))
            w = _random_complex(rng, (n_rf, 5))
            stack = np.stack(
                [
                    sensing_matrix(w, piece, _random_phases(rng, 6))
                    for _ in range(b_count)
                ]
            )
            vals = np.linalg.eigvalsh(gram_matrix(stack))
            rank = int(np.count_nonzero(vals > 1e-10 * vals.max()))
            assert rank <= b_count * min(n_rf, r)


class TestBMin:
    def test_full_scale_value(self):
        assert b_min(512, 16, 16, [16] * 16) == 2

    def test_rank_one_needs_every_beam(self):
        assert b_min(512, 16, 16, [1] * 16) == 32

    def test_chain_limited_by_rf_count(self):
        assert b_min(512, 16, 8, [16] * 16) == 4

    def test_desk_value(self):
        assert b_min(128, 8, 8, [16] * 8) == 2

    def test_worst_piece_dominates(self):
        assert b_min(128, 8, 8, [16, 16, 2, 16, 16, 16, 16, 16]) == 8

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            b_min(0, 8, 8, [4])
        with pytest.raises(ValueError, match="ranks must be positive"):
            b_min(128, 8, 8, [4, 0])


class TestMultiLsSolve:
    def test_noiseless_recovery_at_twice_the_minimum(
        self, desk_config, desk_realization
    ):
        schedule = build_schedule(desk_config, 4)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        obs = simulate_and_despread(
            desk_realization, schedule, 2, 0.0, np.random.default_rng(0)
        )
        d_hat, diags = estimate_small_timescale(schedule, decomp.pieces, obs)
        truth = small_timescale_truth(
            desk_realization.h_ur[0], desk_realization.h_ur[2]
        )
        assert np.linalg.norm(d_hat - truth) < 1e-8 * np.linalg.norm(truth)
        problems = build_problems(schedule, decomp.pieces, obs)
        for diag, problem in zip(diags, problems):
            assert diag.unique
            assert diag.rank == desk_config.m_sub
            assert diag.residual_norm <= 1e-8 * np.linalg.norm(problem.rhs)

    def test_reconstruction_error_is_deeply_negative(
        self, desk_config, desk_realization
    ):
        from ris2tce import reconstruct_effective

        schedule = build_schedule(desk_config, 4)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        obs = simulate_and_despread(
            desk_realization, schedule, 3, 0.0, np.random.default_rng(0)
        )
        d_hat, _ = estimate_small_timescale(schedule, decomp.pieces, obs)
        rebuilt = reconstruct_effective(decomp, d_hat)
        target = desk_realization.h_eff[3]
        nmse = np.linalg.norm(rebuilt - target) ** 2 / np.linalg.norm(target) ** 2
        assert 10.0 * np.log10(nmse) < -100.0

    def test_starved_schedule_flags_non_uniqueness(
        self, desk_config, desk_realization
    ):
        schedule = build_schedule(desk_config, 1)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        obs = simulate_and_despread(
            desk_realization, schedule, 1, 0.0, np.random.default_rng(0)
        )
        _, diags = estimate_small_timescale(schedule, decomp.pieces, obs)
        for diag in diags:
            assert not diag.unique
            assert diag.rank < desk_config.m_sub
            assert np.isinf(diag.condition_decades)

    def test_ridge_restores_uniqueness(self, desk_config, desk_realization):
        schedule = build_schedule(desk_config, 1)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        obs = simulate_and_despread(
            desk_realization, schedule, 1, 0.0, np.random.default_rng(0)
        )
        problems = build_problems(schedule, decomp.pieces, obs)
        _, diag = solve_multi_ls(problems[0], ridge=1e-6)
        assert diag.unique

    def test_minimum_norm_solution_on_singular_gram(self):
        # a single-subframe problem built by hand: the solver must return
        # the pseudoinverse solution, not blow up
        rng = np.random.default_rng(8)
        stack = _random_complex(rng, (1, 2, 5))
        flat = stack[0]
        z = _random_complex(rng, 2)
        rhs = flat.conj().T @ z
        from ris2tce import MultiLsProblem

        problem = MultiLsProblem(
            sensing=stack, gram=gram_matrix(stack), rhs=rhs,
            observations=z, piece_index=0,
        )
        d, diag = solve_multi_ls(problem)
        expected = np.linalg.pinv(problem.gram) @ rhs
        assert np.linalg.norm(d - expected) < 1e-8 * np.linalg.norm(expected)
        assert not diag.unique

    def test_error_bounded_by_inverse_gram_times_rhs_gap(
        self, desk_config, desk_realization
    ):
        # perturbation bound: ||d_noisy - d_clean|| <= ||G^-1|| ||rhs gap||
        schedule = build_schedule(desk_config, 4)
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        sigma = calibrate_noise(desk_realization, schedule, 10.0)
        clean = simulate_and_despread(
            desk_realization, schedule, 1, 0.0, np.random.default_rng(0)
        )
        noisy = simulate_and_despread(
            desk_realization, schedule, 1, sigma, np.random.default_rng(1)
        )
        problems_clean = build_problems(schedule, decomp.pieces, clean)
        problems_noisy = build_problems(schedule, decomp.pieces, noisy)
        for p_clean, p_noisy in zip(problems_clean, problems_noisy):
            d_clean, _ = solve_multi_ls(p_clean)
            d_noisy, _ = solve_multi_ls(p_noisy)
            lam_min = np.linalg.eigvalsh(p_clean.gram).min()
            gap = np.linalg.norm(p_noisy.rhs - p_clean.rhs)
            bound = gap / lam_min
            assert np.linalg.norm(d_noisy - d_clean) <= bound * (1.0 + 1e-8)

    def test_gram_rank_saturates_at_the_minimum_subframe_count(self, paper_config):
        # across 50 full-scale seeds the minimum schedule always yields
        # full-rank normal equations, and one subframe fewer never does
        full, deficient = 0, 0
        for seed in range(50):
            realization = assemble_channels(paper_config, np.random.default_rng(seed))
            if realization.degenerate:
                continue
            decomp = low_rank_decompose(realization.h_eff[0], paper_config.q_pieces)
            needed = b_min(
                paper_config.m_ris, paper_config.q_pieces, paper_config.n_rf,
                decomp.ranks,
            )
            assert needed == 2
            for b_count, tally in ((needed, "full"), (needed - 1, "deficient")):
                schedule = build_schedule(paper_config, b_count)
                stacks = sensing_blocks(schedule, decomp.pieces)
                for q in range(paper_config.q_pieces):
                    vals = np.linalg.eigvalsh(gram_matrix(stacks[:, q]))
                    rank = int(np.count_nonzero(vals > RANK_TOL * vals.max()))
                    if tally == "full":
                        assert rank == paper_config.m_sub
                        full += 1
                    else:
                        assert rank < paper_config.m_sub
                        deficient += 1
        assert full and deficient

    def test_conditioning_improves_with_subframes(self, desk_config):
        # 50-seed average of capped condition decades is non-increasing
        # over B in {2, 4, 6}
        means = []
        for b_count in (2, 4, 6):
            schedule = build_schedule(desk_config, b_count)
            values = []
            for seed in range(50):
                realization = assemble_channels(
                    desk_config, np.random.default_rng(seed)
                )
                if realization.degenerate:
                    continue
                decomp = low_rank_decompose(
                    realization.h_eff[0], desk_config.q_pieces
                )
                stacks = sensing_blocks(schedule, decomp.pieces)
                from ris2tce import condition_decades

                for q in range(desk_config.q_pieces):
                    values.append(
                        cap_condition(condition_decades(gram_matrix(stacks[:, q])))
                    )
            means.append(np.mean(values))
        assert means[0] >= means[1] - 1e-9
        assert means[1] >= means[2] - 1e-9


class TestBenchmarks:
    def test_noiseless_piecewise_estimate_is_exact(self, desk_config, desk_realization):
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        schedule, z = full_sweep_observations(
            desk_realization, desk_config, 1, 0.0, np.random.default_rng(0)
        )
        bank = combiner_bank(desk_config)
        estimate = benchmark_small_timescale(
            "pwclra", decomp.subspaces, z, schedule, bank
        )
        target = desk_realization.h_eff[1]
        assert (
            np.linalg.norm(estimate.reconstruction - target)
            < 1e-8 * np.linalg.norm(target)
        )
        m_sub = desk_config.m_sub
        for q, (s_q, t_hat) in enumerate(
            zip(decomp.subspaces, estimate.coefficients)
        ):
            block = target[:, q * m_sub : (q + 1) * m_sub]
            projected = s_q.conj().T @ block
            assert np.linalg.norm(t_hat - projected) < 1e-8 * np.linalg.norm(projected)

    def test_single_piece_modes_coincide_exactly(self, desk_config, desk_realization):
        config = replace(desk_config, q_pieces=1)
        decomp = low_rank_decompose(desk_realization.h_eff[0], 1)
        schedule, z = full_sweep_observations(
            desk_realization, config, 1, 0.0, np.random.default_rng(0)
        )
        bank = combiner_bank(config)
        pw = benchmark_small_timescale("pwclra", decomp.subspaces, z, schedule, bank)
        cl = benchmark_small_timescale("clra", decomp.subspaces, z, schedule, bank)
        assert np.array_equal(pw.reconstruction, cl.reconstruction)
        assert np.array_equal(pw.coefficients[0], cl.coefficients[0])

    def test_unknown_mode_rejected(self, desk_config, desk_realization):
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        schedule, z = full_sweep_observations(
            desk_realization, desk_config, 1, 0.0, np.random.default_rng(0)
        )
        with pytest.raises(ValueError, match="unknown benchmark mode"):
            benchmark_small_timescale(
                "tsp", decomp.subspaces, z, schedule, combiner_bank(desk_config)
            )

    def test_clra_requires_a_single_piece(self, desk_config, desk_realization):
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        schedule, z = full_sweep_observations(
            desk_realization, desk_config, 1, 0.0, np.random.default_rng(0)
        )
        with pytest.raises(ValueError, match="single piece"):
            benchmark_small_timescale(
                "clra", decomp.subspaces, z, schedule, combiner_bank(desk_config)
            )

    def test_partial_beam_sweep_rejected(self, desk_config, desk_realization):
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        schedule, z = full_sweep_observations(
            desk_realization, desk_config, 1, 0.0, np.random.default_rng(0)
        )
        with pytest.raises(ValueError, match="full beam sweep"):
            benchmark_small_timescale(
                "pwclra", decomp.subspaces, z[:, :8], schedule,
                combiner_bank(desk_config),
            )

    def test_insufficient_combiner_blocks_rejected(self, desk_config, desk_realization):
        decomp = low_rank_decompose(desk_realization.h_eff[0], desk_config.q_pieces)
        schedule, z = full_sweep_observations(
            desk_realization, desk_config, 1, 0.0, np.random.default_rng(0)
        )
        bank = combiner_bank(desk_config)
        with pytest.raises(ValueError, match="combiner blocks"):
            benchmark_small_timescale(
                "pwclra", decomp.subspaces, z[:1], schedule, bank[:1]
            )


class TestDiagnosticsExport:
    def test_round_trip(self, tmp_path):
        records = [
            (0, 0, 1, 4, 2, SolveDiagnostics(1.25, 16, 3.5e-12, True)),
            (0, 1, 1, 4, 2, SolveDiagnostics(float("inf"), 8, 0.5, False)),
        ]
        path = tmp_path / "diag.csv"
        write_diagnostics_csv(path, records)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(DIAGNOSTIC_COLUMNS)
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[:5] == ["0", "0", "1", "4", "2"]
        assert float(first[5]) == 1.25
        assert first[8] == "1"
        second = lines[2].split(",")
        assert second[5] == "inf"
        assert second[8] == "0"

    def test_deterministic_bytes(self, tmp_path):
        records = [(3, 2, 1, 6, 2, SolveDiagnostics(0.75, 16, 1e-9, True))]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_diagnostics_csv(a, records)
        write_diagnostics_csv(b, records)
        assert a.read_bytes() == b.read_bytes()
