"""How the subframe budget B controls estimability.

At the minimum budget the per-piece Gram matrices are barely full rank
and the noise blows up through their tiny eigenvalues; each extra
subframe buys decades of conditioning and a visible NMSE drop. This
script sweeps B at desk scale and prints conditioning, NMSE, and the
pilot cost side by side.
"""

import argparse

from ris2tce import (
    aggregate_condition,
    aggregate_nmse,
    preset,
    report_overhead,
    run_condition_sweep,
    run_nmse_sweep,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=30)
    parser.add_argument("--snr", type=float, default=20.0)
    args = parser.parse_args()

    config = preset("desk")
    b_values = (1, 2, 4, 6, 8)

    cond = aggregate_condition(
        run_condition_sweep(config, ("nearfield",), b_values, trials=args.trials)
    )
    nmse = {
        entry["sweep_value"]: entry
        for entry in aggregate_nmse(
            run_nmse_sweep(
                config, "overhead", list(b_values), trials=args.trials,
                snr_db=args.snr,
            )
        )
    }

    print(f"desk preset, {args.trials} trials, pilot SNR {args.snr:g} dB")
    print(f"{'B':>3} {'pilots/block':>13} {'mean cond (decades)':>20} "
          f"{'NMSE (dB)':>10}")
    for b in b_values:
        pilots = report_overhead(config, "tsp", b_subframes=b).per_block_pilots
        print(f"{b:>3} {pilots:>13} {cond[('nearfield', b)]:>20.2f} "
              f"{nmse[b]['nmse_db']:>10.2f}")
    print()
    print("B=1 cannot identify the per-piece unknowns; the minimum-norm")
    print("fallback collapses toward zero, which caps its NMSE near 0 dB")
    print("without estimating anything. B=2 is identifiable but sits right")
    print("at the rank threshold, so the near-singular Grams amplify noise")
    print("catastrophically. From there each extra subframe costs "
          f"{config.q_pieces} pilot")
    print("slots per block and buys decades of conditioning.")


if __name__ == "__main__":
    main()
