"""Consistency of the diffusivity-known estimators as the grid refines.

Simulates the bounded-domain solution on ``[0, pi]`` with 50 observation
times and prints the mean of the bias-corrected second-difference estimate
of ``sigma`` next to the uncorrected one.  The uncorrected column settles
near ``sqrt(2/3) * 0.1``, the corrected one near ``0.1``.

Run with ``python demos/consistency.py``; it takes a few seconds.
"""

import math

from spde_powvar import montecarlo


def main():
    corrected = montecarlo.run_consistency(montecarlo.preset_fig1())
    raw = montecarlo.run_consistency(montecarlo.preset_fig1(correct_bias=False))
    print(f"{'N':>6} {'corrected':>11} {'stderr':>9} {'uncorrected':>12}")
    for c, r in zip(corrected, raw):
        print(f"{c.n_space:>6} {c.mean:>11.5f} {c.stderr:>9.5f} {r.mean:>12.5f}")
    print(f"limits: 0.1 and {math.sqrt(2 / 3) * 0.1:.5f}")


if __name__ == "__main__":
    main()
