"""Run the alternating optimizer on one random desk-scale network and print its trace.

    python3 demos/convergence_trace.py [seed]
"""
import sys

import numpy as np

from cran_infer.model import SystemConfig
from cran_infer.sca import run_algorithm1
from cran_infer.scenario import (GeometryParams, generate_channels, noise_power_from_psd, sample_geometry,
                                 synthesize_feature_statistics)


def main(seed: int = 0) -> None:
    cfg = SystemConfig(K=5, M=2, N=2, D=4, L=3, fronthaul_capacity=8.0, max_precoding_power=0.2,
                       energy_budget=2e-3, slot_duration=1e-3, awgn_power=noise_power_from_psd(),
                       sensing_noise_power=0.1)
    rng = np.random.default_rng(seed)
    channels = generate_channels(sample_geometry(cfg, GeometryParams(), rng), cfg, rng)
    stats = synthesize_feature_statistics(cfg.L, cfg.D, 1.0, rng)

    sol, state = run_algorithm1(cfg, channels, stats)
    print(f"{'iter':>4} {'half':>4} {'subproblem':>10} {'gain':>10} {'newton':>7}")
    for row in state.trace:
        print(f"{row.iter:>4} {row.half:>4} {row.subproblem:>10} {row.objective:>10.5f} {row.newton_steps:>7}")
    print(f"converged={state.converged} after {state.iteration} iterations")
    total = sol.receive_strength.sum(axis=0)
    print("per-slot receive strength (sum over devices):", " ".join(f"{v:.3e}" for v in total))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
