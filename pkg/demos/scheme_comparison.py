"""Compare the joint design with the three frozen-variable schemes on shared channels.

For each scheme: received discriminant gain, Monte-Carlo MAP accuracy and the
feasibility audits of the returned design.

    python3 demos/scheme_comparison.py [seed]
"""
import sys

import numpy as np

from cran_infer.experiments import SCHEMES, load_plan, run_scheme, trial_instance
from cran_infer.inference import MAP_AGGREGATE, Classifier, estimate_accuracy
from cran_infer.metrics import fronthaul_matrix, fronthaul_rate, received_discriminant_gain
from cran_infer.simulate import energy_audit, transmit_power_audit


def main(seed: int = 0) -> None:
    plan = load_plan("configs/desk_capacity.toml")
    cfg = plan.config_at(4.0)
    inst = trial_instance(plan, seed, trial=0)
    A = fronthaul_matrix(cfg, inst.channels)
    print(f"C = {cfg.fronthaul_capacity} bits, E = {cfg.energy_budget} J")
    print(f"{'scheme':>10} {'gain':>8} {'accuracy':>9} {'iters':>5} {'power':>5} {'energy':>6} {'rate':>6}")
    for scheme in SCHEMES:
        sol, state = run_scheme(scheme, cfg, inst, plan.eps_stop, plan.max_iters)
        gain = received_discriminant_gain(sol, inst.stats, cfg)
        acc = estimate_accuracy(Classifier(MAP_AGGREGATE), sol, inst.stats, inst.channels, cfg, 20_000,
                                np.random.default_rng(seed))
        rate = fronthaul_rate(sol.quantization_diag, A)
        print(f"{scheme:>10} {gain:>8.4f} {acc.accuracy:>9.4f} {state.iteration:>5} "
              f"{str(transmit_power_audit(sol, inst.channels, cfg).ok):>5} "
              f"{str(energy_audit(sol, inst.channels, cfg).ok):>6} {rate:>6.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
