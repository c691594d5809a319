"""Sweep the energy budget and show that MAP accuracy tracks the received discriminant gain.

    python3 demos/gain_vs_accuracy.py
"""
import numpy as np
from scipy.stats import spearmanr

from cran_infer.experiments import load_plan, trial_instance
from cran_infer.inference import MAP_AGGREGATE, Classifier, estimate_accuracy
from cran_infer.metrics import received_discriminant_gain
from cran_infer.sca import run_algorithm1


def main() -> None:
    plan = load_plan("configs/desk_energy.toml")
    inst = trial_instance(plan, seed=1, trial=0)
    gains, accs = [], []
    for j, energy in enumerate(np.geomspace(1e-6, 1e-2, 8)):
        cfg = plan.base.replace(energy_budget=float(energy))
        sol, _ = run_algorithm1(cfg, inst.channels, inst.stats, eps_stop=plan.eps_stop)
        gains.append(received_discriminant_gain(sol, inst.stats, cfg))
        est = estimate_accuracy(Classifier(MAP_AGGREGATE), sol, inst.stats, inst.channels, cfg, 50_000,
                                np.random.default_rng(j))
        accs.append(est.accuracy)
        print(f"E = {energy:9.2e} J  gain = {gains[-1]:7.4f}  accuracy = {est.accuracy:.4f} +- {est.stderr:.4f}")
    print(f"Spearman rank correlation: {spearmanr(gains, accs).statistic:.3f}")


if __name__ == "__main__":
    main()
