#!/usr/bin/env python3
"""Run the attachment-kernel contract suite for the built-in models and the
shipped pathological demo kernels, printing one verdict line per model."""

import argparse
import sys

from pafit import kernel_contract, measures, simulator


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=20240810)
    parser.add_argument("--ns", type=int, nargs="+", default=[100, 1_000, 10_000])
    args = parser.parse_args()

    dist = measures.FiniteDiscrete([(0.5, 0.5), (1.0, 0.5)])
    lam = 2.0
    models = [
        simulator.PoissonOutdegree(),
        simulator.FixedOutdegree(),
        kernel_contract.pair_emitting_kernel(lam),
        kernel_contract.uniform_target_kernel(lam),
        kernel_contract.bursty_variance_kernel(lam),
        kernel_contract.coupled_pair_kernel(),
    ]
    rc = 0
    for model in models:
        report = kernel_contract.run_contract_suite(
            model, dist, lam, ns=tuple(args.ns), trials=args.trials, base_seed=args.seed
        )
        print(f"{report.model:16s} {report.verdicts}  c_var={report.c_var:.2f}")
        if model.label in ("poisson", "multinomial") and not report.all_pass:
            rc = 1
    return rc


if __name__ == "__main__":
    sys.exit(main())
