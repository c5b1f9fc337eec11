"""Three ways to get the bridge drift of the same mixture potential.

The closed form is exact. The Monte Carlo estimator only needs the potential
as a function, and the Langevin (ULA) estimator only needs its gradient, which
is what an unstructured potential would provide.

    python3 demos/drift_estimators.py
"""

import numpy as np

from lightsbm import GaussianMixturePotential, drift
from lightsbm.hardsb import ULAConfig, mc_drift, mcmc_drift, phi_from_mixture


def relative(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def main():
    rng = np.random.default_rng(0)

    print("moderate eps: importance-weighted Monte Carlo")
    v = GaussianMixturePotential(1.0, rng.normal(size=3), 0.5 * rng.normal(size=(3, 2)), np.log(rng.uniform(0.5, 1, (3, 2))))
    phi = phi_from_mixture(v)
    x = np.array([0.3, -0.4])
    for t in (0.0, 0.5, 0.9):
        g = drift(v, x, t)
        errs = [relative(mc_drift(phi, x, t, v.eps, n, rng), g) for n in (1000, 10_000, 100_000)]
        print(f"  t={t:.1f}  error at n=1e3/1e4/1e5: " + " / ".join(f"{100 * e:.2f}%" for e in errs))

    print("\nsmall eps: Langevin chains on the endpoint posterior")
    ctr = rng.normal(size=2)
    v = GaussianMixturePotential(1.5e-3, rng.normal(size=3), ctr + 0.05 * rng.normal(size=(3, 2)), np.log(rng.uniform(0.2, 0.5, (3, 2))))
    phi = phi_from_mixture(v)
    x = rng.normal(size=2)
    for steps in (5, 20, 50, 200):
        g = drift(v, x, 0.3)
        est = mcmc_drift(phi, x, 0.3, v.eps, ULAConfig(n_steps=steps, step_size=1e-4, n_samples=100), rng)
        print(f"  {steps:4d} ULA steps  error {100 * relative(est, g):6.2f}%")


if __name__ == "__main__":
    main()
