"""Estimate all parameters of a simulated 4.5-hour session.

The moment estimators give the order-flow variance rate and the long-run
midprice variance rate. A grid search over (alpha^2, sigma^2), with beta
tied to the midprice moment, gives the remaining parameters, and the
fraction of wide-spread seconds gives the spread half-width.

A 30 x 30 grid keeps this to about a minute; the default 100 x 100 grid is
what ``latentprice estimate`` uses.
"""

import numpy as np

from latentprice import AxisSpec, ModelParams, SimConfig, big_sigma, estimate_session, simulate_path

truth = ModelParams(alpha=1.0, beta=0.1, sigma2=0.01, sigma_bar2=0.05, eps=0.1)
path = simulate_path(SimConfig(truth, horizon_T=16_200.0, seed=3, x0="uniform"))
print(f"true: alpha2={truth.alpha2:.3f} beta={truth.beta:.4f} sigma2={truth.sigma2:.4f} "
      f"sigma_bar2={truth.sigma_bar2:.4f} Sigma={big_sigma(truth):.5f} eps={truth.eps}")

res, mle = estimate_session(path, AxisSpec(0.3, 3.0, 30), AxisSpec(0.006, 0.03, 30))
print(f"est:  alpha2={res.alpha ** 2:.3f} beta={res.beta:.4f} sigma2={res.sigma2:.4f} "
      f"sigma_bar2={res.sigma_bar2:.4f} Sigma={res.Sigma_hat:.5f} eps={res.eps:.4f}")
print(f"{res.meta['n_candidates']} admissible candidates, {res.meta['excluded']} excluded, "
      f"{res.meta['runtime_s']:.1f}s")

# Cross-sections through the maximizer, scaled per unit time
surf = res.surface
horizon = path.horizon
at_a = surf[np.isclose(surf[:, 0], res.alpha ** 2)]
print("\nlog-likelihood per second along sigma2 at the fitted alpha2:")
for a2, s2, b, ll in at_a[:: max(1, len(at_a) // 8)]:
    print(f"  sigma2={s2:.4f} beta={b:.4f}  {ll / horizon:+.6f}")
