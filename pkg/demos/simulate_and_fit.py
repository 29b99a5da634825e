"""Simulate an LNTACARR(1,1,1) path, fit it, and look at the residuals.

Run with ``python demos/simulate_and_fit.py``. Takes a few seconds.
"""
import numpy as np

from tacarr import FitOptions, ModelSpec, ParamVector, SimConfig, fit, ks_test, ljung_box, simulate_path

spec = ModelSpec.parse("LNTACARR(1,1,1)")
truth = ParamVector.tacarr((0.01, 0.10, 0.80), (0.10, 0.20, 0.70), (0.25, 0.64))

sim = simulate_path(SimConfig(spec, truth, T=3000, seed=42))
ranges = sim.ranges
print(f"simulated {len(ranges)} days, mean range {ranges.r.mean():.3f}, "
      f"share of Up regimes {np.mean(sim.branch[1:] == 0):.2f}")

res = fit(ranges, spec, FitOptions(seed=1))
print(res.summary())
print()
print(f"{'parameter':<10s} {'true':>8s} {'estimate':>9s} {'s.e.':>8s}")
true = truth.to_dict(spec)
for name, value in res.param_dict.items():
    print(f"{name:<10s} {true[name]:8.4f} {value:9.4f} {res.std_errors[name]:8.4f}")

# the residuals should look like i.i.d. mean-one lognormal draws
print()
print(ks_test(res.residuals, "lognormal", res.params.theta2, mode="per-regime"))
print(ljung_box(res.residuals.values, 22))

# the same data under exponential innovations: the KS test rejects
wrong = fit(ranges, ModelSpec.parse("ETACARR(1,1,1)"), FitOptions(seed=1, compute_se=False))
print()
print(f"ETACARR llf {wrong.llf:.1f} vs LNTACARR llf {res.llf:.1f}")
print(ks_test(wrong.residuals, "exponential"))
