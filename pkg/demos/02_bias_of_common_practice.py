"""
Why predicted outcomes are not outcomes
=======================================

The common practice trains a predictor of the outcome from the features on
the observational sample and averages its predictions by treatment arm in
the experiment. When the features are *caused by* the outcome, that target
is generally biased -- here we build the worst-case design where the bias
has a closed form, and watch the surrogate miss while the moment-ratio
estimator does not.
"""

import numpy as np

from rsvcausal import DgpSpec, EstimateConfig, estimate_ate
from rsvcausal.baseline import bias_weight_w, surrogate_estimate
from rsvcausal.dgp import adversarial_population, gen_adversarial, population_oracle
from rsvcausal.predict import fit_predictors

# ---------------------------------------------------------------------------
# The design: a binary feature that equals the outcome half the time and is
# one otherwise. Untreated success probability a, treated b, so the true
# effect is b - a while the surrogate's target misses by (a - b) / (a + 1).
a, b = 0.6, 0.2
pop = adversarial_population(a, b)
oracle = population_oracle(pop)
print(f"true effect:              {oracle.theta:+.4f}")
print(f"surrogate target:         {oracle.theta_tilde:+.4f}")
print(f"closed-form bias:         {(a - b) / (a + 1):+.4f}")
print(f"oracle bias:              {oracle.surrogate_bias:+.4f}")

# The bias decomposes into density-ratio weights on the feature support.
w, integrated = bias_weight_w(pop)
print(f"bias weights w(r):        {np.round(w, 4)}  (1 means no distortion)")
print(f"integrated bias:          {integrated:+.4f}")

# ---------------------------------------------------------------------------
# At scale, the empirical versions land on the population values.
ds = gen_adversarial(DgpSpec(kind="adversarial", n=100_000, a=a, b=b, seed=5))
ps = fit_predictors(ds, penalty_scale=1e-8, seed=0)
tt = surrogate_estimate(ds, ps)
ours = estimate_ate(ds, EstimateConfig(bootstrap=0, seed=1)).theta_hat
print(f"\nempirical surrogate:      {tt:+.4f}   (bias {tt - oracle.theta:+.4f})")
print(f"empirical moment ratio:   {ours:+.4f}   (bias {ours - oracle.theta:+.4f})")

# Flipping (a, b) flips the sign of the bias; a = b makes it vanish.
for aa, bb in [(0.2, 0.6), (0.5, 0.5)]:
    o = population_oracle(adversarial_population(aa, bb))
    print(f"a={aa}, b={bb}: bias {o.surrogate_bias:+.4f} "
          f"(closed form {(aa - bb) / (aa + 1):+.4f})")
