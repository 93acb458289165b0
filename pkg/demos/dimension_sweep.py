"""
Dimension scaling of the sensitivity estimator
==============================================

Randomly generated models are normalized so that the terminal sum of the
coordinates has unit drift and unit variance.  With the boundary
f(x) = sin(sum(x)), the baseline value is then sin(1) exp(-1/2) in every
dimension, while both sensitivity factors grow like sqrt(d).  The script
sweeps d, checks the flat value, and prints the measured growth ratios
together with the predicted operation counts.
"""

import math

import numpy as np

from kolsens import (EvalPoint, McConfig, compute_report,
                     generate_normalized_model, predicted_complexity,
                     sine_boundary, sine_v0)

DIMS = (1, 2, 4, 8, 16)
cfg = McConfig(n_steps=50, m0=50_000, m1=800, seed=0)

rows = {}
for d in DIMS:
    model = generate_normalized_model(d, 100 + d)
    point = EvalPoint(t=0.0, x=np.zeros(d))
    rows[d] = compute_report(model, sine_boundary(d), point, cfg)

v0_exact = sine_v0(1.0)
print(f"exact baseline value in every dimension: {v0_exact:.6f}")
print(f"{'d':>3} {'v0':>9} {'S_b':>9} {'S_s':>9} "
      f"{'S_b ratio':>9} {'S_s ratio':>9} {'sqrt(d)':>8} {'ops':>11}")
base = rows[DIMS[0]]
for d in DIMS:
    r = rows[d]
    ops = predicted_complexity(d, cfg.n_steps, cfg.m0, cfg.m1)
    print(f"{d:3d} {r.v0:9.5f} {r.sens_drift:9.5f} {r.sens_vol:9.5f} "
          f"{r.sens_drift / base.sens_drift:9.4f} "
          f"{r.sens_vol / base.sens_vol:9.4f} {math.sqrt(d):8.4f} {ops:11.3e}")
