"""Robustness of trained states to random disturbances.

Copies of the trained Newton-Raphson and adaptive Bayesian forecasters are
disturbed multiplicatively (10% noise) in one parameter group and streamed
through the same test data. A robust method keeps nearly the same skill
whatever the disturbance.

Run: python demos/04_sensitivity.py  (about a minute)
"""

import numpy as np

from boundcast.forecast import Hyperparams, train_models
from boundcast.glogit import glogit_forward
from boundcast.harness import sensitivity_draws
from boundcast.synth import SynthSpec, generate

phi = 0.85
theta = (float(glogit_forward(0.35, 1.2)) * (1 - phi), phi)
x = generate(SynthSpec(theta=theta, sigma2=1 - phi**2, seed=4, length=3500, nu=1.2)).series.values
tm = train_models(x[:3000], 1, Hyperparams(), ("Persistence", "NR", "Bayes-nu"))

print(f"{'method':9s} {'target':7s} {'baseline':>9s} {'mean':>9s} {'sd':>9s}   (skill %, 40 draws)")
for method, target in (("NR", "mu"), ("NR", "nu"), ("Bayes-nu", "mu"), ("Bayes-nu", "nu"), ("Bayes-nu", "P")):
    base, draws = sensitivity_draws(tm, x[3000:], method, target, n_draws=40, magnitude=0.1, seed=4)
    print(f"{method:9s} {target:7s} {base:9.3f} {draws.mean():9.3f} {np.std(draws, ddof=1):9.4f}")
