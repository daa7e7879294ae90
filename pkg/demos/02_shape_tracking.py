"""Following a drifting shape parameter in a stream.

The series is simulated with a shape parameter that holds at 1.0 and then
ramps to 1.6. The batch fit on the first half only sees nu = 1.0. The
adaptive Bayesian forecaster re-estimates the shape after every observation
and follows the ramp with some lag.

Run: python demos/02_shape_tracking.py  (about 15 seconds)
"""

import numpy as np

from boundcast.evaluation import crps_values
from boundcast.forecast import Hyperparams, run_stream, train_models
from boundcast.glogit import glogit_forward
from boundcast.synth import SynthSpec, generate

phi = 0.85
theta = (float(glogit_forward(0.35, 1.0)) * (1 - phi), phi)
spec = SynthSpec(theta=theta, sigma2=3.0 * (1 - phi**2), seed=0, length=10_000, nu=1.0, nu_profile="ramp", nu_end=1.6, ramp_start=0.5)
sim = generate(spec)
x = sim.series.values

tm = train_models(x[:5000], 1, Hyperparams(), ("AR-Lnu", "Bayes", "Bayes-nu"))
print(f"batch shape estimate on the training half: {tm.nu_lnu:.3f} (true 1.0)")

streams, path = {}, None
for name, f in tm.forecasters.items():
    if name == "Bayes-nu":
        streams[name], path = run_stream(f, x[5000:], track_nu=True)
    else:
        streams[name] = run_stream(f, x[5000:])

print("\nstep   true nu   tracked nu")
for i in range(0, 5000, 500):
    print(f"{i:5d}   {sim.nu_path[5000 + i]:.3f}     {path[i]:.3f}")
print(f"{4999:5d}   {sim.nu_path[-1]:.3f}     {path[-1]:.3f}")

print("\nmean CRPS over the stream (percent of capacity)")
for name, s in streams.items():
    print(f"  {name:9s} {100 * crps_values(s).mean():.4f}")
