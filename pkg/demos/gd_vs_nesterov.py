"""Compare gradient descent and accelerated gradient on an ill-conditioned quadratic.

Both runs are checked against their potential-function certificates and the
final gaps are printed next to the closed-form bounds.
"""
import numpy as np

from descentlab import certificates as C
from descentlab import methods as M
from descentlab import problems as P
from descentlab import schedules as S

pb = P.random_quadratic(20, cond=1e3, seed=11)
w0 = np.ones(20)
L = pb.constants.L
T = 2000

gd = M.run_deterministic(pb, M.GD(), S.Constant(1.0 / L), w0, T)
nest = M.run_nesterov(pb, "half_shift", w0, T)

for name, run, scheme in (("gd", gd, "gd_convex"), ("nesterov", nest, "nesterov_convex")):
    tr = C.certify_deterministic(run, pb, scheme)
    print(f"{name:9s} gap {run.F_gap[-1]:.3e}  bound {tr.bound[-1]:.3e}  min slack {tr.min_slack:.2e}")

t = np.arange(1, T + 1, dtype=float)
print("fitted slopes over the second half:",
      round(C.fit_rate(gd.F_gap[1:], 0.5, t=t), 3), round(C.fit_rate(nest.F_gap[1:], 0.5, t=t), 3))
