"""Stochastic estimators on a small finite sum.

Prints exact (enumerated) estimator variances at a fixed point, then runs
SGD, SVRG and SARAH for the same number of component-gradient calls.
"""
import numpy as np

from descentlab import estimators as E
from descentlab import problems as P
from descentlab import schedules as S

pb = P.random_finite_sum_quadratic(8, 4, seed=0)
w = pb.constants.w_star + 0.5

svrg = E.SVRG(1)
svrg.snapshot(pb, pb.constants.w_star + 0.6)
print("mini-batch variance:", E.minibatch_variance(pb, w, 1))
print("svrg variance near snapshot:", E.enumerate_conditional_variance(svrg, pb, w))

eta = 0.1 / pb.constants.L_avg
specs = {
    "sgd": E.SgdDriverSpec(S.Constant(eta), "minibatch", inner=400),
    "svrg": E.SgdDriverSpec(S.Constant(eta), "svrg", stages=10, inner=16),
    "sarah": E.SgdDriverSpec(S.Constant(eta), "sarah", stages=10, inner=16),
}
for name, spec in specs.items():
    run = E.run_unified_sgd(pb, spec, np.zeros(4), seed=1)
    print(f"{name:6s} calls {int(run.oracle_component_grads[-1]):4d}  final gap {run.F_gap[-1]:.3e}")
