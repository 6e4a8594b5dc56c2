"""Hybrid variance-reduced SGD on a nonconvex finite sum.

For a few horizons T the step and mixing weight are set from T, and the
average squared gradient norm over 20 seeds is compared with the guarantee.
"""
import numpy as np

from descentlab import certificates as C
from descentlab import estimators as E
from descentlab import problems as P
from descentlab import schedules as S

pb = P.random_finite_sum_quadratic(8, 5, seed=3, indefinite=True)
w0 = 2.0 * np.ones(5)
La = pb.constants.L_avg
Ts, means = (100, 300, 1000), []
for T in Ts:
    prm = C.HybridCertParams.from_horizon(La, T)
    spec = E.SgdDriverSpec(S.Constant(prm.eta), "hybrid", b=1, beta=prm.beta, inner=T)
    runs = [E.run_unified_sgd(pb, spec, w0, seed=s) for s in range(20)]
    sigma = max(E.sampling_variance(pb, w, 1) for r in runs for w in r.iterates)
    tr = C.certify_hybrid(runs, C.HybridCertParams.from_horizon(La, T, sigma_hat_sq=sigma), pb)
    means.append(tr.extras["mean"])
    print(f"T={T:5d}  mean {tr.extras['mean']:.4f}  bound {tr.extras['bound']:.4f}")
print("fitted exponent:", round(C.loglog_slope(Ts, means), 3))
