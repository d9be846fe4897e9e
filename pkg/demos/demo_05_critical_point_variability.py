"""
Critical points and their spatial variability
=============================================

Zeros of each realization's interpolant are found cell by cell and
classified from the Jacobian eigenvalues.  Pooling detections over all
realizations gives the variability field, bright where detections scatter.
"""

import numpy as np

from uqfield import (DomainSpec, NetworkConfig, TrainConfig, detect_critical_points, from_function,
                     mean_field, sample_realizations_mcdropout, train_single_model, variability_field)

# v = (y, x - x^2) has a saddle at (0, 0) and a center at (1, 0)
domain = DomainSpec((31, 21), (-1.0, -1.0), (2.0, 1.0))
truth = from_function(lambda x: np.column_stack([x[:, 1], x[:, 0] - x[:, 0] ** 2]), domain)
for cp in detect_critical_points(truth):
    print("ground truth:", cp.kind, np.round(cp.position, 6))

net = NetworkConfig(hidden_width=48, num_res_blocks=4)
params, _ = train_single_model(truth, net, TrainConfig(epochs=300, seed=3))
rs = sample_realizations_mcdropout(params, net, domain, m=40, seed=0)

# a center is structurally fragile: a tiny reconstruction error gives its
# eigenvalues a nonzero real part, so it often comes back as a weak spiral
for cp in detect_critical_points(mean_field(rs)):
    print("mean field:  ", cp.kind, np.round(cp.position, 4))

# pool detections from every realization
pooled = [cp.position for f in rs.realizations for cp in detect_critical_points(f, classify=False)]
var = variability_field(pooled, domain)
print(f"{len(pooled)} detections in {rs.m} realizations")
peak = np.argmax(var.data)
print("brightest node:", domain.lo + np.unravel_index(peak, domain.shape())[::-1] * domain.spacing)
