"""
Deep ensembles
==============

Independently initialized and shuffled members, each trained without
dropout.  One deterministic pass per member gives one realization.
"""

from uqfield import (DomainSpec, NetworkConfig, TrainConfig, generate_analytic, mean_field, psnr,
                     sample_realizations_ensemble, train_ensemble, uncertainty_field)

domain = DomainSpec((20, 20), (-1.0, -1.0), (1.0, 1.0))
truth = generate_analytic("rankine_vortex", domain)

net = NetworkConfig(hidden_width=32, num_res_blocks=3, dropout_placement="none")
tc = TrainConfig(epochs=150, seed=7)

# member k is seeded from (7, k); jobs > 1 trains members in worker processes
members, reports = train_ensemble(truth, net, tc, members=5, jobs=1)
for k, rep in enumerate(reports):
    print(f"member {k}: final loss {rep.loss[-1]:.3e}")

rs = sample_realizations_ensemble(members, net, domain)
print(f"ensemble mean PSNR {psnr(mean_field(rs), truth):.1f} dB")
print(f"mean uncertainty {uncertainty_field(rs).data.mean():.3e}")

# any member on its own
for k in range(2):
    print(f"member {k} alone: PSNR {psnr(rs[k], truth):.1f} dB")
