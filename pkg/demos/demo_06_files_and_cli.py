"""
Raw fields, checkpoints and the command line
============================================

Fields are stored as little-endian float32 with a JSON sidecar; models as
a small header plus float32 parameters.  The ``uqfield`` command chains
the whole pipeline in one working directory.
"""

import json
import tempfile
from pathlib import Path

from uqfield import (DomainSpec, NetworkConfig, generate_analytic, init_parameters, load_checkpoint,
                     load_raw_field, save_checkpoint, save_raw_field)
from uqfield.cli import main
from uqfield.io import domain_record

work = Path(tempfile.mkdtemp(prefix="uqfield_demo_"))

# a 3D field: 4x5x6 nodes x 3 components x 4 bytes
domain = DomainSpec((4, 5, 6), (-1, -1, 0), (1, 1, 2))
tornado = generate_analytic("tornado_swirl_3d", domain)
save_raw_field(tornado, work / "tornado.raw", name="tornado")
print("payload bytes:", (work / "tornado.raw").stat().st_size)
print("sidecar:", json.loads((work / "tornado.json").read_text()))
print("shape after loading:", load_raw_field(work / "tornado.raw").array.shape)

# checkpoint size is header plus 4 bytes per parameter
net = NetworkConfig.standard(3)
size = save_checkpoint(init_parameters(net, 0), {"network": net, "normalization": domain_record(domain)},
                       work / "model.ckpt")
print(f"{net.n_params()} parameters -> {size} bytes on disk")
params, cfg, header = load_checkpoint(work / "model.ckpt")
print("restored", cfg.hidden_width, "x", cfg.num_res_blocks, "blocks")

# the same steps from the command line (tiny settings so it runs fast)
tiny = ["--out-dir", str(work), "--set", "network.hidden_width=16", "--set", "network.num_res_blocks=2",
        "--set", "uq.m=10", "--epochs", "30"]
main(["gen", "--kind", "center", "--dims", "16,16", "--out-dir", str(work)])
main(["train", *tiny])
main(["metrics", *tiny])
main(["sweep", "--axis", "mc-samples", "--values", "5,10,20", *tiny])
