"""Command line harness.

Subcommands share a working directory (``--out-dir``, the config's
``output.dir`` or ``$UQFIELD_OUTPUT_DIR``) so they chain without extra
arguments::

    uqfield gen --kind center --dims 64,64
    uqfield train
    uqfield metrics

Default file names inside the working directory:

    field.raw/.json            ground truth (gen)
    model.ckpt                 MC dropout model (train)
    ensemble/member_NNN.ckpt   ensemble members (train-ensemble)
    mean.raw, uncertainty.raw  reconstruct / uncertainty
    error.raw                  error
    streamlines.json/.obj      streamlines
    critpoints.json            critpoints
    variability.raw            variability
    metrics.txt/.json          metrics
    sweep.txt/.json            sweep
    timing_<command>.json      wall-clock seconds per phase
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import flow, metrics, uq
from .errors import ConfigError, UQFieldError
from .field import ANALYTIC_KINDS, DomainSpec, generate_analytic
from .io import (RunConfig, checkpoint_domain, domain_record, export_streamline_bundles, load_checkpoint,
                 load_raw_field, save_checkpoint, save_raw_field)
from .network import NetworkConfig, canonical_placement
from .training import TrainConfig, member_seed, train_ensemble, train_single_model

log = logging.getLogger("uqfield")

SWEEP_AXES = ("mc-samples", "members", "p-test", "placement", "depth")


class Timer:
    def __init__(self):
        self.phases = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _write_json(path, doc):
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# pipeline pieces shared by subcommands

def network_for(cfg: RunConfig, domain: DomainSpec, **overrides) -> NetworkConfig:
    return cfg.network.build(domain.ndim, **overrides)


def train_config_for(cfg: RunConfig, **overrides) -> TrainConfig:
    return TrainConfig(**{**asdict(cfg.train), **overrides})


def checkpoint_header(net, domain, train_cfg, **extra):
    return {"network": net, "normalization": domain_record(domain), "seed": train_cfg.seed,
            "train": train_cfg.to_dict(), **extra}


def realization_set(cfg: RunConfig, workdir: Path, m=None, p_test=None, members=None):
    """Realizations from the trained model(s) of the configured UQ method."""
    if cfg.uq.method == "mcdropout":
        params, net, head = load_checkpoint(workdir / "model.ckpt")
        domain = checkpoint_domain(head)
        return uq.sample_realizations_mcdropout(
            params, net, domain, m or cfg.uq.m,
            cfg.uq.p_test if p_test is None else p_test, cfg.uq.seed, cfg.train.batch_size)
    paths = sorted((workdir / "ensemble").glob("member_*.ckpt"))
    if not paths:
        raise ConfigError(f"no ensemble members under {workdir / 'ensemble'}; run train-ensemble first")
    if members is not None:
        paths = paths[:members]
    loaded = [load_checkpoint(p) for p in paths]
    domain = checkpoint_domain(loaded[0][2])
    return uq.sample_realizations_ensemble([p for p, _, _ in loaded], loaded[0][1], domain,
                                           cfg.train.batch_size)


def model_bytes(cfg, workdir):
    if cfg.uq.method == "mcdropout":
        paths = [workdir / "model.ckpt"]
    else:
        paths = sorted((workdir / "ensemble").glob("member_*.ckpt"))
    return sum(p.stat().st_size for p in paths)


def reconstruction_metrics(rs, truth) -> dict:
    mean = uq.mean_field(rs)
    out = {"psnr_db": metrics.psnr(mean, truth), "rmse": metrics.rmse(mean, truth),
           "mean_abs_error": float(uq.error_field(mean, truth).data.mean())}
    if rs.m >= 2:
        unc = uq.uncertainty_field(rs).data
        out.update(mean_uncertainty=float(unc.mean()), max_uncertainty=float(unc.max()))
    return out


def streamline_seeds(cfg: RunConfig, domain: DomainSpec, count=None):
    if cfg.flow.seeds is not None and count is None:
        seeds = np.asarray(cfg.flow.seeds, dtype=float).reshape(-1, domain.ndim)
        return seeds
    return flow.random_seeds(domain, cfg.flow.random_seeds if count is None else count, cfg.flow.seed)


# --------------------------------------------------------------------------
# subcommands

def cmd_gen(args, cfg, workdir, timer):
    dims = _ints(args.dims)
    if args.min or args.max:
        domain = DomainSpec(dims, _floats(args.min), _floats(args.max))
    elif args.kind in ("center", "saddle", "source", "sink", "rankine_vortex", "tornado_swirl_3d"):
        domain = DomainSpec(dims, (-1.0,) * len(dims), (1.0,) * len(dims))
    else:
        domain = DomainSpec(dims, (0.0,) * len(dims), (2.0,) + (1.0,) * (len(dims) - 1))
    params = {}
    for item in args.param or []:
        key, _, val = item.partition("=")
        params[key] = json.loads(val)
    with timer("generate"):
        f = generate_analytic(args.kind, domain, **params)
    out = Path(args.out) if args.out else workdir / "field.raw"
    with timer("write"):
        save_raw_field(f, out, name=args.kind)
    print(f"wrote {out} ({args.kind}, dims {list(dims)})")


def _load_truth(args, workdir):
    return load_raw_field(Path(args.field) if getattr(args, "field", None) else workdir / "field.raw")


def cmd_train(args, cfg, workdir, timer):
    with timer("load"):
        f = _load_truth(args, workdir)
    net = network_for(cfg, f.domain)
    if net.dropout_placement == "none":
        log.warning("dropout placement is 'none'; the model cannot produce MC dropout samples")
    tc = train_config_for(cfg)
    with timer("train"):
        params, report = train_single_model(f, net, tc, callback=_progress(tc.epochs))
    out = Path(args.out) if args.out else workdir / "model.ckpt"
    with timer("write"):
        size = save_checkpoint(params, checkpoint_header(net, f.domain, tc, method="mcdropout"), out)
    _write_json(workdir / "train_report.json", {"loss": report.loss, "learning_rate": report.learning_rate})
    print(f"wrote {out} ({size} bytes, final loss {report.loss[-1] if report.loss else float('nan'):.3e})")


def cmd_train_ensemble(args, cfg, workdir, timer):
    with timer("load"):
        f = _load_truth(args, workdir)
    members = args.members or cfg.uq.members
    net = network_for(cfg, f.domain, dropout_placement="none")
    tc = train_config_for(cfg)
    with timer("train"):
        plist, reports = train_ensemble(f, net, tc, members, jobs=args.jobs)
    outdir = workdir / "ensemble"
    outdir.mkdir(parents=True, exist_ok=True)
    for old in outdir.glob("member_*.ckpt"):
        old.unlink()
    with timer("write"):
        for k, p in enumerate(plist):
            save_checkpoint(p, checkpoint_header(net, f.domain, replace(tc, seed=member_seed(tc.seed, k)),
                                                 method="ensemble", member=k, base_seed=tc.seed),
                            outdir / f"member_{k:03d}.ckpt")
    _write_json(workdir / "train_ensemble_report.json", {"loss": [r.loss for r in reports]})
    print(f"wrote {members} members to {outdir}")


def cmd_reconstruct(args, cfg, workdir, timer):
    with timer("inference"):
        rs = realization_set(cfg, workdir)
    with timer("reduce"):
        mean = uq.mean_field(rs)
    with timer("write"):
        save_raw_field(mean, workdir / "mean.raw", name="mean")
        if rs.m >= 2:
            save_raw_field(uq.uncertainty_field(rs), workdir / "uncertainty.raw", name="uncertainty")
    print(f"wrote {workdir / 'mean.raw'} from {rs.m} {rs.source} realizations")


def cmd_uncertainty(args, cfg, workdir, timer):
    with timer("inference"):
        rs = realization_set(cfg, workdir)
    with timer("reduce"):
        unc = uq.uncertainty_field(rs)
    with timer("write"):
        save_raw_field(unc, workdir / "uncertainty.raw", name="uncertainty")
    print(f"wrote {workdir / 'uncertainty.raw'} (mean {unc.data.mean():.4g}, max {unc.data.max():.4g})")


def cmd_error(args, cfg, workdir, timer):
    with timer("load"):
        pred = load_raw_field(Path(args.pred) if args.pred else workdir / "mean.raw")
        truth = _load_truth(args, workdir)
    with timer("reduce"):
        err = uq.error_field(pred, truth)
    with timer("write"):
        save_raw_field(err, workdir / "error.raw", name="error")
    print(f"wrote {workdir / 'error.raw'} (mean {err.data.mean():.4g}, max {err.data.max():.4g})")


def cmd_streamlines(args, cfg, workdir, timer):
    with timer("load"):
        truth = _load_truth(args, workdir)
    with timer("inference"):
        rs = realization_set(cfg, workdir)
    seeds = streamline_seeds(cfg, rs.domain, args.random_seeds)
    h = cfg.flow.h or flow.default_step(rs.domain)
    bundles, chamfers, hausdorffs = [], [], []
    with timer("trace"):
        for s in seeds:
            reals = flow.trace_realizations(rs, s, h, cfg.flow.max_steps)
            bundle = flow.aggregate_streamlines(reals)
            gt = flow.trace_streamline(truth, s, h, cfg.flow.max_steps, truth.domain)
            bundles.append(bundle)
            chamfers.append(metrics.chamfer(bundle.mean, gt.points))
            hausdorffs.append(metrics.hausdorff(bundle.mean, gt.points))
    with timer("write"):
        export_streamline_bundles(bundles, workdir / "streamlines.json", "structured_json",
                                  include_realizations=not args.aggregate_only)
        export_streamline_bundles(bundles, workdir / "streamlines.obj", "obj_polyline")
        _write_json(workdir / "streamline_metrics.json", {
            "config": {"method": rs.source, "realizations": rs.m, "seeds": len(seeds), "h": h},
            "values": {"avg_chamfer": float(np.mean(chamfers)), "avg_hausdorff": float(np.mean(hausdorffs))}})
    print(f"traced {len(seeds)} seeds x {rs.m} realizations; avg chamfer {np.mean(chamfers):.4g}, "
          f"avg hausdorff {np.mean(hausdorffs):.4g}")


def _cp_dict(cp):
    return {"position": cp.position.tolist(), "kind": cp.kind, "jacobian": cp.jacobian.tolist()}


def cmd_critpoints(args, cfg, workdir, timer):
    with timer("load"):
        truth = _load_truth(args, workdir)
    with timer("inference"):
        rs = realization_set(cfg, workdir)
    fl = cfg.flow
    with timer("detect"):
        pred = flow.detect_critical_points(uq.mean_field(rs), fl.zero_tolerance, fl.refine_iters)
        true = flow.detect_critical_points(truth, fl.zero_tolerance, fl.refine_iters)
    doc = {"mean_field": [_cp_dict(c) for c in pred], "ground_truth": [_cp_dict(c) for c in true]}
    if true:
        match = metrics.critical_point_rmse(pred, true, cfg.metrics.match_radius, truth.domain)
        doc["match"] = {"rmse": match.rmse, "missed": match.missed, "spurious": match.spurious}
    with timer("write"):
        _write_json(workdir / "critpoints.json", doc)
    print(f"{len(pred)} critical points in the mean field, {len(true)} in the ground truth")


def cmd_variability(args, cfg, workdir, timer):
    with timer("inference"):
        rs = realization_set(cfg, workdir)
    fl = cfg.flow
    with timer("detect"):
        pts = [c.position for f in rs.realizations
               for c in flow.detect_critical_points(f, fl.zero_tolerance, fl.refine_iters, classify=False)]
    with timer("accumulate"):
        var = flow.variability_field(pts, rs.domain, fl.clamp_radius)
    with timer("write"):
        save_raw_field(var, workdir / "variability.raw", name="variability")
    print(f"wrote {workdir / 'variability.raw'} from {len(pts)} detections in {rs.m} realizations")


def cmd_metrics(args, cfg, workdir, timer):
    with timer("load"):
        truth = _load_truth(args, workdir)
    if args.pred:
        pred = load_raw_field(args.pred)
        values = {"psnr_db": metrics.psnr(pred, truth), "rmse": metrics.rmse(pred, truth)}
        conf = {"pred": str(args.pred)}
    else:
        with timer("inference"):
            rs = realization_set(cfg, workdir)
        with timer("reduce"):
            values = reconstruction_metrics(rs, truth)
        values["model_bytes"] = model_bytes(cfg, workdir)
        conf = {"method": rs.source, "m": rs.m if rs.source == "mcdropout" else None,
                "members": rs.m if rs.source == "ensemble" else None, "p_test": rs.p_test,
                "depth": cfg.network.num_res_blocks}
    report = metrics.MetricReport(values, conf)
    (workdir / "metrics.txt").write_text(report.to_text())
    _write_json(workdir / "metrics.json", report.to_dict())
    sys.stdout.write(report.to_text())


def _sweep_values(axis, raw):
    parts = [v.strip() for v in raw.split(",") if v.strip()]
    if axis in ("mc-samples", "members", "depth"):
        return [int(v) for v in parts]
    if axis == "p-test":
        return [float(v) for v in parts]
    return [canonical_placement(v) for v in parts]


def run_sweep(cfg: RunConfig, truth, axis, values, workdir=None, jobs=1, timer=None):
    """Evaluate reconstruction quality along one configuration axis.

    Returns one row per value, in the order given.
    """
    timer = timer or Timer()
    rows = []
    tc = train_config_for(cfg)
    bs = cfg.train.batch_size

    def mcd_model(**net_kw):
        net = network_for(cfg, truth.domain, **net_kw)
        with timer("train"):
            params, _ = train_single_model(truth, net, tc)
        return params, net

    def row(value, rs, **conf):
        with timer("reduce"):
            vals = reconstruction_metrics(rs, truth)
        rows.append({"axis": axis, "value": value, "config": conf, "values": vals})

    if axis in ("mc-samples", "p-test"):
        params, net = mcd_model()
        for v in values:
            m = v if axis == "mc-samples" else cfg.uq.m
            p = v if axis == "p-test" else (cfg.uq.p_test if cfg.uq.p_test is not None else net.dropout_p_test)
            with timer("inference"):
                rs = uq.sample_realizations_mcdropout(params, net, truth.domain, m, p, cfg.uq.seed, bs)
            row(v, rs, method="mcdropout", m=m, p_test=p, placement=net.dropout_placement,
                depth=net.num_res_blocks)
    elif axis == "members":
        net = network_for(cfg, truth.domain, dropout_placement="none")
        with timer("train"):
            plist, _ = train_ensemble(truth, net, tc, max(values), jobs=jobs)
        for v in values:
            with timer("inference"):
                rs = uq.sample_realizations_ensemble(plist[:v], net, truth.domain, bs)
            row(v, rs, method="ensemble", members=v, depth=net.num_res_blocks)
    elif axis == "placement":
        for v in values:
            params, net = mcd_model(dropout_placement=v)
            p = cfg.uq.p_test if cfg.uq.p_test is not None else net.dropout_p_test
            with timer("inference"):
                rs = uq.sample_realizations_mcdropout(params, net, truth.domain, cfg.uq.m, p, cfg.uq.seed, bs)
            row(v, rs, method="mcdropout", m=cfg.uq.m, p_test=p, placement=v, depth=net.num_res_blocks)
    elif axis == "depth":
        for v in values:
            if cfg.uq.method == "ensemble":
                net = network_for(cfg, truth.domain, num_res_blocks=v, dropout_placement="none")
                with timer("train"):
                    plist, _ = train_ensemble(truth, net, tc, cfg.uq.members, jobs=jobs)
                with timer("inference"):
                    rs = uq.sample_realizations_ensemble(plist, net, truth.domain, bs)
                row(v, rs, method="ensemble", members=cfg.uq.members, depth=v)
            else:
                params, net = mcd_model(num_res_blocks=v)
                p = cfg.uq.p_test if cfg.uq.p_test is not None else net.dropout_p_test
                with timer("inference"):
                    rs = uq.sample_realizations_mcdropout(params, net, truth.domain, cfg.uq.m, p,
                                                          cfg.uq.seed, bs)
                row(v, rs, method="mcdropout", m=cfg.uq.m, p_test=p, depth=v)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    return rows


def sweep_table(rows) -> str:
    keys = ["psnr_db", "rmse", "mean_uncertainty", "max_uncertainty"]
    head = ["axis", "value"] + keys
    lines = ["\t".join(head)]
    for r in rows:
        lines.append("\t".join([r["axis"], str(r["value"])] + [metrics._fmt(r["values"].get(k)) for k in keys]))
    return "\n".join(lines) + "\n"


def cmd_sweep(args, cfg, workdir, timer):
    truth = _load_truth(args, workdir)
    values = _sweep_values(args.axis, args.values)
    rows = run_sweep(cfg, truth, args.axis, values, workdir, jobs=args.jobs, timer=timer)
    (workdir / "sweep.txt").write_text(sweep_table(rows))
    _write_json(workdir / "sweep.json", {"axis": args.axis, "rows": rows})
    sys.stdout.write(sweep_table(rows))


# --------------------------------------------------------------------------
# argument parsing

def _ints(s):
    return tuple(int(v) for v in str(s).split(","))


def _floats(s):
    return tuple(float(v) for v in str(s).split(","))


def _progress(epochs):
    step = max(1, epochs // 10)

    def cb(epoch, loss, lr):
        if epoch % step == 0 or epoch == epochs - 1:
            log.info("epoch %d/%d  loss %.4e  lr %.1e", epoch + 1, epochs, loss, lr)
    return cb


def _apply_overrides(doc, items):
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        section, name = key.split(".", 1)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        doc.setdefault(section, {})[name] = parsed
    return doc


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "train-ensemble": cmd_train_ensemble,
    "reconstruct": cmd_reconstruct, "uncertainty": cmd_uncertainty, "error": cmd_error,
    "streamlines": cmd_streamlines, "critpoints": cmd_critpoints, "variability": cmd_variability,
    "metrics": cmd_metrics, "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out-dir", help="working directory (overrides output.dir)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for train.seed, uq.seed and flow.seed")
    common.add_argument("--method", choices=("mcdropout", "ensemble"), help="shortcut for uq.method")
    common.add_argument("--epochs", type=int, help="shortcut for train.epochs")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uqfield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("gen", parents=[common], help="sample an analytic field")
    p.add_argument("--kind", required=True, choices=ANALYTIC_KINDS)
    p.add_argument("--dims", required=True, help="comma separated grid sizes, e.g. 64,64")
    p.add_argument("--min", help="comma separated lower bounds")
    p.add_argument("--max", help="comma separated upper bounds")
    p.add_argument("--param", action="append", metavar="KEY=JSON", help="analytic field parameter")
    p.add_argument("--out")

    for name, text in (("train", "train an MC dropout model"),
                       ("train-ensemble", "train a deep ensemble")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--field")
        if name == "train":
            p.add_argument("--out")
        else:
            p.add_argument("--members", type=int)

    sub.add_parser("reconstruct", parents=[common], help="mean field from realizations")
    sub.add_parser("uncertainty", parents=[common], help="uncertainty field from realizations")
    p = sub.add_parser("error", parents=[common], help="L1 error field of a prediction")
    p.add_argument("--pred")
    p.add_argument("--field")
    p = sub.add_parser("streamlines", parents=[common], help="uncertainty-aware streamlines")
    p.add_argument("--field")
    p.add_argument("--random-seeds", type=int, help="number of uniformly random seeds")
    p.add_argument("--aggregate-only", action="store_true", help="omit realizations from the JSON")
    p = sub.add_parser("critpoints", parents=[common], help="critical points of the mean field")
    p.add_argument("--field")
    sub.add_parser("variability", parents=[common], help="critical point variability field")
    p = sub.add_parser("metrics", parents=[common], help="PSNR / RMSE report")
    p.add_argument("--field")
    p.add_argument("--pred", help="evaluate a raw field instead of the trained model")
    p = sub.add_parser("sweep", parents=[common], help="evaluate along one configuration axis")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma separated axis values")
    p.add_argument("--field")
    return parser


def load_run_config(args) -> RunConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    doc = _apply_overrides(doc, args.set)
    if args.seed is not None:
        for section in ("train", "uq", "flow"):
            doc.setdefault(section, {})["seed"] = args.seed
    if args.method:
        doc.setdefault("uq", {})["method"] = args.method
    if args.epochs is not None:
        doc.setdefault("train", {})["epochs"] = args.epochs
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    timer = Timer()
    try:
        cfg = load_run_config(args)
        workdir = Path(args.out_dir) if args.out_dir else cfg.output_dir()
        workdir.mkdir(parents=True, exist_ok=True)
        with timer("total"):
            COMMANDS[args.command](args, cfg, workdir, timer)
        _write_json(workdir / f"timing_{args.command.replace('-', '_')}.json",
                    {"command": args.command, "seconds": timer.phases})
    except UQFieldError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
