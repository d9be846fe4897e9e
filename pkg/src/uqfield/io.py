"""File formats: raw fields with JSON sidecars, checkpoints, streamline
geometry, and the JSON run configuration.

Raw fields are little-endian float32, node-major with components
interleaved (``x0 y0 [z0] x1 y1 ...``), x varying fastest.  The sidecar is
a JSON object::

    {"dims": [nx, ny], "components": 2,
     "physical_min": [..], "physical_max": [..], "name": "center"}

Bounds are optional and default to ``[0, dim - 1]`` per axis.

Checkpoints are ``b"FUQ1"``, a little-endian uint32 header length, a UTF-8
JSON header and the parameters as little-endian float32 in canonical order.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import BadMagic, ConfigError, CorruptPayload, ParseError, SizeMismatch, VersionUnsupported
from .field import DomainSpec, GridVectorField, ScalarField
from .flow import Streamline, StreamlineBundle
from .network import NetworkConfig
from .training import TrainConfig

CHECKPOINT_MAGIC = b"FUQ1"
CHECKPOINT_VERSION = 1
OUTPUT_DIR_ENV = "UQFIELD_OUTPUT_DIR"


def sidecar_for(path) -> Path:
    return Path(path).with_suffix(".json")


# --------------------------------------------------------------------------
# raw fields

def save_raw_field(f, path, sidecar_path=None, name=None) -> Path:
    """Write a vector or scalar field as float32 payload plus JSON sidecar."""
    path = Path(path)
    data = np.asarray(f.data)
    components = 1 if data.ndim == 1 else data.shape[1]
    path.write_bytes(data.astype("<f4").tobytes())
    meta = {"dims": list(f.domain.dims), "components": components,
            "physical_min": list(f.domain.physical_min), "physical_max": list(f.domain.physical_max)}
    if name:
        meta["name"] = name
    side = Path(sidecar_path) if sidecar_path else sidecar_for(path)
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_sidecar(sidecar_path) -> dict:
    try:
        meta = json.loads(Path(sidecar_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read sidecar {sidecar_path}: {exc}") from exc
    if not isinstance(meta, dict) or "dims" not in meta or "components" not in meta:
        raise ParseError(f"sidecar {sidecar_path} needs 'dims' and 'components'")
    unknown = set(meta) - {"dims", "components", "physical_min", "physical_max", "name"}
    if unknown:
        raise ParseError(f"sidecar {sidecar_path} has unknown keys {sorted(unknown)}")
    try:
        dims = [int(n) for n in meta["dims"]]
        comps = int(meta["components"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"sidecar {sidecar_path}: bad dims/components") from exc
    if "physical_min" in meta or "physical_max" in meta:
        try:
            domain = DomainSpec(dims, meta["physical_min"], meta["physical_max"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"sidecar {sidecar_path}: bad bounds ({exc})") from exc
    else:
        try:
            domain = DomainSpec.default_bounds(dims)
        except ValueError as exc:
            raise ParseError(f"sidecar {sidecar_path}: {exc}") from exc
    return {"domain": domain, "components": comps, "name": meta.get("name")}


def load_raw_field(path, sidecar_path=None):
    """Read a raw field; returns a GridVectorField (or ScalarField for 1 component)."""
    path = Path(path)
    meta = read_sidecar(sidecar_path or sidecar_for(path))
    domain, comps = meta["domain"], meta["components"]
    expected = domain.n_nodes * comps * 4
    payload = path.read_bytes()
    if len(payload) != expected:
        raise SizeMismatch(f"{path}: expected {expected} bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if comps == 1:
        return ScalarField(domain, data)
    if comps != domain.ndim:
        raise ParseError(f"{path}: {comps} components on a {domain.ndim}D grid")
    return GridVectorField(domain, data.reshape(-1, comps))


# --------------------------------------------------------------------------
# checkpoints

def domain_record(domain: DomainSpec) -> dict:
    return {"scheme": "affine to [-1, 1] per axis", "dims": list(domain.dims),
            "physical_min": list(domain.physical_min), "physical_max": list(domain.physical_max)}


def save_checkpoint(params, header: dict, path) -> int:
    """Write a checkpoint and return its size in bytes.

    ``header`` must hold ``"network"`` (a NetworkConfig or its dict); the
    format version and parameter count are added here.
    """
    head = dict(header)
    net = head.get("network")
    if isinstance(net, NetworkConfig):
        head["network"] = net.to_dict()
    elif not isinstance(net, dict):
        raise ValueError("checkpoint header needs a 'network' entry")
    head["format_version"] = CHECKPOINT_VERSION
    head["n_params"] = int(len(params))
    blob = json.dumps(head, sort_keys=True, separators=(",", ":")).encode()
    data = CHECKPOINT_MAGIC + struct.pack("<I", len(blob)) + blob + np.asarray(params).astype("<f4").tobytes()
    Path(path).write_bytes(data)
    return len(data)


def load_checkpoint(path):
    """Read a checkpoint; returns ``(params float64, NetworkConfig, header dict)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path} is not a checkpoint (magic {raw[:4]!r})")
    if len(raw) < 8:
        raise CorruptPayload(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        head = json.loads(raw[8:8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"{path}: unreadable header") from exc
    if head.get("format_version") != CHECKPOINT_VERSION:
        raise VersionUnsupported(f"{path}: format version {head.get('format_version')!r} "
                                 f"(supported: {CHECKPOINT_VERSION})")
    config = NetworkConfig(**head["network"])
    payload = raw[8 + hlen:]
    n = config.n_params()
    if len(payload) != 4 * n or head.get("n_params") != n:
        raise CorruptPayload(f"{path}: expected {4 * n} payload bytes, found {len(payload)}")
    params = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(params)):
        raise CorruptPayload(f"{path}: non-finite parameters")
    return params, config, head


def checkpoint_domain(header) -> DomainSpec:
    rec = header["normalization"]
    return DomainSpec(rec["dims"], rec["physical_min"], rec["physical_max"])


# --------------------------------------------------------------------------
# streamline geometry

def _streamline_dict(s: Streamline):
    return {"points": s.points.tolist(), "seed_index": s.seed_index, "termination": s.termination}


def bundle_to_dict(b: StreamlineBundle, include_realizations=True) -> dict:
    out = {"seed_index": int(b.seed_index), "n_realizations": len(b.realizations),
           "mean": b.mean.tolist(), "median": b.median.tolist(),
           "uncertainty": b.uncertainty.tolist(), "support": [int(c) for c in b.support]}
    if include_realizations:
        out["realizations"] = [_streamline_dict(s) for s in b.realizations]
    return out


def bundle_from_dict(d) -> StreamlineBundle:
    reals = [Streamline(np.asarray(s["points"], dtype=np.float64), s["seed_index"], s["termination"])
             for s in d.get("realizations", [])]
    return StreamlineBundle(reals, np.asarray(d["mean"], dtype=np.float64),
                            np.asarray(d["median"], dtype=np.float64),
                            np.asarray(d["uncertainty"], dtype=np.float64),
                            np.asarray(d["support"], dtype=np.int64), int(d["seed_index"]))


def export_streamline_bundles(bundles, path, format="structured_json", include_realizations=True):
    """Write bundles as JSON or as OBJ polylines.

    The OBJ variant holds each aggregate mean as one polyline (2D points get
    ``z = 0``) and writes per-vertex uncertainty, one value per line in vertex
    order, to ``<stem>.uncertainty.txt`` for tube radius/colour mapping.
    Returns the list of written paths.
    """
    bundles = list(bundles)
    if not bundles or any(len(b) == 0 for b in bundles):
        raise ValueError("nothing to export: empty bundle")
    path = Path(path)
    if format == "structured_json":
        doc = {"format": "uqfield-streamlines", "version": 1,
               "bundles": [bundle_to_dict(b, include_realizations) for b in bundles]}
        path.write_text(json.dumps(doc) + "\n")
        return [path]
    if format == "obj_polyline":
        lines, scal, base = ["# aggregate mean streamlines"], [], 1
        for b in bundles:
            for p in b.mean:
                q = list(p) + [0.0] * (3 - len(p))
                lines.append("v " + " ".join(repr(float(c)) for c in q))
            scal.extend(repr(float(u)) for u in b.uncertainty)
            lines.append("l " + " ".join(str(base + i) for i in range(len(b.mean))))
            base += len(b.mean)
        path.write_text("\n".join(lines) + "\n")
        side = path.with_suffix(".uncertainty.txt")
        side.write_text("\n".join(scal) + "\n")
        return [path, side]
    raise ValueError(f"unknown export format {format!r}")


def export_streamline_bundle(bundle, path, format="structured_json", include_realizations=True):
    return export_streamline_bundles([bundle], path, format, include_realizations)


def load_streamline_bundles(path) -> list[StreamlineBundle]:
    doc = json.loads(Path(path).read_text())
    return [bundle_from_dict(d) for d in doc["bundles"]]


# --------------------------------------------------------------------------
# run configuration

@dataclass
class NetworkSettings:
    hidden_width: int | None = None
    num_res_blocks: int | None = None
    omega0: float = 30.0
    dropout_placement: str = "last_block"
    dropout_p_train: float = 0.05
    dropout_p_test: float = 0.1

    def build(self, ndim, **overrides) -> NetworkConfig:
        kw = {k: v for k, v in asdict(self).items() if v is not None}
        kw.update(overrides)
        return NetworkConfig.standard(ndim, **kw)


@dataclass
class TrainSettings:
    epochs: int = 500
    batch_size: int = 2048
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 10
    decay_factor: float = 0.1
    min_lr: float = 0.0
    seed: int = 0
    scale_targets: bool = False


@dataclass
class UQSettings:
    method: str = "mcdropout"
    m: int = 100
    members: int = 30
    p_test: float | None = None
    seed: int = 0


@dataclass
class FlowSettings:
    h: float | None = None
    max_steps: int = 1000
    seeds: list | None = None
    random_seeds: int = 100
    seed: int = 0
    zero_tolerance: float | None = None
    refine_iters: int = 50
    clamp_radius: float | None = None


@dataclass
class MetricSettings:
    match_radius: float | None = None


@dataclass
class OutputSettings:
    dir: str = "."


@dataclass
class RunConfig:
    network: NetworkSettings = field(default_factory=NetworkSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    uq: UQSettings = field(default_factory=UQSettings)
    flow: FlowSettings = field(default_factory=FlowSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        sections = {f.name: f for f in fields(cls)}
        unknown = set(doc) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        kw = {}
        for name, f in sections.items():
            sub = doc.get(name, {})
            klass = f.default_factory
            allowed = {g.name for g in fields(klass)}
            if not isinstance(sub, dict):
                raise ConfigError(f"config section {name!r} must be an object")
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            kw[name] = klass(**sub)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        try:
            NetworkSettings.build(self.network, 2)
            TrainConfig(**asdict(self.train))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.uq.method not in ("mcdropout", "ensemble"):
            raise ConfigError(f"uq.method must be 'mcdropout' or 'ensemble', got {self.uq.method!r}")
        if self.uq.m < 1 or self.uq.members < 1:
            raise ConfigError("uq.m and uq.members must be >= 1")
        if self.uq.p_test is not None and not 0 <= self.uq.p_test < 1:
            raise ConfigError("uq.p_test must be in [0, 1)")
        if self.flow.h is not None and not self.flow.h > 0:
            raise ConfigError("flow.h must be positive")
        if self.flow.max_steps < 0 or self.flow.random_seeds < 0:
            raise ConfigError("flow.max_steps and flow.random_seeds must be >= 0")

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output.dir)
