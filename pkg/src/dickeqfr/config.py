"""Experiment configuration: a YAML key-value tree, validated in one pass.

Every problem found is reported, not just the first one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .ensembles import BetaVector
from .errors import ConfigError, InvalidArgument
from .model import DickeParams, conserved_limit
from .tpm import BINNING_TOL, QuenchSchedule

__all__ = ["EnsembleSpec", "ReferenceSpec", "OutputSpec", "ExperimentConfig", "parse_config",
           "load_config", "DEFAULT_CONFIG_TEXT"]

DEFAULT_CONFIG_TEXT = """\
# Forward quench from a chaotic Gibbs state onto the integrable limit,
# then the backward protocol from the dephased final state.
model_initial:
  N: 7
  omega_b: 3.0
  omega_at: 10.0
  g: 1.0
  alpha: 0.5
  n_max: 800
model_final:
  N: 7
  omega_b: 3.0
  omega_at: 10.0
  g: 6.0
  alpha: 0.0
  n_max: 800
schedule: []            # empty list: sudden quench
initial_ensemble:
  kind: gibbs           # gibbs | gge | explicit-betas
  beta: 0.02
  charge_betas: {}
backward_reference:
  kind: fitted-gge      # fitted-gge | fitted-gibbs | explicit-betas
  start: actual         # actual: dephased forward state; reference: the reference ensemble itself
outputs:
  directory: results
  display_bin_width: auto
  formats: [csv, json]
  binning_tol: 1.0e-9
  prune_floor: 1.0e-30
  truncation_guard: 1.0e-8
seeds: 0
samples: 0
"""

_MODEL_KEYS = {"N", "omega_b", "omega_at", "g", "alpha", "n_max"}
_TOP_KEYS = {"model_initial", "model_final", "schedule", "initial_ensemble", "backward_reference",
             "outputs", "seeds", "samples"}
_REQUIRED_TOP = {"model_initial", "model_final", "initial_ensemble"}
_ENSEMBLE_KINDS = {"gibbs", "gge", "explicit-betas"}
_REFERENCE_KINDS = {"fitted-gge", "fitted-gibbs", "explicit-betas"}
_FORMATS = {"csv", "json"}


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str
    betas: BetaVector


@dataclass(frozen=True)
class ReferenceSpec:
    kind: str = "fitted-gge"
    start: str = "actual"
    betas: BetaVector | None = None


@dataclass(frozen=True)
class OutputSpec:
    directory: Path = Path("results")
    display_bin_width: float | None = None
    formats: tuple = ("csv", "json")
    binning_tol: float = BINNING_TOL
    prune_floor: float = 1e-30
    truncation_guard: float = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    model_initial: DickeParams
    model_final: DickeParams
    initial_ensemble: EnsembleSpec
    schedule: QuenchSchedule = QuenchSchedule()
    backward_reference: ReferenceSpec = ReferenceSpec()
    outputs: OutputSpec = field(default_factory=OutputSpec)
    seeds: int = 0
    samples: int = 0


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, msg):
        self.errors.append(msg)

    def mapping(self, node, path, allowed, required=()):
        if not isinstance(node, dict):
            self.add(f"{path}: expected a mapping")
            return {}
        for k in node:
            if k not in allowed:
                self.add(f"{path}.{k}: unknown key")
        for k in required:
            if k not in node:
                self.add(f"{path}.{k}: missing required key")
        return node

    def number(self, node, key, path, default=None, positive=False, nonneg=False):
        if key not in node:
            return default
        v = node[key]
        if not _is_number(v):
            self.add(f"{path}.{key}: expected a number, got {v!r}")
            return default
        if positive and not v > 0:
            self.add(f"{path}.{key}: must be > 0, got {v}")
        if nonneg and not v >= 0:
            self.add(f"{path}.{key}: must be >= 0, got {v}")
        return float(v)

    def integer(self, node, key, path, default=None, minimum=None):
        if key not in node:
            return default
        v = node[key]
        if not isinstance(v, int) or isinstance(v, bool):
            self.add(f"{path}.{key}: expected an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            self.add(f"{path}.{key}: must be >= {minimum}, got {v}")
        return v


def _model(c: _Collector, node, path, base=None):
    required = () if base is not None else tuple(sorted(_MODEL_KEYS))
    node = c.mapping(node, path, _MODEL_KEYS, required)
    base = base.to_dict() if base is not None else {}
    vals = dict(base)
    for k in ("N", "n_max"):
        v = c.integer(node, k, path, base.get(k), minimum=1)
        vals[k] = v
    for k in ("omega_b", "omega_at"):
        vals[k] = c.number(node, k, path, base.get(k), positive=True)
    vals["g"] = c.number(node, "g", path, base.get("g"), nonneg=True)
    alpha = c.number(node, "alpha", path, base.get("alpha"))
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        c.add(f"{path}.alpha: must lie in [0, 1], got {alpha}")
        alpha = None
    vals["alpha"] = alpha
    if any(vals.get(k) is None for k in _MODEL_KEYS):
        return None
    if vals["n_max"] < vals["N"]:
        c.add(f"{path}.n_max: must be >= N ({vals['N']}), got {vals['n_max']}")
        return None
    try:
        return DickeParams(**vals)
    except InvalidArgument as exc:
        c.add(f"{path}: {exc}")
        return None


def _charge_betas(c, node, path, params: DickeParams | None):
    cb = node.get("charge_betas", {}) or {}
    if not isinstance(cb, dict):
        c.add(f"{path}.charge_betas: expected a mapping of charge id to number")
        return {}
    out = {}
    for k, v in cb.items():
        if k != "M":
            c.add(f"{path}.charge_betas.{k}: unknown charge (only 'M' is defined)")
            continue
        if not _is_number(v):
            c.add(f"{path}.charge_betas.{k}: expected a number, got {v!r}")
            continue
        out[k] = float(v)
    if out and params is not None and conserved_limit(params) is None:
        c.add(f"{path}.charge_betas: charge 'M' does not commute with the Hamiltonian "
              f"(alpha={params.alpha}, g={params.g}); generalized temperatures need a conserved charge")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate YAML text; raises :class:`ConfigError` listing every problem."""
    try:
        root = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    if root is None:
        root = {}
    c = _Collector()
    root = c.mapping(root, "config", _TOP_KEYS, sorted(_REQUIRED_TOP))

    mi = _model(c, root["model_initial"], "model_initial") if "model_initial" in root else None
    mf = _model(c, root["model_final"], "model_final") if "model_final" in root else None
    if mi is not None and mf is not None and (mi.N, mi.n_max) != (mf.N, mf.n_max):
        c.add("model_final: N and n_max must match model_initial")

    segments = []
    sched = root.get("schedule", []) or []
    if not isinstance(sched, list):
        c.add("schedule: expected a list of segments")
        sched = []
    for i, seg in enumerate(sched):
        path = f"schedule[{i}]"
        seg = c.mapping(seg, path, _MODEL_KEYS | {"duration"}, ("duration",))
        t = c.number(seg, "duration", path, nonneg=True)
        params = _model(c, {k: v for k, v in seg.items() if k != "duration"}, path, base=mf) if mf else None
        if params is not None and mi is not None and (params.N, params.n_max) != (mi.N, mi.n_max):
            c.add(f"{path}: N and n_max must match model_initial")
        if t is not None and params is not None:
            segments.append((t, params))

    ens = None
    if "initial_ensemble" in root:
        node = c.mapping(root["initial_ensemble"], "initial_ensemble", {"kind", "beta", "charge_betas"},
                         ("kind", "beta"))
        kind = node.get("kind")
        if kind is not None and kind not in _ENSEMBLE_KINDS:
            c.add(f"initial_ensemble.kind: must be one of {sorted(_ENSEMBLE_KINDS)}, got {kind!r}")
        beta = c.number(node, "beta", "initial_ensemble")
        cb = _charge_betas(c, node, "initial_ensemble", mi)
        if kind == "gibbs" and cb:
            c.add("initial_ensemble.charge_betas: a gibbs ensemble takes no charge temperatures")
        if kind == "gge" and mi is not None and conserved_limit(mi) is None:
            c.add("initial_ensemble.kind: gge requires a Hamiltonian with a conserved charge")
        if kind == "gge" and not cb:
            cb = {"M": 0.0}
        if beta is not None and kind in _ENSEMBLE_KINDS:
            ens = EnsembleSpec(kind, BetaVector(beta, cb))

    ref = ReferenceSpec()
    if "backward_reference" in root:
        node = c.mapping(root["backward_reference"], "backward_reference",
                         {"kind", "start", "beta", "charge_betas"}, ("kind",))
        kind = node.get("kind", "fitted-gge")
        if kind not in _REFERENCE_KINDS:
            c.add(f"backward_reference.kind: must be one of {sorted(_REFERENCE_KINDS)}, got {kind!r}")
        start = node.get("start", "actual")
        if start not in ("actual", "reference"):
            c.add(f"backward_reference.start: must be 'actual' or 'reference', got {start!r}")
        betas = None
        if kind == "explicit-betas":
            beta = c.number(node, "beta", "backward_reference")
            if beta is None:
                c.add("backward_reference.beta: required for explicit-betas")
            else:
                betas = BetaVector(beta, _charge_betas(c, node, "backward_reference", mf))
        else:
            for k in ("beta", "charge_betas"):
                if k in node:
                    c.add(f"backward_reference.{k}: only allowed with kind explicit-betas")
        ref = ReferenceSpec(kind, start, betas)
    if mf is not None and conserved_limit(mf) is None and ref.kind == "fitted-gge":
        c.add("backward_reference.kind: fitted-gge requires a final Hamiltonian with a conserved charge")

    outputs = OutputSpec()
    if "outputs" in root:
        node = c.mapping(root["outputs"], "outputs",
                         {"directory", "display_bin_width", "formats", "binning_tol", "prune_floor",
                          "truncation_guard"})
        directory = node.get("directory", "results")
        if not isinstance(directory, str):
            c.add(f"outputs.directory: expected a path string, got {directory!r}")
            directory = "results"
        width = node.get("display_bin_width", "auto")
        if width == "auto" or width is None:
            width = None
        elif not _is_number(width) or width <= 0:
            c.add(f"outputs.display_bin_width: must be 'auto' or a positive number, got {width!r}")
            width = None
        formats = node.get("formats", ["csv", "json"])
        if isinstance(formats, str):
            formats = [formats]
        if not isinstance(formats, list) or not set(formats) <= _FORMATS:
            c.add(f"outputs.formats: must be a subset of {sorted(_FORMATS)}, got {formats!r}")
            formats = ["csv", "json"]
        tol = c.number(node, "binning_tol", "outputs", BINNING_TOL, positive=True)
        floor = c.number(node, "prune_floor", "outputs", 1e-30, nonneg=True)
        guard = c.number(node, "truncation_guard", "outputs", 1e-8, positive=True)
        outputs = OutputSpec(Path(directory), width, tuple(formats), tol, floor, guard)

    seeds = c.integer(root, "seeds", "config", 0, minimum=0)
    samples = c.integer(root, "samples", "config", 0, minimum=0)

    if c.errors:
        raise ConfigError(c.errors)
    return ExperimentConfig(mi, mf, ens, QuenchSchedule(tuple(segments)), ref, outputs, seeds, samples)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
