"""Experiment configuration: a strict key-value tree loaded from YAML/JSON.

Unknown keys are rejected everywhere, and every site label referenced by a
measure must exist in the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .model import BinnedJumpModel, JumpModel, MeasureVec, RateModel, WaitingLaw

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "measure_from"]


class ConfigError(ValueError):
    """Malformed configuration (bad syntax, unknown keys, bad references)."""


_LAW_PARAMS = {
    "deterministic": ("c",),
    "exponential": ("rate",),
    "gamma": ("shape", "rate"),
    "pareto": ("alpha", "xmin"),
}

_ALLOWED = {
    "": {"model", "simulate", "rate", "exact", "ldp", "xi", "recover", "minimizers", "examples"},
    "model": {"support_sites", "singular_sites", "xi_inf", "jump_states", "discretization"},
    "model.support_sites[]": {"label", "mu", "tau"},
    "model.singular_sites[]": {"label", "xi"},
    "model.jump_states[]": {"label", "p", "law"},
    "model.jump_states[].law": {"kind", "params"},
    "model.discretization": {"edges", "tail_threshold"},
    "simulate": {"t", "n", "seed", "paths"},
    "rate": {"nu", "tol"},
    "exact": {"t", "cap"},
    "ldp": {"center", "eps", "t_grid", "mc_t_grid", "n", "seed", "importance_sampling", "method", "csv"},
    "xi": {"law", "L_grid", "n", "seed"},
    "xi.law": {"kind", "params"},
    "recover": {"nu", "L_schedule", "M_schedule", "window_bins"},
    "minimizers": set(),
    "examples": {"which"},
}


def _check_keys(d: dict, path: str):
    allowed = _ALLOWED.get(path)
    if allowed is None:
        return
    unknown = set(d) - allowed
    if unknown:
        where = path or "top level"
        raise ConfigError(f"unknown key(s) {sorted(unknown)} at {where}")


def _as_float(v, where: str) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", ".inf", "infinity"):
            return math.inf
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _parse_law(d, where: str) -> WaitingLaw:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: law must be a mapping")
    _check_keys(d, "model.jump_states[].law")
    kind = d.get("kind")
    if kind not in _LAW_PARAMS:
        raise ConfigError(f"{where}: unknown law kind {kind!r}")
    params = d.get("params", {})
    names = _LAW_PARAMS[kind]
    if not isinstance(params, dict) or set(params) != set(names):
        raise ConfigError(f"{where}: {kind} law takes params {list(names)}")
    try:
        return WaitingLaw(kind, tuple(_as_float(params[n], f"{where}.{n}") for n in names))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_model(d: dict):
    _check_keys(d, "model")
    has_finite = "support_sites" in d
    has_jump = "jump_states" in d
    if has_finite == has_jump:
        raise ConfigError("model needs either support_sites or jump_states")
    if has_finite:
        labels, mu, tau = [], [], []
        for i, site in enumerate(d.get("support_sites", [])):
            _check_keys(site, "model.support_sites[]")
            labels.append(str(site["label"]))
            mu.append(_as_float(site["mu"], f"support_sites[{i}].mu"))
            tau.append(_as_float(site["tau"], f"support_sites[{i}].tau"))
        slabels, xi = [], []
        for i, site in enumerate(d.get("singular_sites", []) or []):
            _check_keys(site, "model.singular_sites[]")
            slabels.append(str(site["label"]))
            xi.append(_as_float(site["xi"], f"singular_sites[{i}].xi"))
        xi_inf = _as_float(d.get("xi_inf", math.inf), "xi_inf")
        return RateModel(tuple(labels), np.array(mu), np.array(tau), tuple(slabels), np.array(xi), xi_inf)
    states, p, laws = [], [], []
    for i, st in enumerate(d["jump_states"]):
        _check_keys(st, "model.jump_states[]")
        states.append(str(st["label"]))
        p.append(_as_float(st["p"], f"jump_states[{i}].p"))
        laws.append(_parse_law(st.get("law"), f"jump_states[{i}].law"))
    disc = d.get("discretization")
    if not isinstance(disc, dict):
        raise ConfigError("jump models need a discretization block")
    _check_keys(disc, "model.discretization")
    edges = [_as_float(e, "discretization.edges") for e in disc.get("edges", [])]
    thr = _as_float(disc.get("tail_threshold"), "discretization.tail_threshold")
    try:
        jm = JumpModel(tuple(states), np.array(p), tuple(laws))
        return BinnedJumpModel(jm, tuple(edges), thr)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ExperimentConfig:
    raw: dict
    model: RateModel | BinnedJumpModel | None

    @property
    def rate_model(self) -> RateModel:
        if self.model is None:
            raise ConfigError("this command needs a model block")
        return self.model if isinstance(self.model, RateModel) else self.model.model

    def block(self, name: str) -> dict:
        b = self.raw.get(name)
        if b is None:
            raise ConfigError(f"missing config block {name!r}")
        return b


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    _check_keys(data, "")
    for name in ("simulate", "rate", "exact", "ldp", "xi", "recover", "minimizers", "examples"):
        blk = data.get(name)
        if blk is not None:
            if not isinstance(blk, dict):
                raise ConfigError(f"block {name!r} must be a mapping")
            _check_keys(blk, name)
            if name == "xi" and "law" in blk:
                _check_keys(blk["law"], "xi.law")
    model = _parse_model(data["model"]) if "model" in data else None
    return ExperimentConfig(data, model)


def load_config(path: str, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {path!r}: {exc}") from None
    if overrides:
        data = _apply_overrides(data, overrides)
    return parse_config(data)


def _apply_overrides(data: dict, sets: list[str]) -> dict:
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        path, _, raw = item.partition("=")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        node = data
        keys = path.strip().split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a non-mapping")
        node[keys[-1]] = value
    return data


def measure_from(model: RateModel, spec, where: str) -> MeasureVec:
    """Build a measure from a {label: mass} mapping, checking labels."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected a mapping of site label to mass")
    try:
        return MeasureVec.from_dict(model, {k: _as_float(v, f"{where}.{k}") for k, v in spec.items()})
    except KeyError as exc:
        raise ConfigError(f"{where}: {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
