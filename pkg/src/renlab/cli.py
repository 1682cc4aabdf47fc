"""Command-line front end: wires config files to the library and emits
machine-readable JSON reports (plus optional CSV tables).

Exit codes: 0 success, 2 config parse error, 3 validation failure,
4 numeric non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import presets
from .config import ConfigError, ExperimentConfig, load_config, measure_from, parse_config
from .harness import (
    ball_infimum,
    constrained_infimum,
    exact_ldp,
    mc_ldp,
    tail_xi_estimate,
)
from .model import BinnedJumpModel, MeasureVec, RateModel, abscissa, validate
from .rate import (
    NonConvergenceError,
    minimizer_classification,
    rate_dual,
    rate_primal,
    recovery_sequence,
    relative_entropy,
    stationary_measure,
)
from .simulate import empirical_moments, exact_distribution, quantile_samples, sample_trajectory

SCHEMA_VERSION = 1

COMMANDS = ("validate", "simulate", "exact", "rate", "dual", "minimizers",
            "ldp", "xi", "recover", "examples")


def _jsonable(x):
    """Canonical JSON form: numpy scalars/arrays unwrapped, infinities and
    NaN encoded as strings so the output is strict JSON."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
    return x


def _dump(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def _measure_json(model: RateModel, nu: MeasureVec) -> dict:
    return nu.as_dict(model)


def _seed_of(block: dict, flag_seed) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    return int(block.get("seed", 0))


def _cmd_validate(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    violations = validate(cfg.rate_model)
    ok = not violations
    return (0 if ok else 3), {"ok": ok, "violations": violations}


def _cmd_simulate(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("simulate")
    t = float(blk["t"])
    n = int(blk["n"])
    seed = _seed_of(blk, args.seed)
    mom = empirical_moments(cfg.model, t, n, seed, threads=args.threads)
    report = {
        "moments": {
            "mean_nt_over_t": mom.mean,
            "stderr": mom.stderr,
            "ci95": [mom.ci_low, mom.ci_high],
            "n": mom.n,
        },
        "t": t,
        "seed": seed,
    }
    k = int(blk.get("paths", 0))
    if k > 0:
        rows = [("seed", "t", "n_t", "site", "weight")]
        rm = cfg.rate_model
        for i in range(k):
            tr = sample_trajectory(cfg.model, t, seed + i)
            for j, w in enumerate(tr.pi.weights):
                if w > 0:
                    rows.append((tr.seed, tr.t, tr.n_t, rm.labels[j], float(w)))
        report["paths"] = [list(r) for r in rows[1:]]
        report["paths_header"] = list(rows[0])
    return 0, report


def _cmd_exact(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("exact")
    law = exact_distribution(cfg.rate_model, int(blk["t"]), cap=int(blk.get("cap", 30)))
    d = law.as_json_dict()
    d["total"] = law.total()
    return 0, d


def _cmd_rate(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("rate")
    model = cfg.rate_model
    nu = measure_from(model, blk["nu"], "rate.nu")
    value = rate_primal(model, nu)
    r = nu.ac / model.tau
    q = float(r.sum())
    ac_term = q * relative_entropy(r / q, model.mu) if q > 0 else 0.0
    sing_term = float(sum(m * x for m, x in zip(nu.sing, model.xi) if m > 1e-12))
    defect_term = nu.defect * model.xi_inf if nu.defect > 1e-12 else 0.0
    return 0, {
        "nu": _measure_json(model, nu),
        "value": value,
        "components": {"entropy": ac_term, "singular": sing_term, "defect": defect_term},
    }


def _cmd_dual(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("rate")
    model = cfg.rate_model
    nu = measure_from(model, blk["nu"], "rate.nu")
    tol = float(blk.get("tol", 1e-9))
    value, cert = rate_dual(model, nu, tol=tol)
    primal = rate_primal(model, nu)
    f = {lab: float(v) for lab, v in zip(model.support_labels, cert.f_support)}
    f.update({lab: float(v) for lab, v in zip(model.singular_labels, cert.f_singular)})
    gap = abs(value - primal) if math.isfinite(value) and math.isfinite(primal) else 0.0
    return 0, {
        "nu": _measure_json(model, nu),
        "value": value,
        "primal_value": primal,
        "gap": gap,
        "certificate": {
            "f": f,
            "lambda": cert.lam,
            "constraint_residual": cert.constraint_residual,
        },
    }


def _cmd_minimizers(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    rep = minimizer_classification(cfg.model)
    rm = cfg.rate_model
    return 0, {
        "case": rep.case,
        "zero_set": list(rep.e_labels),
        "stationary": _measure_json(rm, rep.stationary),
        "zeros": [{"point": d, "rate": v} for d, v in rep.zeros],
        "perturbed": [{"point": d, "rate": v} for d, v in rep.perturbed],
        "ok": rep.ok,
    }


def _cmd_ldp(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("ldp")
    model = cfg.model
    rm = cfg.rate_model
    center = measure_from(rm, blk["center"], "ldp.center")
    eps = float(blk["eps"])
    t_grid = [float(t) for t in blk["t_grid"]]
    seed = _seed_of(blk, args.seed)
    method = blk.get("method", "mc")
    ball = ball_infimum(rm, center, eps)
    if not ball.certified:
        raise NonConvergenceError("ball infimum restarts disagree", ball.value, ball.spread)
    report = {
        "eps": eps,
        "rate_inf": ball.value,
        "argmin": _measure_json(rm, ball.argmin),
    }
    if method in ("mc", "both"):
        rep = mc_ldp(model, center, eps, t_grid, int(blk["n"]), seed,
                     use_is=bool(blk.get("importance_sampling", False)),
                     threads=args.threads, rate_inf=ball.value)
        report["mc"] = rep.as_json_dict(rm)
    if method in ("exact", "both"):
        rep = exact_ldp(rm, center, eps, [int(t) for t in t_grid], rate_inf=ball.value)
        report["exact"] = rep.as_json_dict(rm)
    return 0, report


def _cmd_xi(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("xi")
    from .config import _parse_law  # shared strict parser

    law = _parse_law(blk["law"], "xi.law")
    grid = [float(x) for x in blk["L_grid"]]
    est = tail_xi_estimate(law, grid)
    report = {
        "analytic": {
            "xi": est.xi,
            "fit_slope": est.slope,
            "fit_stderr": est.slope_stderr,
            "warnings": list(est.warnings),
        },
        "abscissa": abscissa(law),
    }
    n = blk.get("n")
    if n:
        seed = _seed_of(blk, args.seed)
        samples = quantile_samples(law, int(n), seed)
        s_est = tail_xi_estimate(samples, grid)
        report["sampled"] = {
            "xi": s_est.xi,
            "fit_stderr": s_est.slope_stderr,
            "n": int(n),
            "warnings": list(s_est.warnings),
        }
    return 0, report


def _cmd_recover(cfg: ExperimentConfig, args) -> tuple[int, dict]:
    blk = cfg.block("recover")
    model = cfg.model
    if not isinstance(model, BinnedJumpModel):
        raise ConfigError("recover needs a jump model with a discretization")
    nu = measure_from(model.model, blk["nu"], "recover.nu")
    Ls = [float(x) for x in blk["L_schedule"]]
    Ms = [float(x) for x in blk["M_schedule"]]
    if len(Ls) != len(Ms):
        raise ConfigError("L_schedule and M_schedule must have equal length")
    wb = int(blk.get("window_bins", 16))
    i_value = rate_primal(model.model, nu)
    steps = []
    for L, M in zip(Ls, Ms):
        st = recovery_sequence(model, nu, L, M, window_bins=wb)
        steps.append({"L": L, "M": M, "j_value": st.j_value})
    final_gap = abs(i_value - steps[-1]["j_value"]) / i_value if i_value > 0 else 0.0
    return 0, {"i_value": i_value, "steps": steps, "final_relative_gap": final_gap}


def _cmd_examples(cfg: ExperimentConfig | None, args) -> tuple[int, dict]:
    which = ("a", "b", "c", "d")
    if cfg is not None and cfg.raw.get("examples"):
        which = tuple(cfg.raw["examples"].get("which", which))
    out = {}
    if "a" in which:
        model = presets.sanov_model(4)
        nu = MeasureVec(np.array([0.4, 0.3, 0.2, 0.1]))
        out["a_unit_clock"] = {
            "rate": rate_primal(model, nu),
            "relative_entropy": relative_entropy(nu.ac, model.mu),
        }
    if "b" in which:
        bjm = presets.jump_mixed()
        rm = bjm.model
        mu_meas = stationary_measure(rm)
        w = mu_meas.weights.copy()
        w[: rm.n_support] = 0.9 * w[: rm.n_support] + 0.1 * rm.mu
        w = w / w.sum()
        nu = MeasureVec.from_weights(rm, w)
        p = rate_primal(rm, nu)
        d, _ = rate_dual(rm, nu)
        out["b_random_waiting"] = {
            "sites": rm.n_sites,
            "rate_at_stationary": rate_primal(rm, mu_meas),
            "rate_primal": p,
            "rate_dual": d,
            "primal_dual_gap": abs(p - d),
        }
    if "c" in which:
        thetas = (0.5, 1.0, 2.0)
        bjm = presets.poisson_rates(thetas)
        rm = bjm.model
        rows = []
        for lab, th, law in zip(bjm.jump.labels, thetas, bjm.jump.laws):
            k = rm.singular_labels.index(f"{lab}[tail]")
            est = tail_xi_estimate(law, list(np.linspace(2.0, 12.0, 6)))
            rows.append({
                "state": lab,
                "inverse_mean": 1.0 / th,
                "model_xi": float(rm.xi[k]),
                "tail_estimate": est.xi,
            })
        out["c_exponential_rates"] = rows
    if "d" in which:
        model, energy = presets.hot_points(2, (1.0, 2.0))
        mu_meas = stationary_measure(model)
        e_star = float(mu_meas.ac @ energy)
        curve = []
        for factor in (0.6, 0.8, 1.0, 1.3, 1.6):
            e = e_star * factor
            res = constrained_infimum(model, energy, e)
            curve.append({"energy": e, "rate": res.value, "certified": res.certified})
        out["d_hot_points"] = {
            "sites": model.n_sites,
            "typical_energy": e_star,
            "rate_curve": curve,
        }
    return 0, out


_HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "exact": _cmd_exact,
    "rate": _cmd_rate,
    "dual": _cmd_dual,
    "minimizers": _cmd_minimizers,
    "ldp": _cmd_ldp,
    "xi": _cmd_xi,
    "recover": _cmd_recover,
    "examples": _cmd_examples,
}

_NUM_SCHEMA = {"oneOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_MEASURE_SCHEMA = {"type": "object", "additionalProperties": _NUM_SCHEMA}
_LDP_SCHEMA = {
    "type": "object",
    "required": ["points", "slope", "rate_inf", "rel_gap"],
    "properties": {
        "points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["t", "p", "stderr", "method"],
                "properties": {"t": _NUM_SCHEMA, "p": _NUM_SCHEMA, "stderr": _NUM_SCHEMA,
                               "method": {"type": "string"}, "flag": {"type": "string"}},
            },
        },
        "slope": _NUM_SCHEMA,
        "rate_inf": _NUM_SCHEMA,
        "rel_gap": _NUM_SCHEMA,
    },
}

SCHEMAS = {
    "validate": {
        "type": "object",
        "required": ["schema_version", "command", "ok", "violations"],
        "properties": {"ok": {"type": "boolean"}, "violations": {"type": "array", "items": {"type": "string"}}},
    },
    "simulate": {
        "type": "object",
        "required": ["schema_version", "command", "moments"],
        "properties": {
            "moments": {
                "type": "object",
                "required": ["mean_nt_over_t", "stderr", "ci95", "n"],
                "properties": {"mean_nt_over_t": _NUM_SCHEMA, "stderr": _NUM_SCHEMA,
                               "ci95": {"type": "array"}, "n": {"type": "integer"}},
            }
        },
    },
    "exact": {
        "type": "object",
        "required": ["schema_version", "command", "t", "labels", "atoms", "total"],
        "properties": {"atoms": {"type": "object", "additionalProperties": _NUM_SCHEMA},
                       "t": {"type": "integer"}, "total": _NUM_SCHEMA},
    },
    "rate": {
        "type": "object",
        "required": ["schema_version", "command", "nu", "value", "components"],
        "properties": {"nu": _MEASURE_SCHEMA, "value": _NUM_SCHEMA},
    },
    "dual": {
        "type": "object",
        "required": ["schema_version", "command", "value", "primal_value", "certificate"],
        "properties": {
            "value": _NUM_SCHEMA,
            "certificate": {
                "type": "object",
                "required": ["f", "lambda", "constraint_residual"],
                "properties": {"f": _MEASURE_SCHEMA, "lambda": _NUM_SCHEMA,
                               "constraint_residual": _NUM_SCHEMA},
            },
        },
    },
    "minimizers": {
        "type": "object",
        "required": ["schema_version", "command", "case", "zero_set", "zeros", "perturbed", "ok"],
        "properties": {"case": {"enum": ["unique", "segment", "concentrated"]},
                       "ok": {"type": "boolean"}},
    },
    "ldp": {
        "type": "object",
        "required": ["schema_version", "command", "eps", "rate_inf"],
        "properties": {"eps": _NUM_SCHEMA, "rate_inf": _NUM_SCHEMA,
                       "mc": _LDP_SCHEMA, "exact": _LDP_SCHEMA},
    },
    "xi": {
        "type": "object",
        "required": ["schema_version", "command", "analytic", "abscissa"],
        "properties": {"abscissa": _NUM_SCHEMA},
    },
    "recover": {
        "type": "object",
        "required": ["schema_version", "command", "i_value", "steps", "final_relative_gap"],
        "properties": {"i_value": _NUM_SCHEMA,
                       "steps": {"type": "array", "items": {"type": "object"}}},
    },
    "examples": {"type": "object", "required": ["schema_version", "command"]},
}


def run(command: str, config_path: str | None, out_path: str | None,
        overrides: list[str] | None = None, seed: int | None = None,
        threads: int | None = None) -> tuple[int, dict]:
    """Execute one command; returns (exit_code, report)."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    if threads is None:
        threads = int(os.environ.get("RENLAB_THREADS", "1"))
    args = argparse.Namespace(seed=seed, threads=threads)
    cfg = None
    if config_path is not None:
        cfg = load_config(config_path, overrides)
    elif overrides:
        cfg = parse_config(_overrides_only(overrides))
    if cfg is None and command != "examples":
        raise ConfigError(f"command {command!r} needs --config")
    code, payload = _HANDLERS[command](cfg, args)
    report = {"schema_version": SCHEMA_VERSION, "command": command}
    report.update(payload)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(_dump(report))
        if command == "ldp" and cfg is not None and cfg.raw.get("ldp", {}).get("csv"):
            _write_ldp_csv(out_path + ".csv", report)
    return code, report


def _overrides_only(overrides: list[str]) -> dict:
    from .config import _apply_overrides

    return _apply_overrides({}, overrides)


def _write_ldp_csv(path: str, report: dict):
    with open(path, "w") as fh:
        fh.write("t,p,stderr,method\n")
        for key in ("exact", "mc"):
            for pt in report.get(key, {}).get("points", []):
                fh.write(f"{pt['t']},{pt['p']},{pt['stderr']},{pt['method']}\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="renlab", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to the YAML/JSON experiment config")
    parser.add_argument("--out", help="write the JSON report here (default: stdout)")
    parser.add_argument("--seed", type=int, default=None, help="override config seeds")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: RENLAB_THREADS or 1)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY.PATH=VALUE", help="override a config entry")
    ns = parser.parse_args(argv)
    try:
        code, report = run(ns.command, ns.config, ns.out, ns.overrides, ns.seed, ns.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 3
    if not ns.out:
        sys.stdout.write(_dump(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
