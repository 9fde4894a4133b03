"""Scenario runner: ``syncavg run <config.json>`` and ``syncavg list``.

Configs are JSON; rationals are ``"p/q"`` strings and seeds are explicit
integer lists.  Each run writes ``report.csv`` and ``verdicts.json`` (plus
scenario extras) and exits 0 iff every verdict passes, 1 if one fails,
2 on config errors and 3 when a scenario precondition fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import diagnostics as dg
from .base import BaseSystem, as_fraction, sample_path
from .errors import ConfigError, InvalidInputError, ScenarioPreconditionError, SyncAvgError
from .measures import EmpiricalMeasure, d_functional, empirical_x_marginal, finite_invariant_measures, wasserstein1
from .product import PRESETS, RandomProduct, make_preset


@dataclass
class ScenarioConfig:
    scenario: str
    preset: str
    system: RandomProduct
    params: dict
    expect: dict = field(default_factory=dict)
    out_dir: str = "out"
    preset_params: dict = field(default_factory=dict)


def _parse_base(doc: dict) -> BaseSystem:
    if not isinstance(doc, dict):
        raise ConfigError("base", "must be an object")
    kind = doc.get("kind")
    try:
        if kind in ("two-sided-bernoulli", "one-sided-bernoulli"):
            w = doc.get("weights")
            if not isinstance(w, list):
                raise ConfigError("base.weights", "must be a list of rationals")
            try:
                weights = [as_fraction(v) for v in w]
            except (ValueError, ZeroDivisionError, InvalidInputError) as exc:
                raise ConfigError("base.weights", str(exc)) from None
            if any(v < 0 for v in weights) or sum(weights) != 1:
                raise ConfigError("base.weights", f"weights must be nonnegative and sum to 1, got sum {sum(weights)}")
            return BaseSystem.bernoulli(weights, doc.get("alphabet"), two_sided=kind == "two-sided-bernoulli")
        if kind == "markov-shift":
            return BaseSystem.markov(doc["matrix"], doc.get("alphabet"), doc.get("weights"),
                                     two_sided=doc.get("two_sided", True))
        if kind == "finite-permutation":
            perm = doc.get("perm")
            if not isinstance(perm, dict):
                raise ConfigError("base.perm", "must map states to states")
            alphabet = doc.get("alphabet") or [_label(k) for k in perm]
            lookup = {str(s): s for s in alphabet}
            try:
                mapping = {lookup[str(k)]: lookup[str(v)] for k, v in perm.items()}
            except KeyError as exc:
                raise ConfigError("base.perm", f"unknown state {exc}") from None
            mapping = {s: mapping[s] for s in alphabet}
            w = doc.get("weights")
            if w is not None and sum(as_fraction(v) for v in w) != 1:
                raise ConfigError("base.weights", "weights must sum to 1")
            return BaseSystem.permutation(mapping, w)
    except KeyError as exc:
        raise ConfigError(f"base.{exc.args[0]}", "missing") from None
    except InvalidInputError as exc:
        fld = "base.weights" if "weight" in str(exc) else "base"
        raise ConfigError(fld, str(exc)) from None
    raise ConfigError("base.kind", f"unknown base kind {kind!r}")


def _label(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def parse_config(doc: dict) -> ScenarioConfig:
    """Validate a config document and build its system."""
    if not isinstance(doc, dict):
        raise ConfigError("config", "must be a JSON object")
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    system = doc.get("system")
    if not isinstance(system, dict) or "preset" not in system:
        raise ConfigError("system.preset", "missing")
    preset = system["preset"]
    if preset not in PRESETS:
        raise ConfigError("system.preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    pparams = system.get("params", {})
    if "weights" in pparams:
        try:
            w = [as_fraction(v) for v in pparams["weights"]]
        except (ValueError, ZeroDivisionError, InvalidInputError) as exc:
            raise ConfigError("system.params.weights", str(exc)) from None
        if sum(w) != 1 or any(v < 0 for v in w):
            raise ConfigError("system.params.weights", f"weights must be nonnegative and sum to 1, got sum {sum(w)}")
    base = _parse_base(doc["base"]) if "base" in doc else None
    try:
        rp = make_preset(preset, pparams, base)
    except InvalidInputError as exc:
        fld = "system.params.weights" if "weight" in str(exc) else "system.params"
        raise ConfigError(fld, str(exc)) from None

    runner = SCENARIOS[scenario]
    params = dict(runner.defaults)
    given = doc.get("params", {})
    if not isinstance(given, dict):
        raise ConfigError("params", "must be an object")
    for key, value in given.items():
        if key not in params:
            raise ConfigError(f"params.{key}", f"not a parameter of scenario {scenario!r}")
        params[key] = value
    seeds = params.get("seeds")
    if seeds is not None and (not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds) or not seeds):
        raise ConfigError("params.seeds", "must be a nonempty list of integers")
    out_dir = doc.get("output", {}).get("dir", "out")
    return ScenarioConfig(scenario, preset, rp, params, doc.get("expect", {}), out_dir, pparams)


# -- scenarios -------------------------------------------------------------------------


def _other_point(rp: RandomProduct):
    space = rp.space
    if space.is_finite:
        return space.points[-1]
    return 1.0 if space.kind == "unit-interval" else 0.5


def _point(rp: RandomProduct, v, default):
    if v is None:
        return default
    return v if rp.space.is_finite else float(as_fraction(v))


def _expectation(name: str, observed: float, threshold: float, expect_sync: bool) -> dg.Verdict:
    ok = observed <= threshold if expect_sync else observed > threshold
    return dg.Verdict(name, threshold, observed, ok)


def _run_sync(cfg: ScenarioConfig) -> tuple[list, dict]:
    rp, p = cfg.system, cfg.params
    x = _point(rp, p["x"], rp.space.reference_point())
    y = _point(rp, p["y"], _other_point(rp))
    plain, strong = [], []
    for seed in p["seeds"]:
        path = sample_path(rp.base, seed)
        plain.append(dg.sync_average(rp, path, x, y, p["n"]))
        strong.append(dg.strong_sync_profile(rp, path, p["eps"], p["n"]))
    verdicts = [_expectation("sync_average_max", max(plain), p["threshold"], p["expect_sync"]),
                _expectation("strong_sync_profile_max", max(strong), p["threshold"], p["expect_sync"])]
    return verdicts, {}


def _run_diam(cfg: ScenarioConfig) -> tuple[list, dict]:
    rp, p = cfg.system, cfg.params
    rep = dg.diameter_sequences(rp, sample_path(rp.base, p["seeds"][0]), p["n_max"], p["eps"], depth=p["depth"])
    bound = p["cesaro_bound"] if p["cesaro_bound"] is not None else 2.0 / p["n_max"]
    verdicts = []
    exact = rep.metadata["exact"]
    if not np.isnan(rep.h).all():
        slack = 0.0 if exact else 2 * p["eps"]
        worst = float(np.max(np.diff(rep.h), initial=-math.inf))
        verdicts.append(dg.Verdict("h_nonincreasing", slack, worst, worst <= slack))
        hv = _expectation("h_final", float(rep.h[-1]), p["delta"], p["expect_sync"])
        verdicts.append(hv)
    cv = _expectation("cesaro_g_final", float(rep.cesaro_g[-1]), bound, p["expect_sync"])
    verdicts.append(cv)
    if len(verdicts) > 2:
        agree = (verdicts[1].observed <= p["delta"]) == (cv.observed <= bound)
        verdicts.append(dg.Verdict("pullback_forward_agreement", True, agree, agree))
    return verdicts, {"report": rep}


def _run_pullback(cfg: ScenarioConfig) -> tuple[list, dict]:
    rp, p = cfg.system, cfg.params
    if not rp.base.invertible:
        raise ScenarioPreconditionError("pullback scenario needs an invertible base")
    conv, resid, past, basin = 0, [], 0, []
    rng_pts = np.random.default_rng(p["seeds"][0])
    for seed in p["seeds"]:
        path = sample_path(rp.base, seed)
        est = dg.estimate_invariant_graph(rp, path, p["tol"], p["n_max_depth"], depth0=p["depth0"])
        conv += est.converged
        resid.append(dg.invariance_residual(rp, path, p["depth"], p["steps"]))
        past += dg.past_dependence_check(rp, path, p["depth"], tol=p["tol"])
        if rp.space.is_finite:
            starts = np.asarray(rp.space.points)
        else:
            starts = rng_pts.random(p["points_per_seed"]) % 1.0
        basin.append(float(np.max(dg.basin_average_distance(
            rp, path, starts, dg.PullbackGraph(rp, p["graph_depth"]), p["basin_n"]))))
    n = len(p["seeds"])
    verdicts = [dg.Verdict("graph_converged", n, conv, conv == n),
                dg.Verdict("invariance_residual_max", p["residual_threshold"], max(resid),
                           max(resid) <= p["residual_threshold"]),
                dg.Verdict("past_dependence", n, past, past == n),
                dg.Verdict("basin_average_max", p["basin_threshold"], max(basin),
                           max(basin) <= p["basin_threshold"])]
    return verdicts, {}


def _run_measure(cfg: ScenarioConfig) -> tuple[list, dict]:
    rp, p = cfg.system, cfg.params
    starts = p["starts"] or [rp.space.reference_point(), _other_point(rp)]
    starts = [_point(rp, s, None) for s in starts]
    path = sample_path(rp.base, p["seeds"][0])
    ms = [empirical_x_marginal(rp, path, x, p["n"]) for x in starts]
    between = max(wasserstein1(rp.space, ms[0], m) for m in ms[1:]) if len(ms) > 1 else 0.0
    verdicts = [dg.Verdict("w1_between_starts", p["w1_between_threshold"], between,
                           between <= p["w1_between_threshold"])]
    if p["reference"] == "lebesgue":
        if rp.space.is_finite:
            raise ScenarioPreconditionError("Lebesgue reference needs the interval or circle")
        ref = EmpiricalMeasure.lebesgue(p["reference_atoms"], rp.space)
    elif p["reference"] == "pullback":
        if not rp.base.invertible:
            raise ScenarioPreconditionError("pullback reference needs an invertible base")
        vals = dg.PullbackGraph(rp, p["depth"]).along(sample_path(rp.base, p["seeds"][0] + 1), p["reference_atoms"])
        ref = EmpiricalMeasure.uniform(rp.space, vals)
    else:
        ref = None
    if ref is not None:
        w = wasserstein1(rp.space, ms[0], ref)
        verdicts.append(dg.Verdict("w1_to_reference", p["w1_reference_threshold"], w,
                                   w <= p["w1_reference_threshold"]))
    dval = d_functional(ms[0])
    if p["d_expected"] is not None:
        target = float(as_fraction(p["d_expected"]))
        verdicts.append(dg.Verdict("d_functional", [target, p["d_tol"]], dval, abs(dval - target) <= p["d_tol"]))
    else:
        verdicts.append(dg.Verdict("d_functional", None, dval, True))
    return verdicts, {"measure": ms[0].merged()}


def _run_vanishing(cfg: ScenarioConfig) -> tuple[list, dict]:
    p = dict(cfg.params)
    p["seed"] = p.pop("seeds")[0]
    p.pop("n_max")
    vc = dg.VanishingConfig(**p)
    rep = dg.vanishing_attractor_scenario(cfg.system, vc)
    return rep.verdicts, {}


def _run_property(cfg: ScenarioConfig) -> tuple[list, dict]:
    p = cfg.params
    rep = dg.property_suite(cfg.system, p["seeds"], p["n_max"], p["eps"])
    return rep.verdicts, {}


def _run_finite(cfg: ScenarioConfig) -> tuple[list, dict]:
    rp, p = cfg.system, cfg.params
    if rp.base.kind != "finite-permutation" or not rp.space.is_finite:
        raise ScenarioPreconditionError("finite-exact needs a finite-permutation base and finite X")
    fims = finite_invariant_measures(rp)
    x = _point(rp, p["x"], rp.space.points[0])
    y = _point(rp, p["y"], _other_point(rp))
    limits = [dg.finite_sync_limit(rp, s, x, y) for i, s in enumerate(rp.base.alphabet) if rp.base.weights[i] > 0]
    strong, worst = dg.finite_strong_sync(rp)
    observed = {
        "unique_measure": fims.unique,
        "atomic_disintegration": all(fims.atomic_disintegration),
        "sync_average": max(limits),
        "strongly_synchronizing": strong,
    }
    verdicts = []
    for name, obs in observed.items():
        if name in cfg.expect:
            exp = cfg.expect[name]
            ok = obs == (as_fraction(exp) if name == "sync_average" else exp)
            verdicts.append(dg.Verdict(name, exp, obs, ok))
        else:
            verdicts.append(dg.Verdict(name, None, obs, True))
    link = (not strong) or (fims.unique and all(fims.atomic_disintegration))
    verdicts.append(dg.Verdict("sync_implies_unique_atomic", True, link, link))
    exact_ok = all(fims.invariant) and all(fims.marginal_ok)
    verdicts.append(dg.Verdict("exact_invariance", True, exact_ok, exact_ok))
    export = {
        "states": [list(s) for s in fims.states],
        "dimension": fims.dimension,
        "measures": [[str(w) for w in vec] for vec in fims.measures],
        "atomic_disintegration": fims.atomic_disintegration,
        "max_sync_limit": str(worst),
    }
    return verdicts, {"invariant_measures": export}


@dataclass(frozen=True)
class Scenario:
    runner: Callable[[ScenarioConfig], tuple[list, dict]]
    defaults: dict
    summary: str


_COMMON = {"seeds": [0], "n_max": 20, "eps": 1e-3}

SCENARIOS: dict[str, Scenario] = {
    "diam": Scenario(_run_diam, {**_COMMON, "depth": 40, "delta": 1e-3, "cesaro_bound": None,
                                 "expect_sync": True},
                     "forward/pullback image diameters g_n, h_n and their Cesaro averages"),
    "finite-exact": Scenario(_run_finite, {**_COMMON, "x": None, "y": None},
                             "exact invariant measures and Cesaro sync limits of a finite system"),
    "measure": Scenario(_run_measure, {**_COMMON, "n": 100_000, "starts": None, "reference": "lebesgue",
                                       "reference_atoms": 10_000, "depth": 60, "w1_between_threshold": 0.02,
                                       "w1_reference_threshold": 0.03, "d_expected": None, "d_tol": 0.01},
                        "empirical x-marginals, Wasserstein-1 and the D functional"),
    "property-suite": Scenario(_run_property, {**_COMMON, "seeds": list(range(50)), "n_max": 30},
                               "h monotonicity, g shift-subadditivity, u subadditivity"),
    "pullback": Scenario(_run_pullback, {**_COMMON, "depth": 40, "depth0": 1, "tol": 1e-6, "n_max_depth": 4096,
                                         "steps": 10, "residual_threshold": 1e-6, "graph_depth": 60,
                                         "basin_n": 10_000, "basin_threshold": 1e-3, "points_per_seed": 10},
                         "invariant graph estimate, invariance residual, past dependence, basin average"),
    "sync": Scenario(_run_sync, {**_COMMON, "n": 1000, "x": None, "y": None, "eps": 0.05, "threshold": 0.01,
                                 "expect_sync": True},
                     "plain and strong synchronization-on-average profiles"),
    "vanishing-attractor": Scenario(_run_vanishing, {**_COMMON, **{f.name: f.default for f in fields(dg.VanishingConfig)
                                                                    if f.name != "seed"}},
                                    "two-sided attracting graph versus one-sided window predictors"),
}
SCENARIOS["vanishing-attractor"].defaults["windows"] = [0, 1, 2, 3]


# -- running ------------------------------------------------------------------------------


def _write(out: Path, cfg: ScenarioConfig, verdicts: list, extras: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rp, p = cfg.system, cfg.params
    rep = extras.get("report")
    if rep is None:
        rep = dg.diameter_sequences(rp, sample_path(rp.base, p["seeds"][0]), p.get("n_max", 20),
                                    p.get("eps", 1e-3))
    with open(out / "report.csv", "w", newline="") as fh:
        rep.to_csv(fh)
    with open(out / "verdicts.json", "w") as fh:
        json.dump([v.to_dict() for v in verdicts], fh, indent=2)
        fh.write("\n")
    if "measure" in extras:
        with open(out / "measure.csv", "w", newline="") as fh:
            extras["measure"].to_csv(fh)
    if "invariant_measures" in extras:
        with open(out / "invariant_measures.json", "w") as fh:
            json.dump(extras["invariant_measures"], fh, indent=2)
            fh.write("\n")


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> tuple[int, list]:
    """Run a parsed scenario, write its reports and return ``(exit_status, verdicts)``."""
    verdicts, extras = SCENARIOS[cfg.scenario].runner(cfg)
    _write(Path(out_dir or cfg.out_dir), cfg, verdicts, extras)
    return (0 if all(v.passed for v in verdicts) else 1), verdicts


def list_presets() -> str:
    lines = ["presets:"]
    for name in sorted(PRESETS):
        pr = PRESETS[name]
        lines.append(f"  {name}: {pr.summary}")
        for key in sorted(pr.schema):
            lines.append(f"    {key}: {pr.schema[key]}")
    lines.append("scenarios:")
    for name in sorted(SCENARIOS):
        sc = SCENARIOS[name]
        lines.append(f"  {name}: {sc.summary}")
        for key in sorted(sc.defaults):
            lines.append(f"    {key} = {json.dumps(sc.defaults[key])}")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="syncavg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=None, help="output directory")
    run.add_argument("--seed-override", type=int, default=None, help="replace the seed list by one seed")
    sub.add_parser("list", help="list presets and scenarios")
    args = parser.parse_args(argv)

    if args.command == "list":
        sys.stdout.write(list_presets())
        return 0
    try:
        doc = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    if args.seed_override is not None and isinstance(doc, dict):
        doc.setdefault("params", {})["seeds"] = [args.seed_override]
    try:
        cfg = parse_config(doc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        status, verdicts = run_scenario(cfg, args.out)
    except ScenarioPreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return 3
    except SyncAvgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for v in verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.property}: observed={_jsonable_str(v.observed)} "
              f"threshold={_jsonable_str(v.threshold)}")
    return status


def _jsonable_str(v: Any) -> str:
    return json.dumps(dg._jsonable(v)) if not isinstance(v, Fraction) else str(v)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
