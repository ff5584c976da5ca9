"""Command-line entry point: observer design, simulation, the
continuous-vs-discrete comparison experiment, and the verification suite.

One JSON config document drives everything; every field can be
overridden with --set dotted.path=value. Outputs (CSV, JSON summaries,
a gnuplot script) are deterministic given config + seed.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys as _sys
import warnings

import numpy as np

from kkl import analysis, design, systems, verify
from kkl.errors import ConfigError, InjectivityWarning, KKLError
from kkl.runtime import ObserverConfig, simulate


def default_config(command: str = "simulate") -> dict:
    cfg = {
        "seed": 0,
        "system": {"builtin": "oscillator", "dt": 0.01},
        "filter": {"sample": {"count": 3}, "p": 1},
        "transform": {"method": "example", "variant": "discrete",
                      "n_terms": 200},
        "inversion": {"method": "linear_stack", "pitch": 0.05},
        "run": {"K": 500, "x0": [1.0, 0.0], "xi0": 0.0},
        "compare": {
            "lambdas": [-10.0, -20.0, -30.0],
            "variants": ["continuous", "discrete"],
            "regression_window": [0.5, 3.0],
            "band_start": 1.0,
        },
        "design": {"growth_pitch": 0.1, "pair_count": 200,
                   "resample_attempts": 5},
    }
    if command == "design":
        # the design workflow samples a spectrum and solves for the
        # transformation; the other commands default to the worked
        # oscillator observer so a bare run reproduces the experiment
        cfg["transform"] = {"method": "sylvester", "n_terms": 200}
    return cfg


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


# Sections that hold one-of alternatives: when a user document picks a
# different branch than the default config, the whole section is
# replaced instead of merged, so the default branch cannot leak through.
_UNION_SECTIONS = {
    "system": ("builtin", "linear_poly"),
    "filter": ("sample", "eigenvalues"),
    "transform": ("method", "file"),
}


def _merge_config(base: dict, extra: dict) -> dict:
    out = _deep_merge(base, extra)
    for section, branches in _UNION_SECTIONS.items():
        user_sec = extra.get(section)
        base_sec = base.get(section)
        if not isinstance(user_sec, dict) or not isinstance(base_sec, dict):
            continue
        user_branch = next((b for b in branches if b in user_sec), None)
        base_branch = next((b for b in branches if b in base_sec), None)
        if user_branch is not None and user_branch != base_branch:
            out[section] = copy.deepcopy(user_sec)
    return out


def _apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects dotted.path=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"--set has an empty path in {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    for key in keys[:-1]:
        nxt = node.get(key)
        if not isinstance(nxt, dict):
            nxt = {}
            node[key] = nxt
        node = nxt
    node[keys[-1]] = value


def load_config(path: str | None, overrides: list[str],
                seed_flag: int | None, command: str = "simulate") -> dict:
    cfg = default_config(command)
    seed_configured = False
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config {path} is not valid JSON: line {exc.lineno} "
                f"column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path}: top level must be an object")
        seed_configured = "seed" in doc
        cfg = _merge_config(cfg, doc)
    for assignment in overrides:
        _apply_override(cfg, assignment)
        if assignment.split("=", 1)[0].strip() == "seed":
            seed_configured = True
    if seed_flag is not None:
        cfg["seed"] = seed_flag
    elif not seed_configured and os.environ.get("KKL_SEED"):
        try:
            cfg["seed"] = int(os.environ["KKL_SEED"])
        except ValueError as exc:
            raise ConfigError(f"KKL_SEED must be an integer: {exc}") from exc
    if not isinstance(cfg.get("seed"), int):
        raise ConfigError("seed: must be an integer")
    return cfg


def _dump_json(doc: dict, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_spec(cfg: dict) -> tuple[np.ndarray, object, int]:
    run = cfg.get("run", {})
    k_steps = run.get("K", 500)
    if not isinstance(k_steps, int) or k_steps < 1:
        raise ConfigError("run.K: must be an integer >= 1")
    x0 = np.asarray(run.get("x0", [1.0, 0.0]), dtype=np.float64)
    return x0, run.get("xi0", 0.0), k_steps


def _parse_xi0(spec, m: int):
    if spec is None or isinstance(spec, (int, float)):
        return None if spec in (None, 0, 0.0) else float(spec)
    if isinstance(spec, list):
        if all(isinstance(v, list) and len(v) == 2 for v in spec):
            if len(spec) != m:
                raise ConfigError(f"run.xi0: need {m} [re, im] pairs")
            return np.array([complex(re, im) for re, im in spec])
        if len(spec) == 2 * m:
            return np.asarray(spec, dtype=np.float64)
        raise ConfigError(
            f"run.xi0: need a scalar, {m} [re, im] pairs, or a flat list "
            f"of length {2 * m}")
    raise ConfigError("run.xi0: unrecognized value")


def _resolve_filter(cfg: dict, sys_model, radius_default: float):
    fspec = cfg.get("filter", {})
    p = int(fspec.get("p", sys_model.p))
    b_scale = float(fspec.get("b_scale", 1.0))
    if "eigenvalues" in fspec:
        eigs = [complex(re, im) for re, im in fspec["eigenvalues"]]
        return design.build_filter(eigs, p=p, b_scale=b_scale), None
    sample = fspec.get("sample", {})
    count = int(sample.get("count", sys_model.n + 1))
    radius = float(sample.get("radius", radius_default))
    seed = int(sample.get("seed", cfg["seed"]))
    return None, {"count": count, "radius": radius, "seed": seed,
                  "p": p, "b_scale": b_scale}


def _resolve_observer(cfg: dict, sys_model):
    """(filter, transform, meta) from the transform/filter config."""
    tspec = cfg.get("transform", {})
    if "file" in tspec:
        with open(tspec["file"], encoding="utf-8") as fh:
            doc = json.load(fh)
        filt = design.filter_from_dict(doc["filter"])
        stored = doc.get("transform", {})
        if stored.get("method") != "sylvester":
            raise ConfigError(
                "transform.file: only sylvester designs can be reloaded")
        transform = design.poly_from_dict(stored["poly"])
        return filt, transform, {"method": "sylvester", "source": tspec["file"]}
    method = tspec.get("method", "sylvester")
    if method == "example":
        if sys_model.n != 2 or sys_model.poly is None or sys_model.p != 1:
            raise ConfigError(
                "transform.method example: requires the builtin oscillator")
        lambdas = tspec.get("lambdas", cfg["compare"]["lambdas"])
        variant = tspec.get("variant", "discrete")
        filt = design.example_filter(lambdas, sys_model.dt)
        transform = design.example_transform(lambdas, sys_model.dt, variant)
        return filt, transform, {"method": "example", "variant": variant,
                                 "lambdas": list(lambdas)}
    growth = systems.estimate_growth_constants(
        sys_model, cfg["design"]["growth_pitch"])
    radius_default = min(1.0, 1.0 / growth.c2) if growth.c2 > 0 else 1.0
    filt, sample = _resolve_filter(cfg, sys_model, radius_default)
    if filt is None:
        eigs = design.sample_eigenvalues(sample["count"], sample["radius"],
                                         sample["seed"])
        filt = design.build_filter(eigs, p=sample["p"],
                                   b_scale=sample["b_scale"])
    if method == "sylvester":
        transform = design.poly_transform(sys_model, filt)
        return filt, transform, {"method": "sylvester"}
    if method == "series":
        n_terms = int(tspec.get("n_terms", 200))
        transform = design.series_transform(sys_model, filt, n_terms=n_terms)
        return filt, transform, {"method": "series", "n_terms": n_terms,
                                 "tail_bound": transform.tail_bound}
    raise ConfigError(f"transform.method: unknown method {method!r}")


def _observer_config(cfg: dict, filt, transform) -> ObserverConfig:
    ispec = cfg.get("inversion", {})
    method = ispec.get("method", "grid")
    if method == "linear_stack":
        return ObserverConfig(filt=filt, transform=transform,
                              inversion="linear_stack")
    if method == "grid":
        return ObserverConfig(filt=filt, transform=transform, inversion="grid",
                              grid_pitch=float(ispec.get("pitch", 0.05)))
    raise ConfigError(f"inversion.method: unknown method {method!r}")


# ------------------------------------------------------------- commands

def cmd_design(cfg: dict, out_dir: str, allow_weak: bool) -> int:
    sys_model = systems.system_from_spec(cfg["system"])
    growth = systems.estimate_growth_constants(
        sys_model, cfg["design"]["growth_pitch"])
    radius_default = min(1.0, 1.0 / growth.c2) if growth.c2 > 0 else 1.0
    tspec = cfg.get("transform", {})
    method = tspec.get("method", "sylvester")
    attempts: list[dict] = []

    if method == "sylvester" and "sample" in cfg.get("filter", {}) \
            and "eigenvalues" not in cfg.get("filter", {}):
        _, sample = _resolve_filter(cfg, sys_model, radius_default)
        filt, transform, report, attempts = design.design_with_resampling(
            sys_model, sample["count"], sample["radius"], sample["seed"],
            p=sample["p"], max_attempts=cfg["design"]["resample_attempts"],
            pair_count=cfg["design"]["pair_count"])
        meta = {"method": "sylvester"}
    else:
        filt, transform, meta = _resolve_observer(cfg, sys_model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InjectivityWarning)
            report = design.injectivity_probe(
                transform, sys_model, pair_count=cfg["design"]["pair_count"],
                seed=cfg["seed"])

    rng = np.random.default_rng(cfg["seed"])
    pts = systems.sample_box(sys_model.domain_box, rng, 100)
    residual = max(design.functional_residual(transform, sys_model, filt, x)
                   for x in pts)

    doc = {
        "system": cfg["system"],
        "filter": design.filter_to_dict(filt),
        "transform": dict(meta),
        "growth": {"c1": growth.c1, "c2": growth.c2,
                   "c1p": growth.c1p, "c2p": growth.c2p},
        "diagnostics": {
            "max_functional_residual": residual,
            "injectivity_margin": report.min_ratio,
            "weak_injectivity": report.weak,
            "sampling_attempts": attempts,
        },
    }
    if isinstance(transform, design.PolyTransform):
        doc["transform"]["poly"] = design.poly_to_dict(transform)
    if isinstance(transform, design.StackedCoeffTransform):
        doc["transform"]["rows"] = [
            [r.a, r.b, r.c, r.d, r.e] for r in transform.rows]
    _dump_json(doc, os.path.join(out_dir, "design.json"))
    print(f"design written to {os.path.join(out_dir, 'design.json')} "
          f"(residual {residual:.3e}, injectivity margin {report.min_ratio:.3e})")
    if report.weak and not allow_weak:
        print("error: injectivity margin is negligible; diagnostics were "
              "written, but rerun with --allow-weak to accept this design",
              file=_sys.stderr)
        return 3
    return 0


def cmd_simulate(cfg: dict, out_dir: str) -> int:
    sys_model = systems.system_from_spec(cfg["system"])
    filt, transform, meta = _resolve_observer(cfg, sys_model)
    obs = _observer_config(cfg, filt, transform)
    x0, xi0_spec, k_steps = _run_spec(cfg)
    xi0 = _parse_xi0(xi0_spec, filt.m)
    traj = simulate(sys_model, obs, x0, xi0, k_steps)
    csv_path = os.path.join(out_dir, "trajectory.csv")
    traj.to_csv(csv_path)
    summary: dict = {"transform": meta, "steps": k_steps,
                     "final_error": float(traj.err[-1])}
    window = cfg["compare"]["regression_window"]
    try:
        summary["convergence"] = analysis.convergence_report(
            traj, window[0], window[1]).to_dict()
    except KKLError as exc:
        summary["convergence"] = {"skipped": f"{type(exc).__name__}: {exc}"}
    try:
        summary["band"] = analysis.oscillation_band(
            traj, cfg["compare"]["band_start"]).to_dict()
    except KKLError as exc:
        summary["band"] = {"skipped": f"{type(exc).__name__}: {exc}"}
    _dump_json(summary, os.path.join(out_dir, "summary.json"))
    print(f"trajectory written to {csv_path} "
          f"(final error {traj.err[-1]:.3e})")
    return 0


PLOT_SCRIPT = """\
# Comparison figures in semi-log scale; render with: gnuplot plots.gp
# (any terminal works; pngcairo is set here for convenience)
set datafile separator ','
set terminal pngcairo size 900,600
set logscale y
set format y '10^{%T}'
set grid
set xlabel 'time'
set ylabel 'estimation error |x - xhat|'
set output 'fig1.png'
plot 'fig1.csv' skip 1 using 2:7 with lines lw 2 title '{label1} observer'
set output 'fig2.png'
plot 'fig2.csv' skip 1 using 2:7 with lines lw 2 title '{label2} observer'
"""


def cmd_compare(cfg: dict, out_dir: str) -> int:
    if cfg["system"].get("builtin") != "oscillator":
        raise ConfigError("compare: only the builtin oscillator is supported")
    sys_model = systems.system_from_spec(cfg["system"])
    lambdas = cfg["compare"]["lambdas"]
    variants = cfg["compare"]["variants"]
    if sorted(variants) != ["continuous", "discrete"]:
        raise ConfigError(
            "compare.variants: need exactly continuous and discrete")
    x0, xi0_spec, k_steps = _run_spec(cfg)
    window = cfg["compare"]["regression_window"]
    band_start = cfg["compare"]["band_start"]

    summary: dict = {"lambdas": list(lambdas), "figures": {}}
    for idx, variant in enumerate(variants, start=1):
        filt = design.example_filter(lambdas, sys_model.dt)
        transform = design.example_transform(lambdas, sys_model.dt, variant)
        obs = ObserverConfig(filt=filt, transform=transform,
                             inversion="linear_stack")
        traj = simulate(sys_model, obs, x0, _parse_xi0(xi0_spec, filt.m),
                        k_steps)
        fig = f"fig{idx}.csv"
        traj.to_csv(os.path.join(out_dir, fig))
        summary["figures"][fig] = variant
        if variant == "discrete":
            rep = analysis.convergence_report(traj, window[0], window[1])
            summary["discrete"] = {
                "slope": rep.slope_log10_per_time,
                "r_squared": rep.r_squared,
                "window": list(rep.regression_window),
                "floor": rep.error_floor,
                "final_error": rep.final_error,
            }
        else:
            band = analysis.oscillation_band(traj, band_start)
            summary["continuous"] = {"band": band.to_dict(),
                                     "band_start": band_start}
    labels = {f"fig{i}.csv": v for i, v in enumerate(variants, start=1)}
    script = (PLOT_SCRIPT
              .replace("{label1}", labels["fig1.csv"])
              .replace("{label2}", labels["fig2.csv"]))
    with open(os.path.join(out_dir, "plots.gp"), "w", encoding="ascii",
              newline="\n") as fh:
        fh.write(script)
    _dump_json(summary, os.path.join(out_dir, "compare.json"))
    if "discrete" in summary:
        print(f"discrete observer: slope {summary['discrete']['slope']:.4g}, "
              f"floor {summary['discrete']['floor']:.3e}")
    if "continuous" in summary:
        band = summary["continuous"]["band"]
        print(f"continuous observer: error band "
              f"[{band['min']:.3e}, {band['max']:.3e}], "
              f"median {band['median']:.3e}")
    return 0


def cmd_verify(cfg: dict, out_dir: str) -> int:
    sys_model = systems.system_from_spec(cfg["system"])
    filt, transform, meta = _resolve_observer(cfg, sys_model)
    n_terms = int(cfg.get("transform", {}).get("n_terms", 200))
    results = verify.run_suite(sys_model, filt, transform,
                               n_terms=n_terms, seed=cfg["seed"])
    failed = sum(1 for r in results if r.status == "fail")
    doc = {
        "transform": meta,
        "checks": [r.to_dict() for r in results],
        "failed": failed,
        "inconclusive": sum(1 for r in results if r.status == "inconclusive"),
    }
    _dump_json(doc, os.path.join(out_dir, "verify.json"))
    for r in results:
        print(f"{r.status.upper():12s} {r.name}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kkl",
        description="Design, simulate, and verify Luenberger-type "
                    "observers for discrete-time nonlinear systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("design", "sample eigenvalues, build the transformation, "
                       "write design.json with diagnostics"),
            ("simulate", "run one coupled plant/observer trajectory"),
            ("compare", "continuous- vs discrete-coefficient observers "
                        "on the oscillator"),
            ("verify", "run the invariant check suite")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--set", dest="overrides", action="append",
                         default=[], metavar="PATH=VALUE",
                         help="override a config field (dotted path; value "
                              "parsed as JSON, else kept as a string)")
        cmd.add_argument("--out", default=".", help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="seed override (falls back to config, then "
                              "KKL_SEED)")
        cmd.add_argument("--allow-weak", action="store_true",
                         help="keep designs whose injectivity margin is "
                              "negligible")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed,
                          args.command)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "design":
            return cmd_design(cfg, args.out, args.allow_weak)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "compare":
            return cmd_compare(cfg, args.out)
        return cmd_verify(cfg, args.out)
    except (KKLError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
