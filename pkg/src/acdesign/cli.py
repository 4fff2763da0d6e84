"""Command-line frontend.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible design.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnose as dg
from . import match as mt
from . import render as rd
from . import score as sc
from .data import RngSpec, format_float, read_csv, write_csv, write_table
from .errors import AcDesignError, DataError, Infeasible
from .simulate import LINKS, SCENARIOS, SimConfig, generate, get_preset, scenario_presets

PRESET_ALIASES = {"fig3": "fig1c", "fig4": "fig4-poor-overlap", "fig5": "fig5-confounded", "fig6": "fig6-iv"}
DESIGNS = mt.BIPARTITE_DESIGNS + ("nearfar",)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _threads_default() -> int:
    raw = os.environ.get("ACDESIGN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _lambda(value: str):
    if value == "cv":
        return "cv"
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda must be 'cv' or a number, got {value!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0")
    return v


def _seed(value: str) -> int:
    v = int(value)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _add_sim_args(p):
    p.add_argument("--preset", help="named scenario (see `simulate --list-presets`)")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    for name in ("c1", "c0", "rho", "sigma", "tau", "eta", "c2", "delta"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--link", choices=LINKS, dest="link_orientation")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--stream", type=_seed, default=0, help="RNG stream id")


def _add_score_args(p):
    p.add_argument("--pilot-fraction", type=float, default=sc.DEFAULT_PILOT_FRACTION)
    p.add_argument("--strata", help="covariate used to stratify the pilot sample")
    p.add_argument("--family", choices=("auto", "linear", "logistic"), default="auto")
    p.add_argument("--lambda", dest="lam", type=_lambda, default="cv", help="'cv' or a fixed penalty")
    p.add_argument("--cv-rule", choices=("min", "1se"), default="min")
    p.add_argument("--propensity-on-analysis", action="store_true",
                   help="fit the propensity model on the analysis set instead of all units")


def _add_match_args(p, default_design):
    p.add_argument("--design", default=default_design,
                   help=f"one of {', '.join(DESIGNS)}, or a mode name as shorthand for a Mahalanobis design")
    p.add_argument("--mode", choices=mt.MODES)
    p.add_argument("--propensity-caliper", type=float)
    p.add_argument("--prognostic-caliper", type=float)
    p.add_argument("--caliper-scale", choices=("probability", "linear"), default="probability")
    p.add_argument("--covariates", help="comma-separated covariate subset for Mahalanobis distance")
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--iv-caliper", type=float, default=1.0)
    p.add_argument("--penalty", type=float, default=1.0)
    p.add_argument("--sink-fraction", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acdesign", description="Assignment-control study design toolkit.")
    parser.add_argument("--config", help="key=value file; command-line flags override it")
    parser.add_argument("--threads", type=int, default=_threads_default())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    _add_sim_args(p)
    p.add_argument("--out", help="dataset CSV")
    p.add_argument("--truth-out", help="CSV of true scores and potential outcomes")
    p.add_argument("--include-latent", action="store_true")
    p.add_argument("--list-presets", action="store_true")

    p = sub.add_parser("score", help="pilot split plus propensity and prognostic fits")
    p.add_argument("--data", required=True)
    p.add_argument("--role", action="append", default=[], metavar="COLUMN=ROLE")
    _add_score_args(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--models-out", default="scores.json")
    p.add_argument("--out", default="scored.csv", help="scored analysis-set CSV")

    p = sub.add_parser("match", help="match scored units")
    p.add_argument("--scored", required=True)
    _add_match_args(p, "mahalanobis")
    p.add_argument("--out", default="matching.csv")

    p = sub.add_parser("diagnose", help="balance, overlap and effect diagnostics")
    p.add_argument("--scored", required=True)
    p.add_argument("--matching")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default="diagnostics.json")
    p.add_argument("--csv-dir")

    p = sub.add_parser("plot", help="render an SVG figure")
    p.add_argument("--kind", choices=("ac", "overlap", "love", "rac"), default="ac")
    p.add_argument("--scored", required=True)
    p.add_argument("--matching")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--subsample-pairs", type=int)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--width", type=int, default=480)
    p.add_argument("--height", type=int, default=400)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="simulate, score, match, diagnose and plot a preset")
    _add_sim_args(p)
    _add_score_args(p)
    _add_match_args(p, "caliper-both")
    p.add_argument("--true-scores", action="store_true", help="use simulated scores instead of fitted ones")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--subsample-pairs", type=int, default=40)
    p.add_argument("--out-dir", required=True)
    return parser


# ---------------------------------------------------------------------------
# config file


def _config_tokens(path: str, subparser: argparse.ArgumentParser) -> list[str]:
    flags = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            flags[opt] = action
    tokens: list[str] = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    for num, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{num}: expected key = value")
        key, value = key.strip().replace("_", "-"), value.strip().strip('"').strip("'")
        opt = f"--{key}"
        action = flags.get(opt)
        if action is None:
            raise UsageError(f"{path}:{num}: unknown option {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(opt)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"{path}:{num}: {key} expects true or false")
        else:
            tokens += [opt, value]
    return tokens


def _parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        sub = subparsers.choices[args.command]
        at = argv.index(args.command)
        argv = argv[: at + 1] + _config_tokens(args.config, sub) + argv[at + 1:]
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# commands


def _sim_config(args) -> SimConfig:
    if args.preset:
        cfg = get_preset(PRESET_ALIASES.get(args.preset, args.preset))
    else:
        cfg = SimConfig(c0=0.0)
    overrides = {}
    for name in ("n", "p", "c1", "c0", "rho", "sigma", "tau", "eta", "c2", "delta", "scenario", "link_orientation"):
        v = getattr(args, name)
        if v is not None:
            overrides[name] = v
    cfg = replace(cfg, **overrides, rng=RngSpec(args.seed, args.stream))
    return cfg.validate()


def write_truth_csv(truth, path) -> None:
    cols = [("phi", truth.phi), ("psi", truth.psi), ("e_true", truth.e_true), ("y0", truth.y0), ("y1", truth.y1)]
    write_table(path, [c for c, _ in cols], [[format_float(v) for v in a.tolist()] for _, a in cols])


def cmd_simulate(args) -> int:
    if args.list_presets:
        for cfg in scenario_presets():
            print(f"{cfg.name}\t{cfg.description}")
        return EXIT_OK
    if not args.out:
        raise UsageError("simulate: --out is required")
    data, truth = generate(_sim_config(args))
    write_csv(data, args.out, include_latent=args.include_latent)
    if args.truth_out:
        write_truth_csv(truth, args.truth_out)
    return EXIT_OK


def _family(args, dataset) -> str:
    if args.family != "auto":
        return args.family
    y = dataset.Y
    if y is not None and y.size and np.all((y == 0) | (y == 1)):
        return "logistic"
    return "linear"


def _fit_scores(args, dataset, rng: RngSpec):
    pilot = sc.split_pilot(dataset, args.pilot_fraction, args.strata, rng.derive("pilot"))
    print(f"pilot: {pilot.pilot_indices.size} controls; analysis: {pilot.analysis_indices.size} units",
          file=sys.stderr)
    prop_idx = pilot.analysis_indices if args.propensity_on_analysis else None
    pm = sc.fit_propensity(dataset, prop_idx)
    progm = sc.fit_prognostic(
        dataset, pilot, _family(args, dataset), args.lam, rng.derive("cv"), args.threads, cv_rule=args.cv_rule
    )
    return pilot, pm, progm, sc.score_dataset(dataset, pilot, pm, progm)


def cmd_score(args) -> int:
    schema = {}
    for item in args.role:
        col, sep, role = item.partition("=")
        if not sep:
            raise UsageError(f"--role expects COLUMN=ROLE, got {item!r}")
        schema[col] = role
    dataset = read_csv(args.data, schema or None)
    _, pm, progm, scored = _fit_scores(args, dataset, RngSpec(args.seed))
    sc.dump_models({"propensity": pm, "prognostic": progm}, args.models_out)
    sc.write_scored_csv(scored, args.out)
    return EXIT_OK


def _matching_for(args, scored):
    design, mode = args.design, args.mode
    if design in mt.MODES:
        mode = mode or design
        design = "mahalanobis"
    if design not in DESIGNS:
        raise UsageError(f"unknown design {design!r}; choose from {', '.join(DESIGNS + mt.MODES)}")
    covs = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
    if design == "nearfar":
        near = mt.DistanceSpec("mahalanobis", covs, ridge_epsilon=args.ridge)
        spec = mt.NearfarSpec(near, args.iv_caliper, args.penalty, args.sink_fraction)
        return mt.nearfar_match(scored, spec), None
    if design in ("mahalanobis", "propensity"):
        spec = mt.DistanceSpec(
            "mahalanobis" if design == "mahalanobis" else "propensity-absdiff",
            covs,
            args.propensity_caliper,
            args.prognostic_caliper,
            args.ridge,
            args.caliper_scale,
        )
    else:
        spec = mt.design_spec(
            design,
            scored,
            0.1 if args.propensity_caliper is None else args.propensity_caliper,
            args.prognostic_caliper,
            covs,
        )
        spec = replace(spec, ridge_epsilon=args.ridge, caliper_scale=args.caliper_scale)
    return mt.optimal_bipartite_match(mt.distance_matrix(scored, spec), mode or "require-all-treated"), spec


def cmd_match(args) -> int:
    scored = sc.read_scored_csv(args.scored)
    matching, _ = _matching_for(args, scored)
    mt.write_matching(matching, scored, args.out)
    print(f"pairs: {matching.n_pairs}; dropped: {matching.dropped.size}; "
          f"total distance: {matching.total_distance:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    scored = sc.read_scored_csv(args.scored)
    matching = mt.read_matching(args.matching, scored) if args.matching else None
    report = dg.diagnose(scored, matching, bins=args.bins)
    report.write_json(args.out)
    if args.csv_dir:
        report.write_csvs(args.csv_dir)
    return EXIT_OK


def _rac_panels(scored, matching, truth=None, axes="fitted"):
    kw = dict(truth=truth, axes=axes, assignment="confounding") if axes == "true" else {}
    return [dg.ac_plot_data(scored, matching, project=pr, **kw) for pr in dg.PROJECTIONS]


def cmd_plot(args) -> int:
    scored = sc.read_scored_csv(args.scored)
    matching = mt.read_matching(args.matching, scored) if args.matching else None
    style = rd.PlotStyle(width=args.width, height=args.height)
    if args.kind == "ac":
        doc = rd.render_ac_plot(dg.ac_plot_data(scored, matching), style)
    elif args.kind == "overlap":
        doc = rd.render_overlap(dg.overlap_histogram(scored, args.bins), style)
    elif args.kind == "love":
        doc = rd.render_love_plot(dg.smd(scored, matching if matching and matching.bipartite else None), style)
    else:
        doc = rd.render_rac_triptych(_rac_panels(scored, matching), style, args.subsample_pairs, RngSpec(args.seed))
    rd.write_svg(args.out, doc)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _sim_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data, truth = generate(cfg)
    write_csv(data, out / "data.csv")
    write_truth_csv(truth, out / "truth.csv")
    pilot, pm, progm, scored = _fit_scores(args, data, cfg.rng)
    sc.dump_models({"propensity": pm, "prognostic": progm}, out / "scores.json")
    if args.true_scores:
        scored = sc.score_from_truth(data, truth, pilot.analysis_indices)
    sc.write_scored_csv(scored, out / "scored.csv")

    if args.mode is None and args.design not in mt.MODES:
        args.mode = "max-cardinality"
    matching, _ = _matching_for(args, scored)
    mt.write_matching(matching, scored, out / "matching.csv")
    report = dg.diagnose(scored, matching, bins=args.bins)
    report.write_json(out / "diagnostics.json")
    report.write_csvs(out)

    style = rd.PlotStyle(title=cfg.name or None)
    rd.write_svg(out / "acplot.svg", rd.render_ac_plot(dg.ac_plot_data(scored, matching), style, allow_empty=True))
    rd.write_svg(out / "overlap.svg", rd.render_overlap(report.overlap, style))
    rd.write_svg(out / "love.svg", rd.render_love_plot(report.smd, style))
    axes = "true" if args.true_scores else "fitted"
    rd.write_svg(
        out / "acplot_true.svg",
        rd.render_ac_plot(dg.ac_plot_data(scored, matching, truth, axes="true"), style, allow_empty=True),
    )
    if scored.Z is not None:
        rd.write_svg(
            out / "rac.svg",
            rd.render_rac_triptych(_rac_panels(scored, matching, truth, axes), style,
                                   args.subsample_pairs, cfg.rng),
        )
    print(f"{cfg.name or 'custom'}: {matching.n_pairs} pairs written to {out}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "score": cmd_score,
    "match": cmd_match,
    "diagnose": cmd_diagnose,
    "plot": cmd_plot,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AcDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
