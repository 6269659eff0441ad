"""Command line interface: deterministic checks and small computations.

Thirteen subcommands split into two families.  Value commands (exp,
dist, dilate, nilpotentize, gmul, ginv, gdist) compute one quantity
and print it.  Check commands (verify-axioms, approx-order,
divergence, assoc-check, pansu, chain) run a verification, print a
structured report, optionally write <out>.txt and <out>.csv, and exit
0 only when every check passed.

Exit codes: 0 pass, 1 check failure or computation failure, 2 usage
error, 3 output I/O error.  All numbers are decimal text with 12
significant digits.  The CARNOT_SEED environment variable overrides
any configured seed.
"""

import argparse
import os
import sys

import numpy as np
import yaml

from .errors import CarnotError, ConfigError, Diverging
from .expmap import Chart, dist_inf
from .frame import resolve_frame
from .limits import (EpsilonLadder, SuiteConfig, check_integral_line_divergence,
                     check_local_approximation, run_axiom_suite)
from .nilpotent import GroupElement, algebra_at, bch_coords, dist_inf_group
from .pansu import (chain_rule_check, check_equivalences,
                    check_homogeneous_hom, pansu_differential, resolve_map)
from .report import CheckRow, Rung, fmt, render_csv, render_text, vector_text
from .tangent import Word, associativity_spread, parenthesizations

_DEFAULTS = {
    "base": "0",
    "ladder": "0.5,0.5,10",
    "seed": 42,
    "ode_tol": 1e-12,
    "limit_tol": 1e-3,
    "order_margin": 0.2,
}


def _parse_vector(text: str, dim: int, what: str = "vector") -> np.ndarray:
    """Comma-separated decimals; the single token 0 means the origin."""
    text = text.strip()
    if text == "0":
        return np.zeros(dim)
    parts = text.split(",")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"malformed {what} {text!r}") from None
    if len(values) != dim:
        raise ConfigError(
            f"{what} {text!r} has {len(values)} entries, expected {dim}")
    return np.asarray(values, dtype=float)


def _parse_ladder(text: str) -> EpsilonLadder:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(
            f"ladder {text!r} must be eps0,ratio,count")
    try:
        eps_0, ratio, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"malformed ladder {text!r}") from None
    return EpsilonLadder(eps_0=eps_0, ratio=ratio, count=count)


def _suite_chart(frame, base, ode_tol: float) -> Chart:
    return Chart(frame, base, ode_tolerance=ode_tol,
                 newton_tolerance=ode_tol / 10.0)


def _apply_config_file(args: argparse.Namespace):
    if getattr(args, "config", None) is None:
        return
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {args.config} must be a mapping")
    known = set(vars(args)) - {"cmd", "config", "func"}
    for key, value in data.items():
        attr = str(key).replace("-", "_")
        if attr not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)
        else:
            print(f"warning: both --{str(key).replace('_', '-')} and config "
                  f"file set {key!r}; flag wins", file=sys.stderr)


def _apply_env_seed(args: argparse.Namespace):
    env = os.environ.get("CARNOT_SEED")
    if env is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env)
        except ValueError:
            raise ConfigError(f"CARNOT_SEED={env!r} is not an integer") \
                from None


def _fill_defaults(args: argparse.Namespace):
    for key, value in _DEFAULTS.items():
        if getattr(args, key, "missing") is None:
            setattr(args, key, value)
    for key in ("seed", ):
        if hasattr(args, key):
            setattr(args, key, int(getattr(args, key)))
    for key in ("ode_tol", "limit_tol", "order_margin"):
        if hasattr(args, key):
            value = float(getattr(args, key))
            if value <= 0 and key != "order_margin":
                raise ConfigError(f"{key.replace('_', '-')} must be positive")
            setattr(args, key, value)


def _write_text(path: str, text: str):
    with open(path + ".txt", "w", encoding="utf-8") as fh:
        fh.write(text)


def _emit_value(args, lines) -> int:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if getattr(args, "out", None):
        _write_text(args.out, text)
    return 0


def _emit_checks(args, title, rows, frame_name="", base_text="",
                 preamble=()) -> int:
    text = render_text(title, rows, preamble)
    sys.stdout.write(text)
    if getattr(args, "out", None):
        _write_text(args.out, text)
        with open(args.out + ".csv", "w", encoding="utf-8") as fh:
            fh.write(render_csv(rows, frame_name=frame_name,
                                base_text=base_text))
    return 0 if all(r.passed for r in rows) else 1


# ---------------------------------------------------------------------------
# value commands

def _cmd_exp(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    coeffs = _parse_vector(args.coeffs, fr.dim_n, "coefficient vector")
    chart = _suite_chart(fr, base, args.ode_tol)
    return _emit_value(args, [vector_text(chart.exp_map(coeffs))])


def _cmd_dist(args) -> int:
    fr = resolve_frame(args.frame)
    u = _parse_vector(args.u, fr.dim_n, "point u")
    w = _parse_vector(args.w, fr.dim_n, "point w")
    d = dist_inf(fr, u, w, ode_tolerance=args.ode_tol,
                 newton_tolerance=args.ode_tol / 10.0)
    return _emit_value(args, [fmt(float(d))])


def _cmd_dilate(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    point = _parse_vector(args.point, fr.dim_n, "point")
    eps = float(args.eps)
    chart = _suite_chart(fr, base, args.ode_tol)
    return _emit_value(args, [vector_text(chart.dilate(point, eps))])


def _cmd_nilpotentize(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    alg = algebra_at(fr, base)
    lines = ["degrees: " + " ".join(str(d) for d in alg.degrees)]
    c = alg.c_bar
    for i in range(fr.dim_n):
        for j in range(fr.dim_n):
            for k in range(fr.dim_n):
                if c[i, j, k] != 0.0:
                    lines.append(
                        f"c[{i + 1},{j + 1},{k + 1}] = {fmt(c[i, j, k])}")
    if len(lines) == 1:
        lines.append("all structure constants vanish")
    return _emit_value(args, lines)


def _group_args(args, *names):
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    alg = algebra_at(fr, base)
    vecs = [_parse_vector(getattr(args, n), fr.dim_n, f"vector {n}")
            for n in names]
    return alg, vecs


def _cmd_gmul(args) -> int:
    alg, (a, b) = _group_args(args, "a", "b")
    return _emit_value(args, [vector_text(bch_coords(alg, a, b))])


def _cmd_ginv(args) -> int:
    alg, (a, ) = _group_args(args, "a")
    return _emit_value(args, [vector_text(-a)])


def _cmd_gdist(args) -> int:
    alg, (a, b) = _group_args(args, "a", "b")
    ga, gb = GroupElement(a, alg), GroupElement(b, alg)
    return _emit_value(args, [fmt(float(dist_inf_group(ga, gb)))])


# ---------------------------------------------------------------------------
# check commands

def _preamble(args, fr, base, extra=()):
    lines = [f"frame {fr.name}, base {vector_text(base)}",
             f"ladder {args.ladder}, seed {args.seed}, "
             f"ode tolerance {fmt(args.ode_tol)}, "
             f"limit tolerance {fmt(args.limit_tol)}"]
    lines.extend(extra)
    return lines


def _cmd_verify_axioms(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    ladder = _parse_ladder(args.ladder)
    chart = _suite_chart(fr, base, args.ode_tol)
    config = SuiteConfig(ladder=ladder, seed=args.seed,
                         tolerance=args.limit_tol,
                         uniform_order_margin=args.order_margin)
    rows = run_axiom_suite(chart, config)
    return _emit_checks(args, f"dilation axiom suite: {fr.name}", rows,
                        frame_name=fr.name, base_text=vector_text(base),
                        preamble=_preamble(args, fr, base))


def _cmd_approx_order(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    ladder = _parse_ladder(args.ladder)
    chart = _suite_chart(fr, base, args.ode_tol)
    report = check_local_approximation(
        chart, ladder, samples_per_rung=int(args.samples), seed=args.seed,
        tolerance=args.limit_tol)
    theory = 1.0 + fr.alpha / fr.depth_m
    threshold = theory - args.order_margin
    informative = int(report.informative.sum())
    if informative >= 2:
        passed = bool(report.converged
                      and report.fitted_order >= threshold)
        detail = (f"fitted order {report.fitted_order:.4g} "
                  f"(threshold {threshold:.4g}), final gap "
                  f"{fmt(report.values[-1])}")
    else:
        passed = bool(report.converged)
        detail = ("all rungs at the solver resolution floor "
                  "(the group model is exact at sample scale)")
    row = CheckRow(check_id="local_approximation_order", passed=passed,
                   tolerance=args.limit_tol,
                   fitted_order=report.fitted_order,
                   rungs=report.rungs(), detail=detail)
    return _emit_checks(args, f"local approximation order: {fr.name}", [row],
                        frame_name=fr.name, base_text=vector_text(base),
                        preamble=_preamble(args, fr, base))


def _cmd_divergence(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    u = _parse_vector(args.u, fr.dim_n, "point u")
    v = _parse_vector(args.v, fr.dim_n, "point v")
    w = _parse_vector(args.w, fr.dim_n, "coefficient vector w")
    ladder = _parse_ladder(args.ladder)
    chart = _suite_chart(fr, base, args.ode_tol)
    report = check_integral_line_divergence(
        chart, u, v, w, ladder, contract_target=bool(args.contract_target))
    rungs = [Rung(eps=float(e), measured=float(d), reference=None,
                  error=float(r))
             for e, d, r in zip(ladder.eps_values, report.distances,
                                report.ratios)]
    order = report.fitted_order
    detail = report.detail + (
        "" if np.isnan(order) else f"; fitted distance order {order:.4g}")
    row = CheckRow(check_id="integral_line_divergence", passed=report.bounded,
                   tolerance=3.0, fitted_order=order, rungs=rungs,
                   detail=detail)
    return _emit_checks(args, f"integral line divergence: {fr.name}", [row],
                        frame_name=fr.name, base_text=vector_text(base),
                        preamble=_preamble(
                            args, fr, base,
                            [f"u {vector_text(u)}, v {vector_text(v)}, "
                             f"w {vector_text(w)}"]))


def _cmd_assoc_check(args) -> int:
    fr = resolve_frame(args.frame)
    base = _parse_vector(args.base, fr.dim_n, "base")
    n = int(args.n)
    trials = int(args.trials)
    if n < 2:
        raise ConfigError(f"need a word length of at least 2, got {n}")
    if trials < 1:
        raise ConfigError(f"need at least one trial, got {trials}")
    mode = args.mode
    ladder = _parse_ladder(args.ladder)
    rng = np.random.default_rng(args.seed)
    degrees = np.asarray(fr.degrees, dtype=float)
    if mode == "group":
        tol = 1e-9 if args.tol is None else float(args.tol)
        alg = algebra_at(fr, base)
        scale = 0.5 ** degrees
        letters = tuple(
            GroupElement(rng.uniform(-1.0, 1.0, (trials, fr.dim_n)) * scale,
                         alg)
            for _ in range(n))
        spread = associativity_spread(Word(letters))
        fold_eps = 0.0
    else:
        tol = args.limit_tol if args.tol is None else float(args.tol)
        chart = _suite_chart(fr, base, args.ode_tol)
        scale = 0.15 ** degrees
        coords = rng.uniform(-1.0, 1.0, (n, trials, fr.dim_n)) * scale
        letters = tuple(chart.exp_map(coords[k]) for k in range(n))
        fold_eps = float(ladder.eps_values[-1])
        spread = associativity_spread(Word(letters, chart=chart),
                                      fold_eps=fold_eps)
    worst = float(np.max(spread))
    trees = len(parenthesizations(n))
    row = CheckRow(
        check_id=f"global_associativity_{mode}", passed=worst <= tol,
        tolerance=tol,
        rungs=[Rung(eps=fold_eps, measured=worst, reference=0.0, error=worst)],
        detail=f"worst coordinate spread {fmt(worst)} over {trees} "
               f"parenthesizations, {trials} trials, word length {n}")
    return _emit_checks(args, f"global associativity: {fr.name}", [row],
                        frame_name=fr.name, base_text=vector_text(base),
                        preamble=_preamble(args, fr, base,
                                           [f"mode {mode}, n {n}, "
                                            f"trials {trials}"]))


def _matrix_lines(hom) -> list:
    lines = ["differential matrix (rows: target coordinates, "
             "columns: source coordinates):"]
    for j in range(hom.target.dim_n):
        entries = " ".join(fmt(x) for x in hom.matrix[j])
        lines.append(f"  row {j + 1} (degree {hom.target.degrees[j]}): "
                     f"{entries}")
    return lines


def _cmd_pansu(args) -> int:
    src = resolve_frame(args.frame_src)
    dst = resolve_frame(args.frame_dst) if args.frame_dst else src
    base = _parse_vector(args.base, src.dim_n, "base")
    ladder = _parse_ladder(args.ladder)
    fmap = resolve_map(args.map, src.dim_n)
    source = _suite_chart(src, base, args.ode_tol)
    target = _suite_chart(dst, np.zeros(dst.dim_n), args.ode_tol)
    try:
        hom, report = pansu_differential(fmap, source, target, ladder,
                                         tolerance=args.limit_tol)
    except Diverging as exc:
        row = CheckRow(check_id="differential_fit", passed=False,
                       tolerance=args.limit_tol,
                       fitted_order=exc.report.fitted_order,
                       rungs=exc.report.rungs(),
                       detail=f"diverging: {exc}")
        return _emit_checks(args, f"differential of {fmap.name}", [row],
                            frame_name=src.name, base_text=vector_text(base),
                            preamble=_preamble(args, src, base,
                                               [f"map {fmap.name}"]))
    rows = [CheckRow(check_id="differential_fit", passed=report.converged,
                     tolerance=args.limit_tol,
                     fitted_order=report.fitted_order,
                     rungs=report.rungs(),
                     detail=f"final residual {fmt(report.values[-1])}")]
    rows.extend(check_homogeneous_hom(hom, seed=args.seed))
    rows.extend(check_equivalences(fmap, source, target, hom, ladder,
                                   tolerance=args.limit_tol))
    preamble = _preamble(args, src, base,
                         [f"map {fmap.name}, target frame {dst.name}"]
                         + _matrix_lines(hom))
    return _emit_checks(args, f"differential of {fmap.name}", rows,
                        frame_name=src.name, base_text=vector_text(base),
                        preamble=preamble)


def _cmd_chain(args) -> int:
    src = resolve_frame(args.frame)
    mid = resolve_frame(args.frame_mid) if args.frame_mid else src
    dst = resolve_frame(args.frame_dst) if args.frame_dst else src
    base = _parse_vector(args.base, src.dim_n, "base")
    ladder = _parse_ladder(args.ladder)
    inner = resolve_map(args.map_inner, src.dim_n)
    outer = resolve_map(args.map_outer, mid.dim_n)
    tol = 1e-4 if args.tol is None else float(args.tol)
    result = chain_rule_check(inner, outer, _suite_chart(src, base,
                                                         args.ode_tol),
                              _suite_chart(mid, np.zeros(mid.dim_n),
                                           args.ode_tol),
                              _suite_chart(dst, np.zeros(dst.dim_n),
                                           args.ode_tol),
                              ladder, tolerance=tol)
    row = CheckRow(
        check_id="chain_rule", passed=result.passed, tolerance=tol,
        rungs=[Rung(eps=0.0, measured=result.gap, reference=0.0,
                    error=result.gap)],
        detail=f"largest entry gap {fmt(result.gap)} between the composed "
               "differential and the factor product")
    preamble = _preamble(args, src, base,
                         [f"inner map {inner.name}, outer map {outer.name}"]
                         + _matrix_lines(result.composed))
    return _emit_checks(args, f"chain rule: {outer.name}({inner.name})",
                        [row], frame_name=src.name,
                        base_text=vector_text(base), preamble=preamble)


# ---------------------------------------------------------------------------
# parser assembly

def _add_common(p, *, frame=True, seed=False, ladder=False):
    p.add_argument("--config", help="YAML file of option defaults")
    p.add_argument("--out", help="write <out>.txt (+ <out>.csv for checks)")
    p.add_argument("--ode-tol", dest="ode_tol", type=float)
    p.add_argument("--limit-tol", dest="limit_tol", type=float)
    p.add_argument("--order-margin", dest="order_margin", type=float)
    p.add_argument("--base")
    if frame:
        p.add_argument("--frame", required=True,
                       help="built-in name or frame definition file")
    if seed:
        p.add_argument("--seed", type=int)
    if ladder:
        p.add_argument("--ladder", help="eps0,ratio,count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carnotcone",
        description="local tangent cones of weighted vector-field frames")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("exp", help="time-1 flow of a coefficient vector")
    _add_common(p)
    p.add_argument("--coeffs", required=True)
    p.set_defaults(func=_cmd_exp)

    p = sub.add_parser("dist", help="frame quasimetric between two points")
    _add_common(p)
    p.add_argument("--u", required=True)
    p.add_argument("--w", required=True)
    p.set_defaults(func=_cmd_dist)

    p = sub.add_parser("dilate", help="base-pointed dilation of a point")
    _add_common(p)
    p.add_argument("--point", required=True)
    p.add_argument("--eps", required=True, type=float)
    p.set_defaults(func=_cmd_dilate)

    p = sub.add_parser("nilpotentize",
                       help="graded structure constants at a base point")
    _add_common(p)
    p.set_defaults(func=_cmd_nilpotentize)

    p = sub.add_parser("gmul", help="group product of coordinate vectors")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=_cmd_gmul)

    p = sub.add_parser("ginv", help="group inverse of a coordinate vector")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.set_defaults(func=_cmd_ginv)

    p = sub.add_parser("gdist", help="group quasimetric between vectors")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=_cmd_gdist)

    p = sub.add_parser("verify-axioms",
                       help="run the dilation axiom suite")
    _add_common(p, seed=True, ladder=True)
    p.set_defaults(func=_cmd_verify_axioms)

    p = sub.add_parser("approx-order",
                       help="convergence order of the group model gap")
    _add_common(p, seed=True, ladder=True)
    p.add_argument("--samples", type=int, default=50)
    p.set_defaults(func=_cmd_approx_order)

    p = sub.add_parser("divergence",
                       help="flow against model flow, distance over eps")
    _add_common(p, seed=True, ladder=True)
    p.add_argument("--u", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--contract-target", dest="contract_target",
                   action="store_true",
                   help="pull v toward u along the ladder")
    p.set_defaults(func=_cmd_divergence)

    p = sub.add_parser("assoc-check",
                       help="parenthesization independence of scaled words")
    _add_common(p, seed=True, ladder=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--mode", choices=("group", "limit"), default="group")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_assoc_check)

    p = sub.add_parser("pansu", help="fit and verify a differential")
    _add_common(p, frame=False, seed=True, ladder=True)
    p.add_argument("--frame-src", dest="frame_src", required=True)
    p.add_argument("--frame-dst", dest="frame_dst")
    p.add_argument("--map", required=True,
                   help="built-in map name or map definition file")
    p.set_defaults(func=_cmd_pansu)

    p = sub.add_parser("chain", help="chain rule for composed differentials")
    _add_common(p, seed=True, ladder=True)
    p.add_argument("--frame-mid", dest="frame_mid")
    p.add_argument("--frame-dst", dest="frame_dst")
    p.add_argument("--map-inner", dest="map_inner", required=True)
    p.add_argument("--map-outer", dest="map_outer", required=True)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_chain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        _apply_env_seed(args)
        _fill_defaults(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CarnotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
