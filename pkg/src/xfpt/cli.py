"""Command-line experiment runner.

Usage::

    xfpt <subcommand> --config scenario.json [--out DIR] [--seed S] [--threads T]

Every CSV starts with a ``# provenance:`` comment carrying the SHA-256 of
the canonical configuration and the seed, followed by a header row.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .extreme import (GridCoverageError, OrderingError, asymptotic_eval, asymptotic_law,
                      hitting_prob_quadrature, tabulate_with_coverage, verify_prop_p1)
from .geo import GeodesicError, bound_exponent
from .mc import RngStream, estimate_extreme
from .scenario import ConfigError, ScenarioSpec, dump_spec, load_spec
from .shorttime import InsufficientResolution, catalog, fit_shorttime

__all__ = ["main", "run"]

P1_DEFAULTS = {"A": 1.0, "p": 0.5, "q": 0.5, "C": 1.0, "C_plus": 1.4938, "delta": 0.5,
               "N_list": [10.0**j for j in range(3, 10)]}
# short-time fits need the tail down to F ~ 1e-250, i.e. C/t ~ 575
_FIT_EXPONENT = 575.0


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows, provenance: str) -> None:
    buf = io.StringIO()
    buf.write(f"# provenance: {provenance}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _provenance(text: str, seed: int, sub: str) -> str:
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return f"config_sha256={digest} seed={seed} subcommand={sub} xfpt={__version__}"


def _ln(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def _coverage_tab(spec: ScenarioSpec, N_list):
    C0 = min(spec.target_lengths()) ** 2 / (4 * spec.D)
    return tabulate_with_coverage(spec.tabulate, spec.tabulate_grid(), N_list, C0)


# --------------------------------------------------------------------------
# subcommands


def cmd_dist(spec, args, prov):
    tab = spec.tabulate(spec.tabulate_grid())
    header = ["t", "F", "log_F"]
    for k in range(tab.m):
        header += [f"F_{k}", f"log_F_{k}"]
    rows = []
    for i, t in enumerate(tab.times):
        row = [t, tab.F[i], tab.log_F[i]]
        for k in range(tab.m):
            row += [tab.Fk[k, i], tab.log_Fk[k, i]]
        rows.append(row)
    _write_csv(args.out / "dist.csv", header, rows,
               prov + " tail_mass=" + ";".join(_num(v) for v in tab.tail_mass)
               + f" escape_mass={_num(tab.escape_mass)}")
    return 0


def cmd_extreme(spec, args, prov):
    tab = _coverage_tab(spec, spec.N_ladder)
    rows = []
    for k in range(tab.m):
        for N in spec.N_ladder:
            r = hitting_prob_quadrature(tab, N, k)
            rows.append([spec.kind, k, N, r.p, r.log_p, "quadrature"])
    _write_csv(args.out / "extreme.csv", ["kind", "k", "N", "p", "log_p", "method"], rows, prov)
    return 0


def _laws(spec):
    cat = catalog(spec)
    return cat, {k: asymptotic_law(cat[0], cat[k]) for k in range(1, len(cat))}


def cmd_asymptotic(spec, args, prov):
    cat, laws = _laws(spec)
    rows = []
    for k, law in laws.items():
        proven = cat[0].proven and cat[k].proven
        for N in spec.N_ladder:
            if N < 2:
                continue
            r = asymptotic_eval(law, N, k)
            rows.append([spec.kind, k, N, r.p, r.log_p, "asymptotic", law.beta, law.rho,
                         law.log_eta, r.diagnostics["clamped"], proven])
    _write_csv(args.out / "asymptotic.csv",
               ["kind", "k", "N", "p", "log_p", "method", "beta", "rho", "log_eta", "clamped", "proven"],
               rows, prov)
    return 0


def cmd_mc(spec, args, prov):
    tab = _coverage_tab(spec, spec.N_ladder)
    rng = RngStream(spec.seed, 0)
    rows = []
    for i, N in enumerate(spec.N_ladder):
        ests = estimate_extreme(tab, N, spec.trials, RngStream(rng.seed, i), threads=args.threads)
        for e in ests:
            k = "inf" if e.k is None else e.k
            rows.append([spec.kind, k, N, e.p_hat, _ln(e.p_hat), "monte_carlo", e.ci_low, e.ci_high,
                         e.samples])
    _write_csv(args.out / "mc.csv",
               ["kind", "k", "N", "p", "log_p", "method", "ci_low", "ci_high", "samples"], rows, prov)
    return 0


def cmd_bound(spec, args, prov):
    L = spec.target_lengths()
    D = spec.scene.D_ref if spec.kind == "geodesic_scene" else spec.D
    rows = []
    for k, Lk in enumerate(L):
        if k == 0:
            rows.append([0, Lk, Lk**2 / (4 * D), 0.0])
            continue
        expo, _, Ck = bound_exponent(L[0], Lk, D)
        rows.append([k, Lk, Ck, expo])
    _write_csv(args.out / "bound.csv", ["k", "L_k", "C_k", "exponent"], rows, prov)
    return 0


def cmd_fit(spec, args, prov):
    cat = catalog(spec)
    grid = spec.tabulate_grid()
    C0 = min(spec.target_lengths()) ** 2 / (4 * spec.D)
    if spec.grid.t_min is None:
        grid = np.geomspace(C0 / _FIT_EXPONENT, grid[-1], grid.size)
    tab = spec.tabulate(grid)
    rows = []
    for k in range(tab.m):
        fit = fit_shorttime(tab, k)
        c = cat[k]
        rows.append([k, fit.params.A, fit.params.p, fit.params.C, c.A, c.p, c.C, fit.residual, c.proven])
    _write_csv(args.out / "fit.csv",
               ["target", "A_fit", "p_fit", "C_fit", "A_cat", "p_cat", "C_cat", "residual", "proven"],
               rows, prov)
    return 0


def cmd_figure(spec, args, prov):
    k = args.target
    _, laws = _laws(spec)
    if k not in laws:
        raise ConfigError("target", f"no asymptotic law for target {k}")
    ladder = [N for N in spec.N_ladder if N >= 2]
    tab = _coverage_tab(spec, ladder)
    rows = []
    for N in ladder:
        q = hitting_prob_quadrature(tab, N, k)
        a = asymptotic_eval(laws[k], N, k)
        rel = abs(math.expm1(a.log_p - q.log_p))
        rows.append([N, q.p, a.p, rel, q.log_p, a.log_p])
    _write_csv(args.out / "figure.csv", ["N", "p_quad", "p_asym", "rel_err", "log_p_quad", "log_p_asym"],
               rows, prov)
    return 0


def cmd_verify_p1(args, prov):
    params = dict(P1_DEFAULTS)
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        bad = sorted(set(data) - set(params))
        if bad:
            raise ConfigError(bad[0], "not a verify-p1 parameter")
        params.update(data)
    rows = verify_prop_p1(params["A"], params["p"], params["q"], params["C"], params["C_plus"],
                          params["delta"], params["N_list"])
    _write_csv(args.out / "p1.csv",
               ["N", "integral", "log_integral", "asymptote", "log_asymptote", "ratio"],
               [[r.N, r.integral, r.log_integral, r.asymptote, r.log_asymptote, r.ratio] for r in rows],
               prov)
    return 0


COMMANDS = {
    "dist": cmd_dist,
    "extreme": cmd_extreme,
    "asymptotic": cmd_asymptotic,
    "mc": cmd_mc,
    "bound": cmd_bound,
    "fit": cmd_fit,
    "figure": cmd_figure,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xfpt", description="Extreme first-passage hitting probabilities.")
    parser.add_argument("--version", action="version", version=f"xfpt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "dist": "tabulate F and F_k",
        "extreme": "quadrature ladder of P(K_N = k)",
        "asymptotic": "large-N laws and their values on the ladder",
        "mc": "Monte Carlo ladder with Wilson intervals",
        "bound": "geodesic target distances and the decay-exponent bound",
        "verify-p1": "integral vs asymptote table for the basic Laplace-type estimate",
        "fit": "short-time fit of each F_k against the catalog",
        "figure": "quadrature, asymptote and relative error side by side",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, required=name != "verify-p1",
                       help="scenario JSON file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $XFPT_THREADS or 1)")
        p.add_argument("--dump-config", action="store_true",
                       help="print the canonical configuration and exit")
        if name == "figure":
            p.add_argument("--target", type=int, default=1, help="far target index")
    return parser


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is None:
        env = os.environ.get("XFPT_THREADS")
        args.threads = int(env) if env else 1
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "verify-p1":
            if args.dump_config:
                print(json.dumps(P1_DEFAULTS, indent=2, sort_keys=True))
                return 0
            text = args.config.read_text(encoding="utf-8") if args.config else json.dumps(P1_DEFAULTS)
            return cmd_verify_p1(args, _provenance(text, 0, args.command))
        spec = load_spec(args.config)
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        text = dump_spec(spec)
        if args.dump_config:
            sys.stdout.write(text)
            return 0
        return COMMANDS[args.command](spec, args, _provenance(text, spec.seed, args.command))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OrderingError, GeodesicError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except GridCoverageError as exc:
        print(f"grid coverage error: {exc}\n  hint: set grid.t_min lower or grid.N_max higher",
              file=sys.stderr)
        return 3
    except InsufficientResolution as exc:
        print(f"fit error: {exc}\n  hint: set grid.t_min lower, raise grid.points, "
              "or enable grid.richardson", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
