"""Command-line harness.

Subcommands: ``scenario``, ``run``, ``sweep``, ``bounds``, ``diagnose``.
Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.  Output goes to ``--out``; without it, to
``$BVFT_OUTPUT_DIR`` if set, else ``./bvft-out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .baselines import run_fqi
from .data import sample_dataset
from .errors import CapacityError, NumericalError, ParameterError, ShapeError
from .functions import Partition, build_partition, discretize
from .mdp import _fmt, greedy_policy, policy_return, solve_q_star
from .scenarios import (SCENARIOS, load_bundle, make_fig2, make_fig3, make_function_class,
                        make_low_rank, make_on_policy_chain, make_random_exploratory, save_bundle)
from .tournament import BvftConfig, diagnose_fixed_points, run_bvft, sample_size_bound, \
    theorem1_schedule

OUTPUT_ENV = "BVFT_OUTPUT_DIR"
SUMMARY_HEADER = "# bvft-summary v1"
SWEEP_HEADER = "# bvft-sweep v1"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _out_dir(args) -> Path:
    import os
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV) or "bvft-out")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

def cmd_scenario(args) -> int:
    name = args.name
    if name == "fig2":
        b = make_fig2(args.s4_mass)
    elif name == "fig3":
        b = make_fig3(args.p, args.n_chain)
    elif name == "low-rank":
        b = make_low_rank(args.states, args.actions, args.d, args.seed, args.gamma)
    elif name == "on-policy":
        b = make_on_policy_chain(args.states, args.seed)
    else:
        b = make_random_exploratory(args.states, args.actions, args.gamma, args.mix, args.seed)
        mags = [args.magnitude * b.mdp.v_max] * (args.candidates - 1)
        b.f_class = make_function_class(b.extra["q_star"], args.candidates, mags, args.seed + 1,
                                        b.mdp.v_max)
    if name in ("low-rank", "random"):
        from .data import check_assumption1
        rep = check_assumption1(b.mdp, b.mu)
        b.extra["c_s"] = rep.c_s
        b.extra["c_a"] = rep.c_a
    out = save_bundle(b, _out_dir(args))
    print(f"wrote {b.name} bundle to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _bundle_data(b, args, seed):
    mu = b.variants[args.variant] if args.variant else b.mu
    if args.mode == "exact":
        return (mu, b.mdp)
    return sample_dataset(b.mdp, mu, args.n, seed)


def _load(args):
    path = Path(args.bundle)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"no scenario bundle at {path}")
    b = load_bundle(path)
    if args.variant and args.variant not in b.variants:
        raise ParameterError(f"unknown variant '{args.variant}'")
    return b


def _summary_row(fields) -> str:
    out = []
    for x in fields:
        if isinstance(x, float):
            out.append(_fmt(x))
        elif x is None:
            out.append("")
        else:
            out.append(str(x))
    return ",".join(out)


def cmd_run(args) -> int:
    if args.bundle == "bounds":
        return main(["bounds"] + args.rest)
    if args.rest:
        raise UsageError(f"unrecognized arguments: {' '.join(args.rest)}")
    if not args.seeds:
        raise UsageError("at least one seed is required")
    b = _load(args)
    out = _out_dir(args)
    q_star = solve_q_star(b.mdp)
    rows = []
    seeds = args.seeds if args.mode == "empirical" else args.seeds[:1]
    for seed in seeds:
        data = _bundle_data(b, args, seed)
        tag = f"seed{seed}"
        if args.algo == "bvft":
            if b.f_class is None:
                raise ParameterError("bundle has no candidate class")
            cfg = BvftConfig(eps_dct=args.eps_dct, mode=args.mode, seed=seed, diagnose=args.diagnose,
                             eps_prime=args.eps_prime, grid_res=args.grid_res,
                             group_cap=args.group_cap)
            rep = run_bvft(b.f_class, data, cfg, gamma=b.mdp.discount, oracle=b.mdp)
            _write(out / tag / "report.json", rep.to_json())
            _write(out / tag / "loss_matrix.csv", rep.loss_matrix_csv())
            rows.append([seed, "bvft", rep.selected_label, float(rep.max_loss[rep.selected]),
                         float(rep.dist_to_q_star[rep.selected]), float(rep.regret),
                         int(rep.tie)])
        else:
            phi = b.phi if b.phi is not None else Partition.singletons(*b.mdp.transition.shape[:2])
            init = np.zeros(phi.shape)
            res = run_fqi(phi, data, init, args.iterations, b.mdp.discount)
            ret = policy_return(b.mdp, greedy_policy(res.values))
            opt = policy_return(b.mdp, greedy_policy(q_star))
            _write(out / tag / "fqi.json", json.dumps({
                "format": "bvft-fqi v1", "values": res.values.tolist(),
                "last_step": res.last_step, "iterations": res.iterations}, indent=2) + "\n")
            rows.append([seed, "fqi", "fqi", res.last_step,
                         float(np.max(np.abs(res.values - q_star))), float(opt - ret), 0])
    header = "seed,algo,selected,max_loss,dist_to_q_star,regret,tie"
    _write(out / "summary.csv",
           SUMMARY_HEADER + "\n" + header + "\n" + "\n".join(_summary_row(r) for r in rows) + "\n")
    manifest = {
        "format": "bvft-run v1",
        "bundle": b.name,
        "bundle_params": b.params,
        "config": {k: v for k, v in vars(args).items() if k not in ("func", "out", "rest")},
        "seeds": list(seeds),
        "versions": {"bvft": __version__, "numpy": np.__version__},
        "backend": _kernels.BACKEND,
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, default=str) + "\n")
    for r in rows:
        print(_summary_row(r))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def read_sweep(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != SWEEP_HEADER:
        raise ValueError("not a bvft-sweep v1 document")
    cols = lines[1].split(",")
    rows = []
    for ln in lines[2:]:
        rec = dict(zip(cols, ln.split(",")))
        rows.append({"n": int(rec["n"]), "seed": int(rec["seed"]), "statistic": rec["statistic"],
                     "value": float(rec["value"])})
    return rows


def cmd_sweep(args) -> int:
    if not args.seeds:
        raise UsageError("at least one seed is required")
    if not args.ns:
        raise UsageError("at least one sample size is required")
    b = _load(args)
    if b.f_class is None:
        raise ParameterError("bundle has no candidate class")
    mu = b.variants[args.variant] if args.variant else b.mu
    exact = run_bvft(b.f_class, (mu, b.mdp), BvftConfig(args.eps_dct, mode="exact"))
    q_star = solve_q_star(b.mdp)
    lines = [SWEEP_HEADER, "n,seed,statistic,value"]
    for n in sorted(args.ns):
        for seed in sorted(args.seeds):
            d = sample_dataset(b.mdp, mu, n, seed)
            rep = run_bvft(b.f_class, d, BvftConfig(args.eps_dct, seed=seed), gamma=b.mdp.discount)
            sel = b.f_class[rep.selected]
            stats = {
                "loss_gap": float(np.max(np.abs(rep.loss_matrix - exact.loss_matrix))),
                "selected": float(rep.selected),
                "max_loss": float(rep.max_loss[rep.selected]),
                "dist_to_q_star": float(np.max(np.abs(sel - q_star))),
            }
            lines += [f"{n},{seed},{k},{_fmt(v)}" for k, v in stats.items()]
    text = "\n".join(lines) + "\n"
    _write(_out_dir(args) / "sweep.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds / diagnose
# ---------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    if args.kind == "theorem1":
        if None in (args.epsilon, args.gamma, args.c, args.f_count):
            raise UsageError("theorem1 needs --epsilon, --gamma, --c and --f-count")
        eps_dct, eps_tilde, n = theorem1_schedule(args.epsilon, args.gamma, args.c, args.v_max,
                                                  args.f_count, args.delta)
        print(f"eps_dct={_fmt(eps_dct)} eps_tilde={_fmt(eps_tilde)} n={n}")
        return EXIT_OK
    try:
        n = sample_size_bound(args.kind, v_max=args.v_max, phi_size=args.phi_size,
                              eps_tilde=args.eps_tilde, eps_1=args.eps_1, delta=args.delta)
    except ParameterError as e:
        if "missing" in str(e):
            raise UsageError(str(e)) from e
        raise
    print(n)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    b = _load(args)
    data = _bundle_data(b, args, args.seed)
    if b.phi is not None:
        phi = b.phi
    elif b.f_class is not None:
        bar = discretize(b.f_class[0], args.eps_dct, b.mdp.v_max)
        phi = build_partition(bar, bar)
    else:
        raise ParameterError("bundle has neither a partition nor candidates")
    diag = diagnose_fixed_points(phi, data, args.eps_prime, args.grid_res, args.group_cap,
                                 gamma=b.mdp.discount, v_max=b.mdp.v_max, eps_dct=args.eps_dct,
                                 allow_heuristic=not args.no_heuristic, seed=args.seed)
    doc = {"format": "bvft-diagnostic v1", "bundle": b.name, "variant": args.variant,
           "mode": args.mode, "n": args.n if args.mode == "empirical" else None, "seed": args.seed,
           "spread": diag.spread, "method": diag.method, "num_points": diag.num_points,
           "num_groups_searched": diag.num_groups_searched, "truncated": diag.truncated}
    _write(_out_dir(args) / "diagnostic.json", json.dumps(doc, indent=2) + "\n")
    print(f"spread={_fmt(diag.spread)} method={diag.method} points={diag.num_points}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(x):
    v = int(x)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bvft", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bvft {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out_flag(sp):
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./bvft-out)")

    s = sub.add_parser("scenario", help="materialize a scenario bundle")
    s.add_argument("name", choices=sorted(SCENARIOS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--states", type=_positive_int, default=20)
    s.add_argument("--actions", type=_positive_int, default=2)
    s.add_argument("--d", type=_positive_int, default=3, help="rank for low-rank (default 3)")
    s.add_argument("--gamma", type=float, default=0.9)
    s.add_argument("--mix", type=float, default=0.3, help="uniform mixing weight (default 0.3)")
    s.add_argument("--p", type=float, default=0.1, help="fig3 context decay (default 0.1)")
    s.add_argument("--n-chain", type=int, default=8)
    s.add_argument("--s4-mass", type=float, default=0.0)
    s.add_argument("--candidates", type=_positive_int, default=11,
                   help="class size for random bundles (default 11)")
    s.add_argument("--magnitude", type=float, default=0.5,
                   help="distractor magnitude as a fraction of v_max (default 0.5)")
    out_flag(s)
    s.set_defaults(func=cmd_scenario)

    def data_flags(sp):
        sp.add_argument("--mode", choices=["empirical", "exact"], default="empirical")
        sp.add_argument("--n", type=_positive_int, default=100_000, help="dataset size")
        sp.add_argument("--variant", default=None, help="alternative data distribution")
        sp.add_argument("--eps-dct", type=float, default=0.05)

    r = sub.add_parser("run", help="run the tournament or FQI on a bundle")
    r.add_argument("bundle", help="bundle directory, or 'bounds' to evaluate a bound")
    r.add_argument("--algo", choices=["bvft", "fqi"], default="bvft")
    r.add_argument("--seeds", type=int, nargs="*", default=[0])
    r.add_argument("--iterations", type=int, default=200)
    r.add_argument("--diagnose", action="store_true")
    r.add_argument("--eps-prime", type=float, default=None)
    r.add_argument("--grid-res", type=float, default=None)
    r.add_argument("--group-cap", type=int, default=None)
    data_flags(r)
    out_flag(r)
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep", help="tournament over a grid of sample sizes and seeds")
    w.add_argument("bundle")
    w.add_argument("--ns", type=_positive_int, nargs="*", default=[100, 1000, 10_000, 100_000])
    w.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2])
    w.add_argument("--variant", default=None)
    w.add_argument("--eps-dct", type=float, default=0.05)
    out_flag(w)
    w.set_defaults(func=cmd_sweep)

    bd = sub.add_parser("bounds", help="evaluate a sample-size bound or the parameter schedule")
    bd.add_argument("--kind", choices=["lemma6", "lemma7", "prop4", "theorem1"], required=True)
    bd.add_argument("--v-max", type=float, default=1.0)
    bd.add_argument("--phi-size", type=int, default=None)
    bd.add_argument("--eps-tilde", type=float, default=None)
    bd.add_argument("--eps-1", type=float, default=None)
    bd.add_argument("--delta", type=float, default=0.1)
    bd.add_argument("--epsilon", type=float, default=None)
    bd.add_argument("--gamma", type=float, default=None)
    bd.add_argument("--c", type=float, default=None)
    bd.add_argument("--f-count", type=int, default=None)
    bd.set_defaults(func=cmd_bounds)

    dg = sub.add_parser("diagnose", help="fixed-point spread of the projected update")
    dg.add_argument("bundle")
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--eps-prime", type=float, default=None)
    dg.add_argument("--grid-res", type=float, default=None)
    dg.add_argument("--group-cap", type=int, default=None)
    dg.add_argument("--no-heuristic", action="store_true")
    data_flags(dg)
    out_flag(dg)
    dg.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
        if args.command == "run":
            args.rest = rest
        elif rest:
            parser.error(f"unrecognized arguments: {' '.join(rest)}")
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParameterError, ShapeError, CapacityError, ValueError, KeyError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
