"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 failed check or
solver/run failure, 3 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import __version__
from .errors import ConfigError, MsreError, ParameterError

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("msre")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kw):
        # prefix matching would let --v shadow subcommand flags with --version
        kw.setdefault("allow_abbrev", False)
        super().__init__(*args, **kw)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


# disorder / lattice / solve / energy

def _model_args(p, with_K=True):
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--delta", type=float, default=1.0)
    if with_K:
        p.add_argument("--K", type=int, default=None,
                       help="grid half-extent in steps (default: grid policy with kappa=4)")
    p.add_argument("--seed", type=int, required=True)


def _grid_for(args):
    from .disorder import HeightGrid, HurstParams
    from .experiments.config import height_scale
    K = args.K
    if K is None:
        K = int(np.ceil(4.0 * height_scale(args.d, args.H, args.L) / args.delta))
        K += int(np.ceil(abs(getattr(args, "tau_const", 0.0) or 0.0) / args.delta))
    return HeightGrid(args.n, args.delta, K), HurstParams(args.H, args.n)


def cmd_disorder(args):
    from .disorder import sample_disorder
    from .io import save_disorder
    from .lattice import Domain
    dom = Domain.box(args.L, args.d)
    grid, params = _grid_for(args)
    field = sample_disorder(dom, grid, params, args.seed, resample=args.resample)
    save_disorder(args.out, field)
    log.info("wrote %s (%d vertices x %d grid points)", args.out, dom.size, grid.size)
    return EXIT_OK


def cmd_lattice(args):
    from .lattice import Domain, greens_function
    dom = Domain.box(args.L, args.d)
    v = [0] * args.d if args.v is None else [int(x) for x in args.v.split(",")]
    if len(v) != args.d:
        raise UsageError(f"--v needs {args.d} comma-separated coordinates")
    G = greens_function(dom, v)
    lines = [",".join([f"x{i}" for i in range(args.d)] + ["G"])]
    for x in dom.vertices():
        lines.append(",".join([str(int(c)) for c in x] + [repr(float(G.at(x)[0]))]))
    text = "\n".join(lines) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_solve(args):
    from .disorder import sample_disorder
    from .io import load_disorder
    from .lattice import Domain, LatticeField
    from .solvers import solve
    if args.disorder:
        field = load_disorder(args.disorder)
        dom = field.domain
    else:
        missing = [k for k in ("d", "H", "L", "seed") if getattr(args, k) is None]
        if missing:
            raise UsageError("solve: missing " + ", ".join(_flag(k) for k in missing)
                             + " (or pass --disorder)")
        dom = Domain.box(args.L, args.d)
        grid, params = _grid_for(args)
        field = sample_disorder(dom, grid, params, args.seed)
    tau = None
    if args.tau_const:
        c = np.zeros(field.n)
        c[0] = args.tau_const
        tau = LatticeField.constant(dom, c)
    opts = {}
    if args.solver == "coord_descent":
        opts = {"restarts": args.restarts, "seed": args.seed or 0}
    res = solve(field, args.solver, tau=tau, **opts)
    config = {k: getattr(args, k) for k in ("d", "n", "H", "L", "delta", "K", "seed",
                                            "solver", "tau_const", "disorder")}
    if args.disorder:
        # describe the loaded field rather than the unused flags
        config.update(d=dom.d, n=field.n, H=field.H, delta=field.grid.delta, K=field.grid.K,
                      seed=field.rng_seed, L=None)
    out = {
        "code_version": __version__,
        "config": config,
        "GE": res.ground_energy,
        "max_height": res.max_height(),
        "solver": res.solver_id,
        "exact": res.exact,
        "pinned": res.pinned(),
        "grid_K": res.grid_K,
        "stats": {k: v for k, v in res.stats.items() if not isinstance(v, (list, np.ndarray))},
    }
    if args.heights:
        out["heights"] = res.phi.interior().tolist()
        out["vertices"] = dom.vertices().tolist()
    _write_json(out, args.out)
    return EXIT_OK


def cmd_energy(args):
    from .verify import check_main_identity
    res = check_main_identity(n_instances=args.instances, seed=args.seed)
    print(res.line())
    return EXIT_OK if res.ok else EXIT_FAIL


# configuration-driven subcommands

def _resolve_config(cls, args, required_flags=()):
    from .experiments.config import _coerce, merge_sources, read_env, read_kv_file
    names = [f.name for f in fields(cls)]
    file_vals = read_kv_file(args.config) if args.config else {}
    unknown = set(file_vals) - set(names)
    if unknown:
        raise ConfigError(f"unknown configuration key(s) in {args.config}: "
                          + ", ".join(sorted(unknown)))
    env_vals = read_env(names)
    flag_vals = {k: getattr(args, k, None) for k in names}
    merged = merge_sources(file_vals, env_vals, flag_vals)
    for k in required_flags:
        if merged.get(k) is None:
            raise UsageError(f"missing required key: {k} (flag {_flag(k)} or MSRE_{k.upper()})")
    return merged, _coerce


def _add_config_flags(p, cls, skip=()):
    for f in fields(cls):
        if f.name in skip:
            continue
        kind = str(f.type)
        if kind == "bool":
            p.add_argument(_flag(f.name), dest=f.name, default=None,
                           type=lambda s: s.lower() in ("1", "true", "yes", "on"))
        elif kind == "list":
            p.add_argument(_flag(f.name), dest=f.name, default=None)
        else:
            p.add_argument(_flag(f.name), dest=f.name, default=None)
    p.add_argument("--config", default=None, help="flat key=value file")


def cmd_sweep(args):
    from .experiments.config import ExperimentConfig
    from .experiments.sweep import run_height_sweep
    merged, _ = _resolve_config(ExperimentConfig, args,
                                ("d", "n", "H", "L_values", "samples_per_L", "seed"))
    config = ExperimentConfig.from_dict(merged)
    log.info("msre %s sweep config %s", __version__, json.dumps(config.to_dict(), sort_keys=True))
    jobs = args.jobs or os.cpu_count() or 1

    def progress(k, total):
        log.debug("sample %d/%d", k, total)

    records, errors = run_height_sweep(config, config.output, jobs=jobs,
                                       resume=not args.no_resume, progress=progress)
    log.info("%d records, %d errors -> %s", len(records), len(errors), config.output)
    return EXIT_OK


def _load_records(path):
    from .experiments.records import read_records
    return read_records(path)


def cmd_summarize(args):
    from .experiments.estimators import summarize, write_summary_csv
    rs = _load_records(args.records)
    cfg = rs.header["config"]
    rows = summarize(rs.records, cfg["H"], cfg["n"], min_hpm=args.min_hpm)
    write_summary_csv(rows, args.out)
    log.info("summary of %d records -> %s", len(rs.records), args.out)
    return EXIT_OK


def cmd_exponents(args):
    from .experiments import estimators as est
    if bool(args.records) == bool(args.summary):
        raise UsageError("exponents: pass exactly one of --records or --summary")
    if args.records:
        rs = _load_records(args.records)
        cfg = rs.header["config"]
        d, H = cfg["d"], cfg["H"]
        xi = est.estimate_xi(rs.records, min_samples=args.min_samples)
        chi = est.estimate_chi(rs.records, min_samples=args.min_samples)
    else:
        if args.d is None or args.H is None:
            raise UsageError("exponents --summary needs --d and --H")
        d, H = args.d, args.H
        rows = est.read_summary_csv(args.summary)
        xi = est.estimate_from_summary(rows, "median_max_height")
        chi = est.estimate_from_summary(rows, "std_GE")
    from .experiments.config import chi_pred, xi_pred
    rel = est.check_scaling_relations(xi, chi, d, H)
    _write_json({"code_version": __version__, "d": d, "H": H, "xi": xi.to_dict(),
                 "chi": chi.to_dict(), "xi_predicted": xi_pred(d, H),
                 "chi_predicted": chi_pred(d, H), "scaling": asdict(rel)}, args.out)
    return EXIT_OK


def cmd_couple(args):
    from .experiments.coupling import CouplingConfig, delocalization_coupling_demo
    merged, coerce = _resolve_config(CouplingConfig, args)
    types = {f.name: str(f.type) for f in fields(CouplingConfig)}
    clean = {}
    for k, v in merged.items():
        if v is None:
            continue
        if isinstance(v, str):
            t = types[k]
            try:
                if t.startswith("int"):
                    v = int(v)
                elif t.startswith("float"):
                    v = float(v)
                elif t == "bool":
                    v = v.lower() in ("1", "true", "yes", "on")
            except ValueError:
                raise ConfigError(f"bad value for {k}: {v!r}") from None
        clean[k] = v
    config = CouplingConfig(**clean)
    resolved = config.resolved()
    log.info("msre %s couple config %s", __version__, json.dumps(asdict(resolved), sort_keys=True))
    rep = delocalization_coupling_demo(config)
    out = {"code_version": __version__, "config": rep.config, **rep.summary(),
           "conditional_significant": rep.conditional_significant,
           "control_significant": rep.control_significant, "marginal_ok": rep.marginal_ok}
    _write_json(out, args.out)
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_suite
    results = run_suite(quick=args.quick, seed=args.seed)
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_plot_data(args):
    from .experiments.plots import write_plot_data
    rs = _load_records(args.records)
    csv_path, gp = write_plot_data(rs.records, args.out, args.statistic)
    log.info("wrote %s and %s", csv_path, gp)
    return EXIT_OK


def build_parser():
    from .experiments.config import ExperimentConfig
    from .experiments.coupling import CouplingConfig
    p = _Parser(prog="msre", description="Minimal surfaces in random environments: sampling, "
                "exact ground states, sweeps and estimators.")
    p.add_argument("--version", action="version", version=f"msre {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    dis = sub.add_parser("disorder", help="disorder fields")
    dsub = dis.add_subparsers(dest="action", parser_class=_Parser)
    ds = dsub.add_parser("sample", help="sample a disorder field into a binary container")
    _model_args(ds)
    ds.add_argument("--resample", type=int, default=0)
    ds.add_argument("--out", required=True)
    ds.set_defaults(func=cmd_disorder)

    lat = sub.add_parser("lattice", help="lattice utilities")
    lsub = lat.add_subparsers(dest="action", parser_class=_Parser)
    lg = lsub.add_parser("green", help="Green's function of a box as CSV")
    lg.add_argument("--d", type=int, required=True)
    lg.add_argument("--L", type=int, required=True)
    lg.add_argument("--v", default=None, help="pole, comma separated (default origin)")
    lg.add_argument("--out", default="-")
    lg.set_defaults(func=cmd_lattice)

    so = sub.add_parser("solve", help="ground state of one disorder sample (JSON)")
    so.add_argument("--d", type=int)
    so.add_argument("--n", type=int, default=1)
    so.add_argument("--H", type=float)
    so.add_argument("--L", type=int)
    so.add_argument("--delta", type=float, default=1.0)
    so.add_argument("--K", type=int, default=None)
    so.add_argument("--seed", type=int)
    so.add_argument("--disorder", default=None, help="container written by 'disorder sample'")
    so.add_argument("--solver", default="auto")
    so.add_argument("--tau-const", dest="tau_const", type=float, default=0.0)
    so.add_argument("--restarts", type=int, default=4)
    so.add_argument("--heights", action="store_true", help="include per-site heights")
    so.add_argument("--out", default="-")
    so.set_defaults(func=cmd_solve)

    en = sub.add_parser("energy", help="energy identities")
    esub = en.add_subparsers(dest="action", parser_class=_Parser)
    ec = esub.add_parser("check-identity", help="randomised main-identity sweep")
    ec.add_argument("--instances", type=int, default=1000)
    ec.add_argument("--seed", type=int, default=0)
    ec.set_defaults(func=cmd_energy)

    sw = sub.add_parser("sweep", help="height sweep over L and samples (JSONL records)")
    _add_config_flags(sw, ExperimentConfig)
    sw.add_argument("--jobs", type=int, default=None, help="worker processes (default: cores)")
    sw.add_argument("--no-resume", action="store_true")
    sw.set_defaults(func=cmd_sweep)

    ex = sub.add_parser("exponents", help="fit ξ and χ and check the scaling relations")
    ex.add_argument("--records", default=None)
    ex.add_argument("--summary", default=None)
    ex.add_argument("--d", type=int, default=None)
    ex.add_argument("--H", type=float, default=None)
    ex.add_argument("--min-samples", dest="min_samples", type=int, default=30)
    ex.add_argument("--out", default="-")
    ex.set_defaults(func=cmd_exponents)

    co = sub.add_parser("couple", help="η̂ resampling coupling experiment")
    _add_config_flags(co, CouplingConfig)
    co.add_argument("--out", default="-")
    co.set_defaults(func=cmd_couple)

    sm = sub.add_parser("summarize", help="per-L summary CSV")
    sm.add_argument("--records", required=True)
    sm.add_argument("--out", required=True)
    sm.add_argument("--min-hpm", dest="min_hpm", type=int, default=100)
    sm.set_defaults(func=cmd_summarize)

    ve = sub.add_parser("verify", help="deterministic verification suite")
    ve.add_argument("--quick", action="store_true")
    ve.add_argument("--seed", type=int, default=0)
    ve.set_defaults(func=cmd_verify)

    pd = sub.add_parser("plot-data", help="log-log CSV plus gnuplot script")
    pd.add_argument("--records", required=True)
    pd.add_argument("--statistic", default="median_max_height")
    pd.add_argument("--out", required=True, help="output prefix")
    pd.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if not getattr(args, "func", None):
        # bare command or command group without an action
        target = parser
        if args.command:
            target = parser._subparsers._group_actions[0].choices[args.command]
        print(target.format_help(), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MsreError as exc:
        from .io import FormatError
        if isinstance(exc, FormatError):
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
