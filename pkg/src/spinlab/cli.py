"""Command-line runner: ``spinlab <command> [flags]``.

Every command writes its outputs plus ``<out>.manifest.json`` holding the
resolved configuration, the package version and timing. Result files carry no
timestamps, so reruns with the same flags are byte-identical.

Exit status: 0 success, 2 bad parameters, 3 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BudgetError, ParameterError

EXIT_OK, EXIT_PARAM, EXIT_BUDGET = 0, 2, 3


# ---------------------------------------------------------------------------
# output helpers


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float printed at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_json(path: Path, obj) -> None:
    path.write_text(to_json(obj) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def _out_path(args, default: str) -> Path:
    p = Path(args.out or default)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(path: Path, args, outputs: list[Path], started: float, extra=None) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    man = {
        "command": args.command,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg,
        "outputs": [str(p) for p in outputs],
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_time": time.time() - started,
    }
    if extra:
        man.update(extra)
    write_json(Path(str(path) + ".manifest.json"), man)


# ---------------------------------------------------------------------------
# model construction


def _number_or(value, names):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if value in names:
        return value
    try:
        return float(value)
    except ValueError:
        raise ParameterError(f"expected a number or one of {sorted(names)}, got {value!r}") from None


def build_model(args):
    from .graphs import read_graph
    from .models import beta_c, hardcore, ising, lambda_c

    if not args.graph:
        raise ParameterError("--graph is required")
    g = read_graph(args.graph)
    delta = max(g.degrees, default=0)
    if args.model == "hardcore":
        lam = _number_or(args.lam, {"critical"})
        if lam is None:
            raise ParameterError("--lambda is required for hardcore")
        if lam == "critical":
            if delta < 3:
                raise ParameterError("critical fugacity needs max degree >= 3")
            lam = lambda_c(delta)
        return hardcore(g, lam)
    if args.model == "ising":
        beta = _number_or(args.beta, {"critical", "critical-antiferro"})
        if beta is None:
            raise ParameterError("--beta is required for ising")
        if isinstance(beta, str):
            if delta < 3:
                raise ParameterError("critical inverse temperature needs max degree >= 3")
            beta = beta_c(delta) * (1 if beta == "critical" else -1)
        return ising(g, beta, args.field)
    raise ParameterError(f"unknown model {args.model!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    from .graphs import (gen_random_regular, gen_regular_bipartite, gen_symmetric_bipartite,
                         tree_graphs, write_graph)

    fam = args.family
    if fam == "ising-bipartite":
        g = gen_regular_bipartite(args.n, args.delta, args.seed, multigraph=True)
    elif fam == "ising-bipartite-simple":
        g = gen_regular_bipartite(args.n, args.delta, args.seed, multigraph=False)
    elif fam == "hardcore-bipartite":
        g = gen_symmetric_bipartite(args.n, args.delta, args.seed)
    elif fam == "random-regular":
        g = gen_random_regular(args.n, args.delta, args.seed)
    elif fam in ("tree-ary", "tree-regular"):
        g = tree_graphs(fam.split("-")[1], args.delta, args.depth)
    else:
        raise ParameterError(f"unknown family {fam!r}")
    out = _out_path(args, "graph.el")
    write_graph(g, out)
    return out, [out], {"n_vertices": g.n_vertices, "n_edges": len(g.edges)}


def cmd_exact(args):
    from . import exact

    model = build_model(args)
    out = _out_path(args, "exact.json")
    outputs = [out]
    res: dict = {"n": model.n}
    dist = exact.exact_distribution(model)
    res["log_Z"] = dist.log_z
    res["marginals"] = dist.marginals()
    what = set(args.what)
    if "covariance" in what or "influence" in what:
        C = exact.covariance_matrix(model, "native", dist)
        p = out.with_suffix(".cov.csv")
        exact.to_csv(C, p)
        outputs.append(p)
    if "influence" in what:
        psi = exact.influence_matrix(model, dist)
        p = out.with_suffix(".psi.csv")
        exact.to_csv(psi, p)
        outputs.append(p)
        res["lambda_max_psi"] = exact.lambda_max(psi)
    if "si-pinnings" in what:
        res["lambda_max_over_pinnings"] = exact.si_lambda_max(model, over_pinnings=True)
    if "distribution" in what:
        p = out.with_suffix(".dist.csv")
        rows = [(format(int(s), "x"), float(lp)) for s, lp in zip(dist.support, dist.log_probs[dist.support])]
        write_csv(p, ["config_hex", "log_prob"], rows)
        outputs.append(p)
    write_json(out, res)
    return out, outputs, None


def cmd_sample(args):
    from .samplers import run_chain

    model = build_model(args)
    run = run_chain(model, args.chain, args.init, args.steps, args.seed, args.thin, args.burn_in, args.theta,
                    pairs=args.pairs, chain_index=args.chain_index)
    out = _out_path(args, "samples.csv")
    is_ising = args.model == "ising"
    X = run.configs.astype(float)
    mag = (2 * X - 1).sum(axis=1) if is_ising else X.sum(axis=1)
    rows = [(int(t), h, float(m)) for t, h, m in zip(run.steps, run.config_hex(), mag)]
    write_csv(out, ["step", "config_hex", "magnetization"], rows)
    summ = out.with_suffix(".summary.json")
    write_json(summ, run.summary)
    return out, [out, summ], None


def cmd_mix(args):
    from . import exact

    model = build_model(args)
    dist = exact.exact_distribution(model)
    if args.chain == "glauber":
        K = exact.glauber_kernel(model, dist)
    elif args.chain == "field":
        K = exact.field_dynamics_kernel(model, args.theta, dist)
    elif args.chain == "proximal":
        K = exact.proximal_kernel(model, 0.5, nodes=args.nodes)
    else:
        raise ParameterError(f"unknown chain {args.chain!r}")
    diag = exact.chain_diagnostics(K, dist)
    out = _out_path(args, "mix.json")
    res = {
        "chain": args.chain, "states": int(len(K.states)), "gap": diag.gap,
        "tensorization_constant": diag.tensorization_constant,
        "stationarity_error": diag.stationarity_error, "reversibility_error": diag.reversibility_error,
    }
    write_json(out, res)
    tv = out.with_suffix(".tv.csv")
    write_csv(tv, ["t", "tv"], [(int(t), float(v)) for t, v in zip(diag.tv_times, diag.tv_curve)])
    return out, [out, tv], None


def cmd_spectral(args):
    from .spectral import coupling_independence_estimate, rank_one_si_bound

    out = _out_path(args, "spectral.json")
    res: dict = {}
    if args.u:
        u = np.array([float(x) for x in args.u.split(",")])
        res["rank_one_si_bound"] = rank_one_si_bound(u)
    if args.graph:
        model = build_model(args)
        est = coupling_independence_estimate(model, args.vertex, args.trials, args.seed, args.mode, args.cap)
        res.update(mean=est.mean, stderr=est.stderr, trials=est.trials, bound_mode=est.bound_mode)
    if not res:
        raise ParameterError("give --graph (coupling independence) and/or --u (rank-one bound)")
    write_json(out, res)
    return out, [out], None


def cmd_percolate(args):
    from . import spectral

    out = _out_path(args, "pmf.csv")
    ells = np.arange(1, args.pmf_max + 1)
    pmf = spectral.ary_percolation_pmf(args.d, args.p, ells)
    write_csv(out, ["ell", "pmf"], [(int(l), float(v)) for l, v in zip(ells, pmf)])
    outputs = [out]
    info = {"extinction_probability": spectral.extinction_probability(args.d, args.p)}
    if args.samples:
        sizes = spectral.sample_ary(args.d, args.p, args.samples, args.seed, cap=args.pmf_max + 1)
        cnt = np.bincount(np.where(sizes < 0, 0, sizes), minlength=args.pmf_max + 1)
        emp = out.with_suffix(".empirical.csv")
        cdf = np.cumsum(cnt[1:args.pmf_max + 1]) / args.samples
        write_csv(emp, ["ell", "frequency", "cdf"],
                  [(int(l), float(cnt[l] / args.samples), float(c)) for l, c in zip(ells, cdf)])
        outputs.append(emp)
        info["censored_fraction"] = float(np.mean(sizes < 0))
    js = out.with_suffix(".json")
    write_json(js, info)
    outputs.append(js)
    return out, outputs, None


def cmd_count(args):
    from .counting import CountingPlan, deterministic_count

    model = build_model(args)
    plan = CountingPlan(args.theta, args.eps, args.eps0, oracle=args.oracle, k_override=args.k,
                        max_depth=args.max_depth)
    res = deterministic_count(model, plan)
    d = res.to_dict()
    wall = d.pop("wall_time")
    out = _out_path(args, "count.json")
    write_json(out, d)
    return out, [out], {"count_wall_time": wall}


def cmd_lowerbound(args):
    from . import lowerbound as lb

    out = _out_path(args, "lowerbound.json")
    outputs = [out]
    res: dict = {"kind": args.kind, "n": args.n, "delta": args.delta}
    tasks = set(args.task)
    if args.kind == "ising":
        need_table = tasks & {"checksums", "gaussian", "anti", "table"}
        la = None
        if need_table:
            N, D = lb.coeff_tables_ising(args.n, args.delta)
            la = args.delta * N.log_coeffs - (args.delta - 1) * D.log_coeffs
        if "checksums" in tasks:
            res["checksums"] = lb.ising_checksums(args.n, args.delta, tables=(N, D))
        if "gaussian" in tasks:
            g = lb.gaussian_ratio_check(args.n, args.delta, "ising", tables=la)
            res["gaussian"] = {"log_min_ratio": g.min_ratio, "log_max_ratio": g.max_ratio,
                               "log_center_ratio": g.center_ratio, "spread": g.spread, "points": g.points}
        if "anti" in tasks:
            res["anti_concentration"] = lb.anti_concentration_ratio(la, args.eta, 0.75)
        if "table" in tasks:
            p = out.with_suffix(".alpha.csv.gz")
            lb.export_alpha_csv(p, la)
            outputs.append(p)
        if "landscape" in tasks:
            cp = lb.critical_point_ising(args.delta)
            res["critical_point"] = cp.tolist()
            res["U_at_critical_point"] = lb.evaluate_U_ising(cp, args.delta)
    elif args.kind == "hardcore":
        t = None
        if tasks & {"checksums", "anti", "table"}:
            t = lb.HardcoreTables(args.n, args.delta)
        if "checksums" in tasks:
            res["checksums"] = t.checksums()
        if "gaussian" in tasks:
            g = lb.gaussian_ratio_check(args.n, args.delta, "hardcore")
            res["gaussian"] = {"log_min_ratio": g.min_ratio, "log_max_ratio": g.max_ratio,
                               "log_center_ratio": g.center_ratio, "spread": g.spread, "points": g.points}
            k1, k2, k3 = lb.hardcore_quadratic_coeffs(args.delta)
            res["kappa"] = [k1, k2, k3]
        if "anti" in tasks:
            res["anti_concentration"] = lb.anti_concentration_ratio(t, args.eta, 2 / 3)
        if "table" in tasks:
            p = out.with_suffix(".alpha.csv.gz")
            lb.export_alpha_csv(p, t)
            outputs.append(p)
        if "landscape" in tasks:
            cp = lb.critical_point_hardcore(args.delta)
            res["critical_point"] = cp.tolist()
            res["U_sym_at_critical_point"] = lb.U_sym_hardcore(cp[0], cp[1], args.delta)
    else:
        raise ParameterError(f"unknown kind {args.kind!r}")
    write_json(out, res)
    return out, outputs, None


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def _model_flags(p):
    p.add_argument("--model", choices=["hardcore", "ising"], default="hardcore")
    p.add_argument("--graph", help="edge-list graph file")
    p.add_argument("--lambda", dest="lam", help="fugacity or 'critical'")
    p.add_argument("--beta", help="inverse temperature, 'critical' or 'critical-antiferro'")
    p.add_argument("--field", type=float, default=0.0, help="uniform external field (Ising)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spinlab", description="Spin-system sampling, counting and lower-bound experiments.")
    ap.add_argument("--version", action="version", version=f"spinlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file")
        p.add_argument("--config", help="JSON file whose keys override flags")
        p.add_argument("--threads", type=int, default=1, help="worker count (results do not depend on it)")

    p = sub.add_parser("gen", help="generate a graph")
    common(p)
    p.add_argument("--family", required=True,
                   choices=["ising-bipartite", "ising-bipartite-simple", "hardcore-bipartite", "random-regular",
                            "tree-ary", "tree-regular"])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--delta", type=int, default=3)
    p.add_argument("--depth", type=int, default=3)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("exact", help="exact enumeration quantities")
    common(p)
    _model_flags(p)
    p.add_argument("--what", nargs="+", default=["influence"],
                   choices=["distribution", "covariance", "influence", "si-pinnings"])
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sample", help="run a Markov chain")
    common(p)
    _model_flags(p)
    p.add_argument("--chain", choices=["glauber", "field", "proximal"], default="glauber")
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--init", default=None, help="empty | all-minus | all-plus | random")
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--pairs", action="store_true")
    p.add_argument("--chain-index", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("mix", help="exact kernel diagnostics")
    common(p)
    _model_flags(p)
    p.add_argument("--chain", choices=["glauber", "field", "proximal"], default="glauber")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--nodes", type=int, default=64)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("spectral", help="coupling independence and rank-one bounds")
    common(p)
    _model_flags(p)
    p.add_argument("--vertex", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--mode", choices=["exact", "bound"], default="exact")
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--u", help="comma-separated rank-one vector")
    p.set_defaults(func=cmd_spectral, model="ising")

    p = sub.add_parser("percolate", help="percolation hitting-time pmf")
    common(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--pmf-max", type=int, default=100)
    p.add_argument("--samples", type=int, default=0)
    p.set_defaults(func=cmd_percolate)

    p = sub.add_parser("count", help="deterministic partition-function approximation")
    common(p)
    _model_flags(p)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--eps0", type=float, default=0.05)
    p.add_argument("--oracle", choices=["weitz", "exact"], default="weitz")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("lowerbound", help="generating-polynomial lower-bound quantities")
    common(p)
    p.add_argument("--kind", choices=["hardcore", "ising"], default="ising")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--delta", type=int, default=3)
    p.add_argument("--task", nargs="+", default=["checksums"],
                   choices=["checksums", "gaussian", "anti", "table", "landscape"])
    p.add_argument("--eta", type=float, default=0.1)
    p.set_defaults(func=cmd_lowerbound)
    return ap


def _apply_config(args) -> None:
    if not args.config:
        return
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ParameterError("config file must hold a JSON object")
    for key, val in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if not hasattr(args, dest) or dest in ("command", "func", "config"):
            raise ParameterError(f"unknown config key {key!r}")
        setattr(args, dest, val)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    started = time.time()
    try:
        _apply_config(args)
        if getattr(args, "init", "unset") is None:
            args.init = "all-minus" if getattr(args, "model", "") == "ising" else "empty"
        out, outputs, extra = args.func(args)
        _manifest(out, args, outputs, started, extra)
    except ParameterError as exc:
        print(f"spinlab: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except BudgetError as exc:
        print(f"spinlab: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    print(str(out))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
