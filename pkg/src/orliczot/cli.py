"""Command line interface: ``orliczot <subcommand> ...``.

Every subcommand accepts ``--config FILE`` holding a JSON object whose keys
mirror the long flag names; flags given on the command line win. Exit codes:
0 success, 2 bad parameters, 3 numerical failure, 4 input/output problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import batch
from .ept import orlicz_ept
from .errors import InputError, NumericalError, OrliczError, ParameterError
from .graph import build_spt, generate_graph, write_graph
from .measure import read_measure
from .nfunc import parse_phi
from .ost import solve_ost

S = argparse.SUPPRESS


def _graph_flags(p):
    p.add_argument("--graph", default=S, help="graph file ('nodes N root Z' then 'u v w' lines)")
    p.add_argument("--generate", default=S, help="generate instead: '<log|sqrt>:<nodes>'")
    p.add_argument("--seed", type=int, default=S)


def _ost_flags(p):
    p.add_argument("--phi", default=S, help="linear, exp1, exp2, power:<p> or rawpower:<p>")
    p.add_argument("--b", type=float, default=S)
    p.add_argument("--lambda", dest="lam", type=float, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--w1", default=S, help="affine weight 'a1,a0' (default: b,1)")
    p.add_argument("--w2", default=S, help="affine weight 'a1,a0' (default: b,1)")


def _ept_flags(p):
    p.add_argument("--eps", type=float, default=S, help="entropic regularization (0 = exact OT)")
    p.add_argument("--tol-t", dest="tol_t", type=float, default=S)
    p.add_argument("--bracket", choices=("exact", "entropic"), default=S)
    p.add_argument("--sinkhorn-tol", dest="sinkhorn_tol", type=float, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)


def _pair_flags(p):
    p.add_argument("--mu", required=True, help="measure file ('node mass' lines)")
    p.add_argument("--nu", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orliczot", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default values for the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a random geometric graph")
    p.add_argument("--nodes", type=int, default=S)
    p.add_argument("--points", default=S, help="text file of 2-d support points to cluster into nodes")
    p.add_argument("--max-nodes", dest="max_nodes", type=int, default=S)
    p.add_argument("--flavor", choices=("log", "sqrt"), default=S)
    p.add_argument("--root", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", dest="output", default=S)

    p = sub.add_parser("ost", help="Orlicz-Sobolev transport between two measures")
    _graph_flags(p)
    _ost_flags(p)
    _pair_flags(p)

    p = sub.add_parser("ept", help="Orlicz-EPT between two measures")
    _graph_flags(p)
    _ost_flags(p)
    _ept_flags(p)
    _pair_flags(p)

    p = sub.add_parser("pairwise", help="distance matrix over a directory of measures")
    _graph_flags(p)
    _ost_flags(p)
    _ept_flags(p)
    p.add_argument("--method", choices=batch.METHODS, default=S)
    p.add_argument("--measures", default=S, help="directory of measure files")
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--out", dest="output", default=S)
    p.add_argument("--format", choices=("csv", "bin"), default=S)

    p = sub.add_parser("kernel", help="Gram matrix exp(-t_bar D) from a distance matrix")
    p.add_argument("--distances", required=True)
    p.add_argument("--t-bar", dest="t_bar", type=float, default=S)
    p.add_argument("--diag-add", dest="diag_add", type=float, default=S)
    p.add_argument("--out", dest="output", default=S)
    p.add_argument("--format", choices=("csv", "bin"), default=S)

    p = sub.add_parser("bench", help="time OST against Orlicz-EPT on random unbalanced pairs")
    _graph_flags(p)
    _ost_flags(p)
    _ept_flags(p)
    p.add_argument("--pairs", type=int, default=S)
    p.add_argument("--max-supports", dest="max_supports", type=int, default=S)
    p.add_argument("--repeat", type=int, default=S, help="timing rounds; each pair keeps its fastest time")
    p.add_argument("--out", dest="output", default=S, help="CSV with one row per pair and method")

    p = sub.add_parser("verify", help="run the oracle suite on seeded random instances")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--instances", type=int, default=S)
    p.add_argument("--checks", nargs="*", default=S)
    p.add_argument("--out", dest="output", default=S, help="write the JSON report here as well")
    return parser


_LOCAL = ("command", "config", "mu", "nu", "distances", "pairs", "max_supports", "instances", "checks", "repeat",
          "nodes", "points", "max_nodes", "flavor", "root")


def _config(args) -> tuple[batch.RunConfig, dict]:
    """Merge defaults, the config file and the flags; also return non-config values."""
    flags = vars(args)
    local = {k: flags[k] for k in _LOCAL if k in flags}
    overrides = {k: v for k, v in flags.items() if k not in _LOCAL}
    file_data = {}
    if args.config:
        try:
            file_data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_data, dict):
            raise InputError(f"config {args.config} must hold a JSON object")
        file_data = {k.replace("-", "_"): v for k, v in file_data.items()}
        if "lambda" in file_data:
            file_data["lam"] = file_data.pop("lambda")
        for k in _LOCAL:
            if k in file_data:
                local.setdefault(k, file_data.pop(k))
    fields = {f.name for f in dataclasses.fields(batch.RunConfig)}
    merged = {k: v for k, v in {**file_data, **overrides}.items() if k in fields}
    unknown = sorted(set(file_data) - fields)
    if unknown:
        raise ParameterError(f"unknown config keys: {unknown}")
    return batch.RunConfig.from_mapping(merged), local


def _emit(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, default=float)
    if path:
        try:
            Path(path).write_text(text + "\n")
        except OSError as exc:
            raise InputError(f"cannot write {path}: {exc}") from exc
    print(text)


def _pair(cfg, local):
    g = cfg.load_graph()
    mu, nu = read_measure(local["mu"]), read_measure(local["nu"])
    for label, m in (("mu", mu), ("nu", nu)):
        batch._check_support(m, g, label)
    return g, build_spt(g), mu, nu


def cmd_gen_graph(cfg, local):
    if "points" in local:
        try:
            pts = np.loadtxt(local["points"], ndmin=2)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read points {local['points']}: {exc}") from exc
        source = pts
    elif "nodes" in local:
        source = local["nodes"]
    else:
        raise ParameterError("gen-graph needs --nodes or --points")
    g = generate_graph(source, flavor=local.get("flavor", "log"), seed=cfg.seed, root=local.get("root", 0),
                       max_nodes=local.get("max_nodes"))
    if cfg.output:
        try:
            write_graph(g, cfg.output)
        except OSError as exc:
            raise InputError(f"cannot write {cfg.output}: {exc}") from exc
    else:
        print(f"nodes {g.node_count} root {g.root}")
        for a, b, w in g.edges:
            print(a, b, repr(w))
    print(f"{g.node_count} nodes, {g.edge_count} edges", file=sys.stderr)
    return 0


def cmd_ost(cfg, local):
    _, spt, mu, nu = _pair(cfg, local)
    res = solve_ost(mu, nu, spt, parse_phi(cfg.phi), cfg.params())
    _emit({"value": res.value, "theta": res.theta, "k_opt": res.k_opt, "inf_term": res.inf_term,
           "iterations": res.iterations, "active_edges": res.active_edge_count})
    return 0


def cmd_ept(cfg, local):
    _, spt, mu, nu = _pair(cfg, local)
    value, trace = orlicz_ept(mu, nu, spt, parse_phi(cfg.phi), cfg.params(), eps=cfg.eps, tol_t=cfg.tol_t,
                              bracket=cfg.bracket, sinkhorn_tol=cfg.sinkhorn_tol, max_iter=cfg.max_iter)
    _emit({"value": value, "t": trace.final_t, "t_lower": trace.t_lower, "t_upper": trace.t_upper,
           "bracket": trace.bracket, "bisection_steps": len(trace.evaluations),
           "sinkhorn_iterations": trace.sinkhorn_iterations})
    return 0


def cmd_pairwise(cfg, local):
    res = batch.pairwise_matrix(cfg)
    if cfg.output:
        batch.write_matrix(res.matrix, cfg.output, cfg.format, meta={"names": res.names})
        sidecar = Path(cfg.output + ".errors.json")
        try:
            sidecar.write_text(json.dumps(res.errors, indent=2) + "\n")
        except OSError as exc:
            raise InputError(f"cannot write {sidecar}: {exc}") from exc
    else:
        for row in res.matrix:
            print(",".join(repr(float(x)) for x in row))
    print(f"{res.solves} solves, {len(res.errors)} failed", file=sys.stderr)
    for err in res.errors:
        print(f"  ({err['mu']}, {err['nu']}): {err['error']}", file=sys.stderr)
    return 0


def cmd_kernel(cfg, local):
    D = batch.read_matrix(local["distances"])
    if cfg.t_bar is None:
        raise ParameterError("kernel needs --t-bar")
    K = batch.kernel_matrix(D, cfg.t_bar, cfg.diag_add)
    if cfg.output:
        batch.write_matrix(K, cfg.output, cfg.format)
    else:
        for row in K:
            print(",".join(repr(float(x)) for x in row))
    return 0


def cmd_bench(cfg, local):
    g = cfg.load_graph()
    pairs = batch.bench_pairs(g, local.get("pairs", 10), local.get("max_supports", 50), cfg.seed)
    report = batch.bench(cfg, pairs, graph=g, repeat=local.get("repeat", 1))
    if cfg.output:
        report.write_csv(cfg.output)
    _emit(report.summary())
    return 0


def cmd_verify(cfg, local):
    from .reference import run_suite

    reports = run_suite(seed=cfg.seed, n_instances=local.get("instances", 10), names=local.get("checks"))
    failed = [r for r in reports if not r.passed]
    summary = {}
    for r in reports:
        s = summary.setdefault(r.name, {"runs": 0, "failed": 0, "max_error": 0.0})
        s["runs"] += 1
        s["failed"] += not r.passed
        s["max_error"] = max(s["max_error"], r.rel_error if r.relative else r.abs_error)
    _emit({"passed": not failed, "checks": summary, "failures": [r.to_dict() for r in failed]}, cfg.output)
    return 1 if failed else 0


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "ost": cmd_ost,
    "ept": cmd_ept,
    "pairwise": cmd_pairwise,
    "kernel": cmd_kernel,
    "bench": cmd_bench,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, local = _config(args)
        return COMMANDS[args.command](cfg, local)
    except OrliczError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ParameterError.exit_code
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
