"""Batch front end: run configuration, pairwise matrices, Gram kernels, timing."""

from __future__ import annotations

import csv
import dataclasses
import gc
import json
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ept import _import_pot, orlicz_ept
from .errors import InputError, NumericalError, OrliczError, ParameterError
from .graph import Graph, ShortestPathTree, build_spt, generate_graph, read_graph
from .instances import random_measure
from .measure import DiscreteMeasure, read_measure
from .nfunc import parse_phi
from .ost import OstParams, WeightFunction, solve_ost

__all__ = [
    "RunConfig",
    "PairwiseResult",
    "BenchReport",
    "load_measures",
    "pair_distance",
    "pairwise_matrix",
    "write_matrix",
    "read_matrix",
    "kernel_matrix",
    "bench",
]

METHODS = ("ost", "ept")


@dataclass
class RunConfig:
    """Everything needed to compute one distance or one batch of them.

    ``w1``/``w2`` are ``"a1,a0"`` strings; ``None`` means ``a1 = b, a0 = 1``.
    ``generate`` is ``"<flavor>:<nodes>"`` and is used when ``graph`` is unset.
    """

    graph: str | None = None
    generate: str | None = None
    measures: str | None = None
    method: str = "ost"
    phi: str = "linear"
    b: float = 1.0
    lam: float = 1.0
    alpha: float = 0.0
    w1: str | None = None
    w2: str | None = None
    eps: float = 0.1
    tol_t: float | None = None
    bracket: str = "exact"
    sinkhorn_tol: float = 1e-7
    max_iter: int = 10_000
    t_bar: float | None = None
    diag_add: float = 0.0
    workers: int = 1
    output: str | None = None
    format: str = "csv"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.bracket not in ("exact", "entropic"):
            raise ParameterError(f"bracket must be 'exact' or 'entropic', got {self.bracket!r}")
        if self.format not in ("csv", "bin"):
            raise ParameterError(f"format must be 'csv' or 'bin', got {self.format!r}")
        if not self.eps >= 0:
            raise ParameterError(f"eps must be nonnegative, got {self.eps}")
        if self.tol_t is not None and not self.tol_t > 0:
            raise ParameterError(f"tol_t must be positive, got {self.tol_t}")
        if self.t_bar is not None and not self.t_bar > 0:
            raise ParameterError(f"t_bar must be positive, got {self.t_bar}")
        if int(self.workers) < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")
        parse_phi(self.phi)
        self.params()

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ParameterError(f"bad config value: {exc}") from exc

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError(f"config {path} must hold a JSON object")
        data.update(overrides or {})
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def weight(self, text: str | None) -> WeightFunction:
        return WeightFunction.affine(self.b, 1.0) if text is None else WeightFunction.parse(text)

    def params(self) -> OstParams:
        return OstParams(b=float(self.b), lam=float(self.lam), alpha=float(self.alpha),
                         w1=self.weight(self.w1), w2=self.weight(self.w2))

    def load_graph(self) -> Graph:
        if self.graph is not None:
            return read_graph(self.graph)
        if self.generate is not None:
            flavor, _, size = self.generate.partition(":")
            try:
                nodes = int(size)
            except ValueError:
                raise ParameterError(f"generate spec {self.generate!r}: expected '<flavor>:<nodes>'") from None
            return generate_graph(nodes, flavor=flavor, seed=self.seed)
        raise ParameterError("no graph: set 'graph' or 'generate'")


def load_measures(directory) -> tuple[list[str], list[DiscreteMeasure]]:
    """Read every regular file in ``directory`` (sorted by name) as a measure."""
    root = Path(directory)
    if not root.is_dir():
        raise InputError(f"measure directory {directory} does not exist")
    files = sorted(p for p in root.iterdir() if p.is_file() and not p.name.startswith("."))
    return [p.name for p in files], [read_measure(p) for p in files]


def _check_support(m: DiscreteMeasure, g: Graph, label: str) -> None:
    if len(m) and (m.nodes.min() < 0 or m.nodes.max() >= g.node_count):
        raise InputError(f"measure {label} references a node outside 0..{g.node_count - 1}")


def pair_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree, cfg: RunConfig) -> float:
    phi = parse_phi(cfg.phi)
    params = cfg.params()
    if cfg.method == "ost":
        return solve_ost(mu, nu, spt, phi, params).value
    value, _ = orlicz_ept(mu, nu, spt, phi, params, eps=cfg.eps, tol_t=cfg.tol_t, bracket=cfg.bracket,
                          sinkhorn_tol=cfg.sinkhorn_tol, max_iter=cfg.max_iter)
    return value


# worker state, set once per process by the pool initializer
_STATE: dict = {}


def _init_worker(spt, measures, cfg):
    _STATE.update(spt=spt, measures=measures, cfg=cfg)


def _solve_chunk(pairs):
    spt, measures, cfg = _STATE["spt"], _STATE["measures"], _STATE["cfg"]
    out = []
    for i, j in pairs:
        try:
            out.append((i, j, pair_distance(measures[i], measures[j], spt, cfg), None))
        except (OrliczError, ArithmeticError, ValueError) as exc:
            out.append((i, j, math.nan, f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class PairwiseResult:
    matrix: np.ndarray
    names: list[str]
    errors: list[dict] = field(default_factory=list)
    solves: int = 0


def pairwise_matrix(cfg: RunConfig, graph: Graph | None = None, measures: list[DiscreteMeasure] | None = None,
                    names: list[str] | None = None) -> PairwiseResult:
    """Distance matrix over a measure collection.

    With equal weight functions the distance is symmetric, so only ``i < j``
    is solved and mirrored, and the OST diagonal is zero. Failed pairs hold
    NaN and are listed in ``errors``.
    """
    g = cfg.load_graph() if graph is None else graph
    if measures is None:
        if cfg.measures is None:
            raise ParameterError("no measures: set 'measures' to a directory")
        names, measures = load_measures(cfg.measures)
    names = names or [str(i) for i in range(len(measures))]
    n = len(measures)
    if n < 2:
        raise ParameterError(f"pairwise needs at least 2 measures, got {n}")
    for name, m in zip(names, measures):
        _check_support(m, g, name)
    spt = build_spt(g)
    params = cfg.params()
    params.check_alpha(spt)
    symmetric = params.symmetric
    if symmetric:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        if cfg.method == "ept":
            pairs += [(i, i) for i in range(n)]
    else:
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j or cfg.method == "ept"]

    workers = int(cfg.workers)
    if workers == 1:
        _init_worker(spt, measures, cfg)
        rows = _solve_chunk(pairs)
    else:
        size = max(1, math.ceil(len(pairs) / (4 * workers)))
        chunks = [pairs[k:k + size] for k in range(0, len(pairs), size)]
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(spt, measures, cfg)) as pool:
            rows = [r for chunk in pool.map(_solve_chunk, chunks) for r in chunk]

    D = np.zeros((n, n))
    errors = []
    for i, j, value, err in rows:
        D[i, j] = value
        if symmetric:
            D[j, i] = value
        if err is not None:
            errors.append({"i": i, "j": j, "mu": names[i], "nu": names[j], "error": err})
    return PairwiseResult(D, list(names), errors, solves=len(pairs))


def write_matrix(D: np.ndarray, path, fmt: str = "csv", meta: dict | None = None) -> None:
    """Write ``D`` as CSV (``nan`` for failures) or as a JSON header line plus raw ``<f8``."""
    D = np.asarray(D, dtype=np.float64)
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                for row in D:
                    w.writerow([repr(float(x)) for x in row])
        elif fmt == "bin":
            header = {"shape": list(D.shape), "dtype": "<f8", "order": "C", **(meta or {})}
            with path.open("wb") as fh:
                fh.write(json.dumps(header).encode() + b"\n")
                fh.write(np.ascontiguousarray(D, dtype="<f8").tobytes())
        else:
            raise ParameterError(f"unknown matrix format {fmt!r}")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def read_matrix(path) -> np.ndarray:
    """Inverse of :func:`write_matrix`; the format is sniffed from the first byte."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if raw[:1] == b"{":
        head, _, body = raw.partition(b"\n")
        try:
            header = json.loads(head)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: bad binary header: {exc}") from exc
        shape = tuple(header["shape"])
        data = np.frombuffer(body, dtype="<f8")
        if data.size != math.prod(shape):
            raise InputError(f"{path}: expected {math.prod(shape)} values, found {data.size}")
        return data.reshape(shape).astype(np.float64)
    try:
        rows = [[float(x) for x in r] for r in csv.reader(raw.decode().splitlines()) if r]
        return np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def kernel_matrix(D, t_bar: float, diag_add: float = 0.0) -> np.ndarray:
    """Gram matrix ``exp(-t_bar D)`` with ``diag_add`` added on the diagonal."""
    if not t_bar > 0:
        raise ParameterError(f"t_bar must be positive, got {t_bar}")
    D = np.asarray(D, dtype=np.float64)
    K = np.exp(-t_bar * D)
    if diag_add:
        K[np.diag_indices(min(K.shape))] += diag_add
    return K


@dataclass
class BenchReport:
    rows: list[dict]
    median_ost: float
    median_ept: float
    build_seconds: float

    @property
    def speedup(self) -> float:
        return self.median_ept / self.median_ost if self.median_ost > 0 else math.inf

    def write_csv(self, path) -> None:
        try:
            with Path(path).open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=["pair", "method", "seconds", "value"])
                w.writeheader()
                w.writerows(self.rows)
        except OSError as exc:
            raise InputError(f"cannot write {path}: {exc}") from exc

    def summary(self) -> dict:
        return {"pairs": len(self.rows) // 2, "median_ost": self.median_ost, "median_ept": self.median_ept,
                "speedup": self.speedup, "build_seconds": self.build_seconds}


def bench_pairs(g: Graph, n_pairs: int, max_supports: int, seed: int) -> list[tuple[DiscreteMeasure, DiscreteMeasure]]:
    """Seeded unbalanced measure pairs; masses are independent so totals differ."""
    rng = np.random.default_rng(seed)
    return [(random_measure(rng, g.node_count, max_supports), random_measure(rng, g.node_count, max_supports))
            for _ in range(n_pairs)]


def _timed(fn) -> tuple[float, float]:
    """Wall time of one call with the garbage collector paused, and its value."""
    enabled = gc.isenabled()
    gc.disable()
    try:
        start = time.perf_counter()
        value = fn()
        return time.perf_counter() - start, value
    finally:
        if enabled:
            gc.enable()


def bench(cfg: RunConfig, pairs, graph: Graph | None = None, repeat: int = 1) -> BenchReport:
    """Time OST and Orlicz-EPT on the same pairs with the same parameters.

    Each round runs one full pass per method, so neither inherits the
    other's cache state; a pair's time is its fastest over ``repeat`` rounds.
    The shortest-path tree is built once per round and its cost is split
    evenly over the OST pairs; EPT pays for its own graph distances on each
    pair.
    """
    g = cfg.load_graph() if graph is None else graph
    pairs = list(pairs)
    if not pairs:
        raise ParameterError("bench needs at least one pair")
    if repeat < 1:
        raise ParameterError(f"repeat must be at least 1, got {repeat}")
    _import_pot()  # one-time import cost is not part of any pair
    configs = {m: dataclasses.replace(cfg, method=m) for m in ("ost", "ept")}
    best = {m: [math.inf] * len(pairs) for m in configs}
    values = {m: [math.nan] * len(pairs) for m in configs}
    build = math.inf
    for _ in range(repeat):
        seconds, spt = _timed(lambda: build_spt(g))
        build = min(build, seconds)
        for method, c in configs.items():
            for k, (mu, nu) in enumerate(pairs):
                failures = []

                def run():
                    # a failed solve still costs time, so it is timed like the rest
                    try:
                        return pair_distance(mu, nu, spt, c)
                    except (NumericalError, ParameterError) as exc:
                        failures.append(exc)
                        return math.nan

                seconds, values[method][k] = _timed(run)
                best[method][k] = min(best[method][k], seconds)
                if failures:
                    print(f"pair {k} {method}: {failures[0]}", file=sys.stderr)
    share = build / len(pairs)
    ost_times = [t + share for t in best["ost"]]
    ept_times = best["ept"]
    rows = [{"pair": k, "method": m, "seconds": times[k], "value": values[m][k]}
            for m, times in (("ost", ost_times), ("ept", ept_times)) for k in range(len(pairs))]
    return BenchReport(rows, statistics.median(ost_times), statistics.median(ept_times), build)
