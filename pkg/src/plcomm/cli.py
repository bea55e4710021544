"""Command-line front end: ``plcomm {generate,init,fit,eval,bench,theory}``.

Every command writes its outputs plus a ``manifest.json`` (written last)
into ``--out-dir``. Phase seeds are derived from ``--seed`` with
:func:`derive_seed`, so adding a phase never shifts another phase's stream.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import load_gml
from .em import EmptyClassError, FitConfig, fit
from .generators import (DirectedPairConfig, InfeasibleConfigError, SbmConfig,
                         sample_dcsbm, sample_directed)
from .graph import (EdgeListError, confusion, degrees, from_edge_list, mismatch_ratio, nmi,
                    read_labels, write_edge_list, write_labels)
from .init import EigenConvergenceError, SpectralConfig, degree_cluster, spectral_cluster
from .theory import TheoryConfig, summarize_sweep, theorem_sweep, write_sweep_csv

log = logging.getLogger("plcomm")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid configuration; exits with status 2."""


def derive_seed(root: int, tag: str) -> int:
    """First 8 bytes of ``sha256(f"{root}:{tag}")`` as a non-negative 63-bit int."""
    digest = hashlib.sha256(f"{root}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class Run:
    """Collects outputs and timings for one command; writes the manifest."""

    def __init__(self, args, command):
        self.command = command
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.seed = args.seed
        self.config: dict = {}
        self.outputs: list[str] = []
        self.timings: dict[str, float] = {}
        self.extra: dict = {}

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(str(p))
        return p

    def timed(self, phase):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[phase] = run.timings.get(phase, 0.0) + time.perf_counter() - self.t0

        return _Timer()

    def finish(self):
        missing = [p for p in self.outputs if not Path(p).exists()]
        if missing:
            raise RuntimeError(f"outputs not written: {missing}")
        manifest = self.out_dir / "manifest.json"
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "outputs": self.outputs + [str(manifest)],
            "timings": self.timings,
            "tool_version": __version__,
            **self.extra,
        }
        manifest.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
        return doc


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    try:
        return json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {args.config}: {exc}") from exc


def _read_graph(path):
    with open(path) as fh:
        return from_edge_list(fh)


def _read_label_file(path):
    with open(path) as fh:
        return read_labels(fh)


def _write_nodes(run, g):
    if g.node_ids is not None and g.node_ids != tuple(map(str, range(g.n))):
        with open(run.path("nodes.txt"), "w") as fh:
            fh.writelines(f"{tok}\n" for tok in g.node_ids)


def _initial_labels(g, method, k, seed, restarts=10):
    if method == "dc":
        return degree_cluster(g, k, seed=seed, restarts=restarts)
    if method in ("sc", "scp"):
        cfg = SpectralConfig(K=k, perturb=(method == "scp"), kmeans_restarts=restarts, seed=seed)
        return spectral_cluster(g, cfg)
    raise UsageError(f"unknown init method {method!r}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    run = Run(args, "generate")
    conf = _load_config(args)
    graph_seed = derive_seed(args.seed, "graph")
    try:
        if args.model == "sbm":
            fields = {"n": args.n, "K": args.k, "beta": args.beta, "lambda": args.lambda_,
                      "rho": args.rho, "theta_low": args.theta_low,
                      "w": args.w, "pi": args.pi}
            merged = {**conf, **{k: v for k, v in fields.items() if v is not None}}
            merged["seed"] = graph_seed
            if "n" not in merged or "K" not in merged:
                raise UsageError("--n and --k are required")
            cfg = SbmConfig.from_json(merged)
            with run.timed("generate"):
                g, truth, theta = sample_dcsbm(cfg, sampler=args.sampler)
        else:
            fields = {"m": args.m, "a": args.a, "b": args.b,
                      "self_loops": False if args.no_self_loops else None}
            merged = {**conf, **{k: v for k, v in fields.items() if v is not None}}
            merged["seed"] = graph_seed
            if not {"m", "a", "b"} <= merged.keys():
                raise UsageError("--m, --a and --b are required for the directed model")
            cfg = DirectedPairConfig.from_json(merged)
            with run.timed("generate"):
                g, truth = sample_directed(cfg, sampler=args.sampler)
            theta = None
    except (InfeasibleConfigError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    run.config = cfg.to_json()
    with open(run.path("edges.txt"), "w") as fh:
        write_edge_list(g, fh)
    with open(run.path("truth.txt"), "w") as fh:
        write_labels(truth, fh)
    if theta is not None and cfg.rho > 0:
        with open(run.path("theta.txt"), "w") as fh:
            fh.writelines(f"{t:g}\n" for t in theta)
    run.extra.update(n=g.n, edge_count=g.edge_count, directed=g.directed)
    return run.finish()


def cmd_init(args):
    run = Run(args, "init")
    g = _read_graph(args.graph)
    run.config = {"graph": args.graph, "method": args.method, "k": args.k}
    with run.timed("init"):
        labels = _initial_labels(g, args.method, args.k, derive_seed(args.seed, "init"),
                                 args.restarts)
    with open(run.path("labels.txt"), "w") as fh:
        write_labels(labels, fh)
    _write_nodes(run, g)
    run.extra.update(n=g.n, load=g.diagnostics)
    return run.finish()


def cmd_fit(args):
    run = Run(args, "fit")
    conf = _load_config(args)
    g = _read_graph(args.graph)
    fields = {"T_outer": args.t_outer, "inner_tol": args.inner_tol, "inner_max": args.inner_max,
              "soft_threshold": args.soft_threshold}
    merged = {**conf, **{k: v for k, v in fields.items() if v is not None}}
    merged["seed"] = derive_seed(args.seed, "fit")
    try:
        cfg = FitConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if args.init_labels:
        e0 = _read_label_file(args.init_labels)
        if e0.size != g.n:
            raise UsageError(f"{args.init_labels} has {e0.size} labels for {g.n} nodes")
    else:
        with run.timed("init"):
            e0 = _initial_labels(g, args.init, args.k, derive_seed(args.seed, "init"))
    run.config = {"graph": args.graph, "method": args.method, "k": args.k,
                  "init": args.init_labels or args.init, "fit": asdict(cfg)}
    with run.timed("fit"):
        result = fit(g, e0, args.method, cfg, k=args.k)
    with open(run.path("labels.txt"), "w") as fh:
        write_labels(result.labels, fh)
    with open(run.path("fit.json"), "w") as fh:
        json.dump(result.to_json(), fh, indent=2, default=_json_default)
    with open(run.path("trace.csv"), "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outer", "iteration", "loglik"])
        w.writerows((o, i, repr(v)) for o, i, v in result.loglik_trace)
    _write_nodes(run, g)
    run.extra.update(n=g.n, outer_rounds_run=result.outer_rounds_run, converged=result.converged)
    return run.finish()


def cmd_eval(args):
    run = Run(args, "eval")
    metrics: dict = {}
    if args.gml:
        g, truth = load_gml(args.gml, label_key=args.label_key)
        metrics.update(n=g.n, mean_degree=float(degrees(g).mean()),
                       median_degree=float(np.median(degrees(g))),
                       max_degree=int(degrees(g).max()))
        if args.pred:
            preds = {"pred": _read_label_file(args.pred)}
        else:
            k = int(truth.max()) + 1
            seed = derive_seed(args.seed, "init")
            with run.timed("init"):
                e0 = _initial_labels(g, "scp", k, seed)
            preds = {"scp": e0}
            for method in ("upl", "cpl"):
                with run.timed(method):
                    preds[method] = fit(g, e0, method, FitConfig(), k=k).labels
    else:
        if not (args.pred and args.truth):
            raise UsageError("eval needs --pred and --truth, or --gml")
        truth = _read_label_file(args.truth)
        preds = {"pred": _read_label_file(args.pred)}
        if args.graph:
            g = _read_graph(args.graph)
            metrics.update(n=g.n, mean_degree=float(degrees(g).mean()), load=g.diagnostics)
    for name, pred in preds.items():
        if pred.size != truth.size:
            raise UsageError(f"{name} has {pred.size} labels, truth has {truth.size}")
        k = max(int(pred.max()), int(truth.max())) + 1
        entry = {"nmi": nmi(pred, truth), "mismatch": mismatch_ratio(pred, truth, k),
                 "confusion": confusion(pred, truth, k).tolist()}
        if len(preds) == 1 and name == "pred":
            metrics.update(entry)
        else:
            metrics[name] = entry
    run.config = {k: getattr(args, k) for k in ("pred", "truth", "graph", "gml")}
    with open(run.path("metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, default=_json_default)
    run.extra["metrics"] = metrics
    return run.finish()


def loglog_slope(ns, secs):
    x, y = np.log(np.asarray(ns, float)), np.log(np.asarray(secs, float))
    return float(np.polyfit(x, y, 1)[0])


def cmd_bench(args):
    run = Run(args, "bench")
    sizes = [int(s) for s in args.sizes]
    if not sizes:
        raise UsageError("empty size grid")
    run.config = {"sizes": sizes, "lambda": args.lambda_, "k": args.k, "beta": args.beta,
                  "repeats": args.repeats, "method": args.method, "t_outer": args.t_outer}
    rows = []
    per_outer = []
    for n in sizes:
        samples: dict[str, list[float]] = {}
        for rep in range(args.repeats):
            cfg = SbmConfig(n=n, K=args.k, beta=args.beta, lambda_=args.lambda_,
                            seed=derive_seed(args.seed, f"bench:{n}:{rep}"))
            t0 = time.perf_counter()
            g, _, _ = sample_dcsbm(cfg)
            t1 = time.perf_counter()
            e0 = _initial_labels(g, "scp", args.k, derive_seed(args.seed, f"init:{n}:{rep}"))
            t2 = time.perf_counter()
            res = fit(g, e0, args.method, FitConfig(T_outer=args.t_outer), k=args.k)
            t3 = time.perf_counter()
            for phase, sec in (("generate", t1 - t0), ("init_scp", t2 - t1), ("fit", t3 - t2),
                               ("fit_per_outer", (t3 - t2) / res.outer_rounds_run)):
                samples.setdefault(phase, []).append(sec)
        for phase, vals in samples.items():
            rows.append((n, phase, float(np.median(vals))))
        per_outer.append(float(np.median(samples["fit_per_outer"])))
    with open(run.path("bench.csv"), "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "phase", "seconds"])
        w.writerows(rows)
    if len(sizes) >= 2:
        slope = loglog_slope(sizes, per_outer)
        run.extra["fit_per_outer_loglog_slope"] = slope
        print(f"fit per outer iteration: log-log slope {slope:.3f}")
    return run.finish()


def cmd_theory(args):
    run = Run(args, "theory")
    m = args.m if args.m else (args.n // 2 if args.n else None)
    if not m:
        raise UsageError("give --m or --n")
    seeds = [derive_seed(args.seed, f"theory:{s}") for s in range(args.seeds)]
    try:
        cfg = TheoryConfig(m=m, gamma=args.gamma, model=args.model, seeds=seeds)
        grid = list(args.tau2)
        with run.timed("sweep"):
            rows = theorem_sweep(cfg, grid, ratio=args.ratio, workers=args.threads or 1)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    run.config = {"model": cfg.model, "m": m, "gamma": args.gamma, "tau2": grid,
                  "ratio": args.ratio, "seeds": args.seeds}
    with open(run.path("sweep.csv"), "w") as fh:
        write_sweep_csv(rows, fh)
    summary = summarize_sweep(rows)
    with open(run.path("summary.csv"), "w") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    return run.finish()


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count())
    common.add_argument("--out-dir", default=".")
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="plcomm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample a planted-partition graph")
    g.add_argument("--model", choices=("sbm", "directed"), default="sbm")
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--beta", type=float)
    g.add_argument("--lambda", dest="lambda_", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--theta-low", type=float)
    g.add_argument("--w", type=_floats)
    g.add_argument("--pi", type=_floats)
    g.add_argument("--m", type=int)
    g.add_argument("--a", type=float)
    g.add_argument("--b", type=float)
    g.add_argument("--no-self-loops", action="store_true")
    g.add_argument("--sampler", choices=("auto", "dense", "sparse"), default="auto")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("init", parents=[common], help="initial labeling")
    i.add_argument("--graph", required=True)
    i.add_argument("--method", choices=("dc", "sc", "scp"), default="scp")
    i.add_argument("--k", type=int, required=True)
    i.add_argument("--restarts", type=int, default=10)
    i.set_defaults(func=cmd_init)

    f = sub.add_parser("fit", parents=[common], help="UPL/CPL fit")
    f.add_argument("--graph", required=True)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--method", choices=("upl", "cpl"), default="cpl")
    src = f.add_mutually_exclusive_group()
    src.add_argument("--init-labels")
    src.add_argument("--init", choices=("dc", "sc", "scp"), default="scp")
    f.add_argument("--t-outer", type=int)
    f.add_argument("--inner-tol", type=float)
    f.add_argument("--inner-max", type=int)
    f.add_argument("--soft-threshold", type=float)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", parents=[common], help="compare labelings")
    e.add_argument("--pred")
    e.add_argument("--truth")
    e.add_argument("--graph")
    e.add_argument("--gml", help="labelled GML dataset (largest component, undirected)")
    e.add_argument("--label-key", default="value")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", parents=[common], help="runtime scaling")
    b.add_argument("--sizes", type=_floats, required=True)
    b.add_argument("--lambda", dest="lambda_", type=float, default=10.0)
    b.add_argument("--k", type=int, default=3)
    b.add_argument("--beta", type=float, default=0.1)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--method", choices=("upl", "cpl"), default="cpl")
    b.add_argument("--t-outer", type=int, default=20)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("theory", parents=[common], help="one-step CPL consistency sweep")
    t.add_argument("--model", choices=("directed", "undirected"), default="directed")
    t.add_argument("--gamma", type=float, required=True)
    t.add_argument("--tau2", type=_floats, required=True)
    t.add_argument("--m", type=int)
    t.add_argument("--n", type=int)
    t.add_argument("--ratio", type=float, default=4.0)
    t.add_argument("--seeds", type=int, default=20)
    t.set_defaults(func=cmd_theory)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"plcomm {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, EdgeListError, EmptyClassError, EigenConvergenceError,
            ValueError) as exc:
        print(f"plcomm {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
