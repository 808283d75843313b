"""``rif <solve|limits|simulate|compare|phase> --config FILE [--seed N] [--threads N] [--out DIR]``

Exit codes: 0 conclusive / pass, 1 usage or config error, 2 runtime error,
3 inconclusive result or failed verdict.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from . import limits as L
from . import stats as S
from .config import EXPERIMENTS, RunConfig, load_config
from .engine import config_hash, default_threads, run_replicas
from .errors import Inconclusive, InvalidSpec, RIFError, SeriesInconclusive
from .malthus import C1, DEGENERATE, solve_malthusian

log = logging.getLogger("rif")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_FAIL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rif", description="Recursive trees with independent fitnesses.")
    p.add_argument("--version", action="version", version=f"rif {__version__}")
    p.add_argument("command", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="replica worker threads (default: $RIF_THREADS or CPU count)")
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.add_argument("--dump-tree", action="store_true",
                   help="write the first replica's edge list as tree_edges.txt")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# ---------------------------------------------------------------------------
# helpers


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return None if math.isnan(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _json_safe(x.tolist())
    return x


class _Run:
    def __init__(self, cfg: RunConfig, out: str | None, threads: int | None, dump_tree: bool):
        self.cfg = cfg
        self.out = out or cfg.output_dir
        self.threads = threads or default_threads()
        self.dump_tree = dump_tree
        self.hash = config_hash(cfg.raw)
        if self.out:
            os.makedirs(self.out, exist_ok=True)

    @property
    def header(self) -> dict:
        return {"tool": f"rif {__version__}", "config_hash": self.hash, "seed": self.cfg.seed}

    def path(self, name):
        return os.path.join(self.out, name) if self.out else None

    def write_report(self, report: dict) -> None:
        doc = {"provenance": self.header, **report}
        text = json.dumps(_json_safe(doc), indent=2, sort_keys=False)
        print(text)
        if self.out:
            with open(self.path("report.json"), "w") as fh:
                fh.write(text + "\n")

    def write_csv(self, name, columns, rows):
        if self.out:
            S.write_csv(self.path(name), columns, rows, self.header)

    def solve(self):
        tol = self.cfg.tolerances.get("root", 1e-10)
        return solve_malthusian(self.cfg.dist, self.cfg.fitness, tol)

    def simulate(self):
        cfg = self.cfg
        res = run_replicas(cfg.dist, cfg.fitness, cfg.t_final, cfg.replicas, cfg.seed, cfg.bins,
                           cfg.k_max, cfg.epsilons, cfg.engine, self.threads,
                           keep_trees=self.dump_tree)
        merged, trees = res if self.dump_tree else (res, None)
        if trees and self.out:
            trees[0].write_edge_list(self.path("tree_edges.txt"), {**self.header, "replica": 0})
        zt = merged.z_over_t()
        leaves = merged.leaves / (merged.replicas * np.maximum(1 + cfg.ell * merged.checkpoints, 1))
        self.write_csv("trajectory.csv", ["t", "z_over_t", "leaf_share"],
                       zip(merged.checkpoints, zt, leaves))
        if cfg.epsilons:
            wstar = merged.wstar
            self.write_csv("edge_profile.csv", ["epsilon", "mass"],
                           S.condensation_profile(merged, wstar, cfg.epsilons))
        return merged


# ---------------------------------------------------------------------------
# commands


def cmd_solve(run: _Run) -> int:
    rep = run.solve()
    run.write_report({"experiment": "solve", **rep.to_dict()})
    return EXIT_OK


def cmd_limits(run: _Run) -> int:
    cfg = run.cfg
    rep = run.solve()
    out = {"experiment": "limits", "regime": rep.to_dict()}
    bins = cfg.bins or (L.REALS,)
    if rep.regime == DEGENERATE:
        leaf = L.degenerate_law(cfg.dist, bins)
        out["leaf_law"] = [{"bin_lo": b.lo, "bin_hi": b.hi, "p": v} for b, v in zip(bins, leaf)]
    else:
        table = L.degree_law(cfg.dist, cfg.fitness, rep, bins, cfg.k_law)
        rows = ((k, b.lo, b.hi, table.p[k, j]) for j, b in enumerate(bins)
                for k in range(min(cfg.k_max, cfg.k_law) + 1))
        run.write_csv("degree_law.csv", ["k", "bin_lo", "bin_hi", "p"], rows)
        out["degree_law"] = {"k_max": table.k_max, "declared_tail": table.declared_tail,
                             "marginal_head": table.marginal[: min(cfg.k_max, 20) + 1]}
    edge = L.edge_law(cfg.dist, cfg.fitness, rep, bins)
    run.write_csv("edge_law.csv", ["bin_lo", "bin_hi", "continuous", "with_atom"],
                  ((b.lo, b.hi, c, m) for b, c, m in zip(bins, edge.continuous, edge.bin_masses())))
    out["edge_law"] = {"continuous": edge.continuous, "atom_at_wstar": edge.atom_at_wstar,
                       "wstar": edge.wstar, "total": edge.total}
    run.write_report(out)
    return EXIT_OK


def cmd_simulate(run: _Run) -> int:
    merged = run.simulate()
    merged.check_accounting()
    out = {"experiment": "simulate", "t": merged.t, "replicas": merged.replicas,
           "z_over_t": merged.z_over_t()[-1], "leaf_fraction": S.leaf_fraction(merged)
           if merged.t else None}
    run.write_report(out)
    return EXIT_OK


def cmd_compare(run: _Run) -> int:
    cfg = run.cfg
    tol = cfg.tolerances
    rep = run.solve()
    bins = cfg.bins or (L.REALS,)
    if cfg.alpha_factor != 1.0:
        # negative control: compare against a deliberately wrong constant
        if rep.regime == C1:
            rep = dataclasses.replace(rep, alpha=rep.alpha * cfg.alpha_factor,
                                      z_limit=rep.z_limit * cfg.alpha_factor)
        else:
            rep = dataclasses.replace(rep, lambda_tilde=rep.lambda_tilde * cfg.alpha_factor,
                                      z_limit=rep.z_limit * cfg.alpha_factor)
    merged = run.simulate()
    merged.check_accounting()
    checks = {}
    out = {"experiment": "compare", "regime": rep.to_dict(), "t": merged.t,
           "replicas": merged.replicas}

    if rep.regime == DEGENERATE:
        leaf = S.leaf_fraction(merged)
        target = L.degenerate_law(cfg.dist, bins)
        dev = float(np.max(np.abs(leaf - target)))
        out["leaf_fraction"] = leaf
        out["leaf_deviation"] = dev
        if "leaf_abs" in tol:
            checks["leaf_abs"] = dev < tol["leaf_abs"]
    else:
        table = L.degree_law(cfg.dist, cfg.fitness, rep, bins, max(cfg.k_law, cfg.k_max))
        cmp_ = S.compare_degree(merged, table, tol.get("k_compare"))
        run.write_csv("degree_compare.csv",
                      ["k", "bin_lo", "bin_hi", "empirical", "theoretical", "residual"],
                      S.degree_rows(merged, cmp_))
        out.update(cmp_.to_dict())
        if "max_abs" in tol:
            checks["max_abs"] = cmp_.max_abs < tol["max_abs"]
        if "tv" in tol:
            checks["tv"] = cmp_.tv < tol["tv"]

    if merged.t > 0:
        pd = S.partition_diagnostic(merged, rep.z_limit)
        out["partition"] = pd.to_dict()
        out["trend"] = pd.trend
        if "z_rel" in tol and math.isfinite(rep.z_limit):
            checks["z_rel"] = pd.rel_error < tol["z_rel"]
    if cfg.epsilons:
        prof = S.condensation_profile(merged, merged.wstar, cfg.epsilons)
        out["edge_profile"] = prof
        if "window_min" in tol:
            checks["window_min"] = min(m for _, m in prof) >= tol["window_min"]

    out["checks"] = checks
    out["pass"] = bool(checks) and all(checks.values())
    run.write_report(out)
    return EXIT_OK if out["pass"] else EXIT_FAIL


def cmd_phase(run: _Run) -> int:
    cfg = run.cfg
    tol = cfg.tolerances.get("root", 1e-10)
    rows = []
    for c in cfg.c_values:
        fm = cfg.fitness.with_h_scaled(c)
        rep = solve_malthusian(cfg.dist, fm, tol)
        atom = L.edge_law(cfg.dist, fm, rep).atom_at_wstar
        rows.append((c, rep.regime, rep.m_star, atom, rep.alpha))
    run.write_csv("phase.csv", ["c", "regime", "m_star", "atom", "alpha"], rows)
    run.write_report({"experiment": "phase", "rows": [
        {"c": c, "regime": r, "m_star": m, "atom": a, "alpha": al} for c, r, m, a, al in rows]})
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "limits": cmd_limits, "simulate": cmd_simulate,
            "compare": cmd_compare, "phase": cmd_phase}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("rif: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.seed)
    except (OSError, InvalidSpec) as exc:
        print(f"rif: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.experiment != args.command:
        print(f"rif: config is for {cfg.experiment!r}, not {args.command!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = _Run(cfg, args.out, args.threads, args.dump_tree)
        return COMMANDS[args.command](run)
    except (Inconclusive, SeriesInconclusive) as exc:
        print(f"rif: inconclusive: {exc}", file=sys.stderr)
        if getattr(exc, "trace", None):
            print(json.dumps(_json_safe(exc.trace[-20:])), file=sys.stderr)
        return EXIT_FAIL
    except RIFError as exc:
        print(f"rif: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
