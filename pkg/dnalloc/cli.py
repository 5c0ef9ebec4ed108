"""Command line: ``python -m dnalloc {solve,evaluate,baselines,greedy}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Tuple

from dnalloc import lbd
from dnalloc.metrics import (
    PeriodCostRow,
    SummaryRow,
    emit_report,
    system_performance,
    write_period_costs,
    write_result,
)
from dnalloc.milp import SolverError
from dnalloc.network import (
    Allocation,
    InputError,
    ProblemData,
    load_problem,
    sample_scenarios,
    validate_network,
)
from dnalloc.stage2 import SolveConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

TRACE_FILE = "trace.jsonl"


@dataclass(frozen=True)
class RunManifest:
    input: str
    command: str
    budget: Optional[int] = None
    crew: int = 1
    samples: Optional[int] = None
    seed: int = 0
    droop: bool = True
    lp_tolerance: float = 1e-6
    mip_gap: float = 1e-9
    epsilon: float = 1e-6
    engine: str = "highs"
    backend: str = "bnb"
    workers: int = 1
    out: str = "results"
    allocation: Optional[str] = None
    restrict: Optional[str] = None
    bora_samples: int = 10

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunManifest":
        return cls(
            input=str(args.network),
            command=args.command,
            budget=args.budget,
            crew=args.crew,
            samples=args.samples,
            seed=args.seed,
            droop=not args.no_droop,
            lp_tolerance=args.lp_tolerance,
            mip_gap=args.mip_gap,
            epsilon=args.epsilon,
            engine=args.engine,
            backend=args.backend,
            workers=args.workers,
            out=str(args.out),
            allocation=args.allocation,
            restrict=args.restrict,
            bora_samples=args.bora_samples,
        )

    def as_dict(self) -> dict:
        return asdict(self)

    def solve_config(self) -> SolveConfig:
        return SolveConfig(
            crew_capacity=self.crew,
            droop_enabled=self.droop,
            epsilon_cut=self.epsilon,
            lp_tolerance=self.lp_tolerance,
            mip_gap=self.mip_gap,
            lp_engine=self.engine,
            milp_backend=self.backend,
            workers=self.workers,
        )


class _Run(object):
    """Loaded input, scenarios and configuration for one command."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.problem: ProblemData = load_problem(manifest.input)
        self.dn = self.problem.network
        report = validate_network(self.dn)
        if not report.ok:
            raise InputError("%s: invalid network: %s"
                             % (manifest.input, "; ".join(report.violations)))
        self.scenarios = self._scenarios()
        self.budget = self.dn.n_ders if manifest.budget is None else manifest.budget
        self.cfg = manifest.solve_config()
        self.out = Path(manifest.out)

    def _scenarios(self):
        m = self.manifest
        if m.samples is not None and m.samples <= 0:
            raise InputError("--samples must be positive, got %d" % m.samples)
        if self.problem.scenarios is not None:
            if m.samples is not None:
                raise InputError("%s lists its scenarios; drop --samples" % m.input)
            return self.problem.scenarios
        if m.samples is None:
            raise InputError("%s has no scenarios; pass --samples" % m.input)
        if self.problem.line_fail_probs is None:
            raise InputError("%s has neither scenarios nor line_fail_probs" % m.input)
        return tuple(sample_scenarios(self.dn, self.problem.line_fail_probs, m.samples, m.seed))

    def allocation(self, text: Optional[str]) -> Tuple[str, Allocation]:
        if not text:
            raise InputError("--allocation is required for %s" % self.manifest.command)
        if text in self.problem.allocations:
            return text, self.problem.named_allocation(text)
        if text == "empty":
            return text, Allocation.empty(self.dn)
        placement = {}
        try:
            for part in text.split(","):
                d, site = part.split(":")
                placement[int(d)] = int(site)
        except ValueError:
            raise InputError("allocation %r is neither a name in %s nor der:site,..."
                             % (text, self.manifest.input)) from None
        return text, Allocation.from_placement(self.dn, placement)

    def restriction(self) -> Optional[List[Allocation]]:
        if not self.manifest.restrict:
            return None
        return [self.allocation(name.strip())[1] for name in self.manifest.restrict.split(",")]

    def series(self, evaluation):
        return system_performance(evaluation.plans, self.dn, evaluation.weights,
                                  [s.name for s in self.scenarios])

    @property
    def n_periods(self) -> int:
        return self.dn.n_edges + 1


def _summary(method, evaluation) -> SummaryRow:
    return SummaryRow(method, evaluation.site_cost, evaluation.expected_stage2)


def _describe(evaluation) -> dict:
    a = evaluation.allocation
    return {
        "allocation": a.label,
        "placement": {str(d): int(i) for d, i in a.placement.items()},
        "site_cost": evaluation.site_cost,
        "expected_stage2": evaluation.expected_stage2,
        "objective": evaluation.objective,
        "stage2": {o.scenario.name: o.value for o in evaluation.outcomes},
    }


def cmd_solve(manifest: RunManifest) -> int:
    run = _Run(manifest)
    res = lbd.run_lbd(run.dn, run.scenarios, run.budget, run.cfg, run.restriction())
    best = res.best_evaluation
    meta = manifest.as_dict()
    run.out.mkdir(parents=True, exist_ok=True)
    lbd.write_trace(run.out / TRACE_FILE, res.records, meta)
    emit_report({"LBD": run.series(best)}, [_summary("LBD", best)], run.out, meta)
    payload = _describe(best)
    payload["iterations"] = res.iterations
    write_result(payload, run.out, meta)
    print("%s  objective %r  (%d iterations)" % (res.allocation.label, res.objective,
                                                  res.iterations))
    return EXIT_OK


def cmd_evaluate(manifest: RunManifest) -> int:
    run = _Run(manifest)
    name, a = run.allocation(manifest.allocation)
    ev = lbd.evaluate_allocation(run.dn, a, run.scenarios, run.cfg)
    meta = manifest.as_dict()
    rows = [PeriodCostRow(name, o.scenario.name, o.plan.period_costs(run.dn))
            for o in ev.outcomes]
    write_period_costs(rows, run.n_periods, run.out, meta)
    emit_report({name: run.series(ev)}, [_summary(name, ev)], run.out, meta)
    write_result(_describe(ev), run.out, meta)
    for row in rows:
        print("%s %s %s total %r" % (row.allocation, row.scenario,
                                     " ".join(repr(float(c)) for c in row.costs),
                                     float(sum(row.costs))))
    print("objective %r" % ev.objective)
    return EXIT_OK


def cmd_baselines(manifest: RunManifest) -> int:
    run = _Run(manifest)
    restrict = run.restriction()
    results = [
        lbd.baseline_se(run.dn, run.scenarios, run.budget, run.cfg, restrict),
        lbd.baseline_bora(run.dn, run.scenarios, run.budget, run.cfg,
                          manifest.bora_samples, manifest.seed, restrict),
        lbd.baseline_sa(run.dn, run.scenarios, run.budget, run.cfg),
    ]
    solved = lbd.run_lbd(run.dn, run.scenarios, run.budget, run.cfg, restrict)
    methods = [("LBD", solved.best_evaluation)] + [(r.method, r.best_evaluation)
                                                    for r in results]
    meta = manifest.as_dict()
    emit_report({m: run.series(ev) for m, ev in methods},
                [_summary(m, ev) for m, ev in methods], run.out, meta)
    write_result({m: _describe(ev) for m, ev in methods}, run.out, meta)
    for m, ev in methods:
        print("%-5s %s  objective %r" % (m, ev.allocation.label, ev.objective))
    return EXIT_OK


def cmd_greedy(manifest: RunManifest) -> int:
    run = _Run(manifest)
    name, a = run.allocation(manifest.allocation)
    ev = lbd.evaluate_allocation(run.dn, a, run.scenarios, run.cfg)
    rows = []
    greedy_plans = []
    for o in ev.outcomes:
        greedy_plans.append(o.greedy.plan)
        rows.append(PeriodCostRow(name, o.scenario.name,
                                  o.greedy.plan.period_costs(run.dn), "greedy"))
        rows.append(PeriodCostRow(name, o.scenario.name, o.plan.period_costs(run.dn), "optimal"))
    meta = manifest.as_dict()
    labels = [s.name for s in run.scenarios]
    greedy_series = system_performance(greedy_plans, run.dn, ev.weights, labels)
    write_period_costs(rows, run.n_periods, run.out, meta)
    emit_report({"greedy": greedy_series, "optimal": run.series(ev)},
                [SummaryRow("greedy", ev.site_cost, greedy_series.expected_objective),
                 _summary("optimal", ev)], run.out, meta)
    for row in rows:
        print("%s %-7s %s total %r" % (row.scenario, row.method,
                                       " ".join(repr(float(c)) for c in row.costs),
                                       float(sum(row.costs))))
    return EXIT_OK


_COMMANDS = {
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "baselines": cmd_baselines,
    "greedy": cmd_greedy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", required=True, type=Path,
                        help="problem file (JSON)")
    common.add_argument("--budget", type=int, default=None,
                        help="number of DERs that may be placed (default: all)")
    common.add_argument("--crew", type=int, default=1, help="repairs per period")
    common.add_argument("--samples", type=int, default=None,
                        help="scenarios to sample from line_fail_probs")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--no-droop", action="store_true",
                        help="drop the droop-control rows")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--allocation", default=None,
                        help="allocation name from the input, 'empty', or der:site,...")
    common.add_argument("--restrict", default=None,
                        help="comma-separated allocations the search is limited to")
    common.add_argument("--bora-samples", type=int, default=10)
    common.add_argument("--engine", choices=("highs", "simplex"), default="highs")
    common.add_argument("--backend", choices=("bnb", "highs"), default="bnb")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--lp-tolerance", type=float, default=1e-6)
    common.add_argument("--mip-gap", type=float, default=1e-9)
    common.add_argument("--epsilon", type=float, default=1e-6)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--debug", action="store_true")

    parser = argparse.ArgumentParser(
        prog="dnalloc",
        description="DER allocation and post-storm restoration planning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="L-shaped search for the best allocation")
    sub.add_parser("evaluate", parents=[common], help="Stage II costs of one allocation")
    sub.add_parser("baselines", parents=[common], help="compare LBD, SE, BoRA and SA")
    sub.add_parser("greedy", parents=[common], help="greedy against optimal schedules")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.debug else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](RunManifest.from_args(args))
    except SolverError as exc:
        print("dnalloc: solver failure: %s" % exc, file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print("dnalloc: input error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
