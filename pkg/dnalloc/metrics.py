"""Load cost, system performance and the report files."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

PERFORMANCE_FILE = "performance.csv"
SUMMARY_FILE = "summary.txt"
PERIOD_COSTS_FILE = "period_costs.csv"
RESULT_FILE = "result.json"

PERFORMANCE_COLUMNS = ["method", "period", "performance"]
SUMMARY_COLUMNS = ["method", "J_I", "E_J_II", "total"]


def load_cost(node, shed, gamma) -> float:
    """C^LC (1 - gamma) + (C^LS - C^LC) kappa_c for one load node."""
    return float(node.cost_control * (1.0 - gamma)
                 + (node.cost_shed - node.cost_control) * shed)


def load_value(node, shed, gamma) -> float:
    return float(node.cost_shed) - load_cost(node, shed, gamma)


@dataclass
class PerformanceSeries:
    periods: np.ndarray
    performance: np.ndarray  # percent, full precision
    period_costs: Dict[Hashable, np.ndarray] = field(default_factory=dict)
    expected_objective: float = 0.0

    def is_monotone(self, tol=1e-9) -> bool:
        return bool(np.all(np.diff(self.performance) >= -tol))


def system_performance(plans, dn, weights: Optional[Sequence[float]] = None,
                       labels: Optional[Sequence[Hashable]] = None) -> PerformanceSeries:
    """Scenario-averaged share of the load value served in each period.

    @param plans    one RestorationPlan per scenario.
    @param dn       DistributionNetwork the plans were built on.
    @param weights  scenario weights; uniform 1/|plans| when omitted.
    @param labels   keys for ``period_costs``; defaults to the plan position.
    """
    plans = list(plans)
    if not plans:
        return PerformanceSeries(np.zeros(0, dtype=int), np.zeros(0))
    if weights is None:
        weights = np.full(len(plans), 1.0 / len(plans))
    weights = np.asarray(weights, dtype=float)
    if labels is None:
        labels = list(range(len(plans)))
    costs = np.vstack([p.period_costs(dn) for p in plans])
    worst = dn.total_shed_cost()
    if worst > 0:
        perf = 100.0 * (1.0 - costs / worst)
    else:
        perf = np.full(costs.shape, 100.0)
    return PerformanceSeries(
        periods=np.asarray(plans[0].periods),
        performance=weights @ perf,
        period_costs={lab: row for lab, row in zip(labels, costs)},
        expected_objective=float(weights @ costs.sum(axis=1)),
    )


@dataclass(frozen=True)
class SummaryRow:
    method: str
    site_cost: float
    expected_stage2: float

    @property
    def total(self) -> float:
        return self.site_cost + self.expected_stage2


@dataclass(frozen=True)
class PeriodCostRow:
    allocation: str
    scenario: str
    costs: Sequence[float]
    method: Optional[str] = None


def _manifest_line(manifest) -> str:
    return "# manifest: %s\n" % json.dumps(manifest or {}, sort_keys=True)


def _write(path: Path, manifest, body: str, header: bool = True):
    try:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(_manifest_line(manifest))
            fh.write(body)
    except OSError as exc:
        raise OSError("cannot write %s: %s" % (path, exc.strerror or exc)) from exc
    logger.debug("wrote %s", path)
    return path


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n", float_format=lambda x: repr(float(x)))


def _destination(destination) -> Path:
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError("cannot create %s: %s" % (dest, exc.strerror or exc)) from exc
    return dest


def performance_frame(series: Mapping[str, PerformanceSeries]) -> pd.DataFrame:
    rows = [
        {"method": method, "period": int(k), "performance": float(r)}
        for method, s in series.items()
        for k, r in zip(s.periods, s.performance)
    ]
    return pd.DataFrame(rows, columns=PERFORMANCE_COLUMNS)


def summary_frame(summary: Sequence[SummaryRow]) -> pd.DataFrame:
    rows = [[r.method, r.site_cost, r.expected_stage2, r.total] for r in summary]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def emit_report(series: Mapping[str, PerformanceSeries], summary: Sequence[SummaryRow],
                destination, manifest=None) -> List[Path]:
    """Write performance.csv and summary.txt under ``destination``."""
    dest = _destination(destination)
    perf = _write(dest / PERFORMANCE_FILE, manifest, _csv(performance_frame(series)))
    table = summary_frame(summary)
    if table.empty:
        body = "  ".join(SUMMARY_COLUMNS) + "\n"
    else:
        text = table.to_string(index=False, float_format=lambda x: repr(float(x)))
        body = "\n".join(line.rstrip() for line in text.splitlines()) + "\n"
    summ = _write(dest / SUMMARY_FILE, manifest, body)
    return [perf, summ]


def period_cost_frame(rows: Sequence[PeriodCostRow], n_periods: int) -> pd.DataFrame:
    with_method = any(r.method is not None for r in rows)
    head = ["allocation", "scenario"] + (["method"] if with_method else [])
    columns = head + ["k%d" % k for k in range(n_periods)] + ["total"]
    out = []
    for r in rows:
        costs = [float(c) for c in r.costs]
        lead = [r.allocation, r.scenario] + ([r.method] if with_method else [])
        out.append(lead + costs + [float(sum(costs))])
    return pd.DataFrame(out, columns=columns)


def write_period_costs(rows: Sequence[PeriodCostRow], n_periods: int, destination,
                       manifest=None) -> Path:
    dest = _destination(destination)
    return _write(dest / PERIOD_COSTS_FILE, manifest, _csv(period_cost_frame(rows, n_periods)))


def write_result(payload: Mapping, destination, manifest=None) -> Path:
    """Plain JSON; the manifest travels under the ``"manifest"`` key."""
    if "manifest" in payload:
        raise ValueError("result payload already has a 'manifest' key")
    dest = _destination(destination)
    doc = dict(payload, manifest=manifest or {})
    body = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    return _write(dest / RESULT_FILE, manifest, body, header=False)
