"""Distribution network data model, validation, allocations and scenarios.

Node ids are the positions in ``DistributionNetwork.nodes``; edge ids are the
positions in ``DistributionNetwork.edges``.  All power quantities are per-unit
and all voltages are squared magnitudes once loaded.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

FIXTURE_NAME = "four_node.json"


class InputError(ValueError):
    """Malformed or inconsistent problem input."""


@dataclass(frozen=True)
class NodeParams:
    pc_max: float = 0.0
    qc_max: float = 0.0
    gamma_min: float = 0.0
    cost_shed: float = 0.0
    cost_control: float = 0.0
    site_weight: float = 0.0
    v_load_min: float = 0.0
    v_load_max: float = math.inf
    v_dg_min: Optional[float] = None
    v_dg_max: Optional[float] = None

    @property
    def has_dg_bounds(self) -> bool:
        return self.v_dg_min is not None and self.v_dg_max is not None


@dataclass(frozen=True)
class EdgeParams:
    from_node: int
    to_node: int
    resistance: float
    reactance: float

    @property
    def pair(self) -> frozenset:
        return frozenset((self.from_node, self.to_node))


@dataclass(frozen=True)
class DerParams:
    pg_max: float
    pf_tan: float
    qg_max: Optional[float] = None
    droop_coeff: float = 0.0
    v_ref: float = 1.0
    name: str = ""

    @property
    def q_limit(self) -> float:
        """Largest |q_g| the unit can produce."""
        limit = self.pf_tan * self.pg_max
        if self.qg_max is not None:
            limit = min(limit, self.qg_max)
        return limit


@dataclass(frozen=True)
class DistributionNetwork:
    nodes: Tuple[NodeParams, ...]
    edges: Tuple[EdgeParams, ...]
    substation_id: int = 0
    candidate_sites: Tuple[int, ...] = ()
    ders: Tuple[DerParams, ...] = ()
    nominal_sq_voltage: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "ders", tuple(self.ders))
        object.__setattr__(
            self, "candidate_sites", tuple(sorted(set(self.candidate_sites)))
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_sites(self) -> int:
        return len(self.candidate_sites)

    @property
    def n_ders(self) -> int:
        return len(self.ders)

    @property
    def n_alloc(self) -> int:
        """Length of the allocation vector a = (y_s, y_g)."""
        return self.n_sites * (1 + self.n_ders)

    @property
    def load_nodes(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n_nodes) if i != self.substation_id)

    @cached_property
    def substation_edges(self) -> frozenset:
        return frozenset(
            e
            for e, edge in enumerate(self.edges)
            if self.substation_id in (edge.from_node, edge.to_node)
        )

    @cached_property
    def out_edges(self) -> Dict[int, Tuple[int, ...]]:
        """Edges leaving each node, away from the substation."""
        out = {i: [] for i in range(self.n_nodes)}
        for e, edge in enumerate(self.edges):
            out.setdefault(edge.from_node, []).append(e)
        return {i: tuple(es) for i, es in out.items()}

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        for e, edge in enumerate(self.edges):
            g.add_edge(edge.from_node, edge.to_node, index=e)
        return g

    @cached_property
    def hop_distance(self) -> Dict[int, Dict[int, int]]:
        return dict(nx.all_pairs_shortest_path_length(self.graph))

    def edge_index(self, u: int, v: int) -> int:
        data = self.graph.get_edge_data(u, v)
        if data is None:
            raise InputError("no edge between nodes %d and %d" % (u, v))
        return data["index"]

    def site_position(self, node: int) -> int:
        try:
            return self.candidate_sites.index(node)
        except ValueError:
            raise InputError("node %d is not a candidate site" % node) from None

    def gen_index(self, u: int, d: int) -> int:
        """Position of y_g[u, d] in the allocation vector."""
        return self.n_sites + u * self.n_ders + d

    def total_shed_cost(self) -> float:
        return float(sum(self.nodes[i].cost_shed for i in self.load_nodes))

    def site_cost_vector(self) -> np.ndarray:
        """Site-cost coefficients over the allocation vector."""
        c = np.zeros(self.n_alloc)
        for u, node in enumerate(self.candidate_sites):
            c[u] = self.nodes[node].site_weight
        return c

    def default_big_m(self) -> float:
        loads = [self.nodes[i] for i in self.load_nodes]
        demand = sum(n.pc_max + n.qc_max for n in loads)
        lows = [n.v_load_min for n in loads] + [
            n.v_dg_min for n in loads if n.v_dg_min is not None
        ]
        highs = [n.v_load_max for n in loads] + [
            n.v_dg_max for n in loads if n.v_dg_max is not None
        ]
        span = (max(highs) - min(lows)) if loads else 0.0
        if not math.isfinite(span):
            span = 1.0
        return 2.0 * demand + span


@dataclass(frozen=True)
class Scenario:
    failed_edges: frozenset
    probability: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "failed_edges", frozenset(self.failed_edges))
        if not (self.probability >= 0.0):
            raise ValueError("scenario probability must be nonnegative")

    @classmethod
    def build(cls, dn: DistributionNetwork, failed: Iterable[int],
              probability: float = 1.0, name: str = "") -> "Scenario":
        """Scenario with the substation edges forced into the failed set."""
        failed = frozenset(int(e) for e in failed)
        unknown = [e for e in failed if not 0 <= e < dn.n_edges]
        if unknown:
            raise InputError("scenario %r fails unknown edges %s" % (name, unknown))
        return cls(failed | dn.substation_edges, probability, name)


@dataclass(frozen=True)
class Allocation:
    """Site development y_s and DER assignment y_g over candidate sites."""

    sites: Tuple[int, ...]
    assignment: Tuple[Tuple[int, ...], ...]
    site_ids: Tuple[int, ...] = ()

    def vector(self) -> np.ndarray:
        flat = [x for row in self.assignment for x in row]
        return np.array(list(self.sites) + flat, dtype=float)

    @property
    def placement(self) -> Dict[int, int]:
        """Map DER index -> site node id."""
        out = {}
        for u, row in enumerate(self.assignment):
            for d, val in enumerate(row):
                if val:
                    out[d] = self.site_ids[u]
        return dict(sorted(out.items()))

    @property
    def n_assigned(self) -> int:
        return int(sum(sum(row) for row in self.assignment))

    @property
    def label(self) -> str:
        if not self.placement:
            return "empty"
        return ",".join("%d:%d" % (d, i) for d, i in self.placement.items())

    def site_cost(self, dn: DistributionNetwork) -> float:
        return float(dn.site_cost_vector() @ self.vector())

    def satisfies(self, budget: int) -> bool:
        """Placement rules: site flags match DERs, one site per DER, within budget."""
        for u, row in enumerate(self.assignment):
            if any(v > self.sites[u] for v in row):
                return False
            if self.sites[u] > sum(row):
                return False
        n_ders = len(self.assignment[0]) if self.assignment else 0
        for d in range(n_ders):
            if sum(row[d] for row in self.assignment) > 1:
                return False
        return self.n_assigned <= budget

    @classmethod
    def empty(cls, dn: DistributionNetwork) -> "Allocation":
        return cls.from_placement(dn, {})

    @classmethod
    def from_placement(cls, dn: DistributionNetwork,
                       placement: Mapping[int, int]) -> "Allocation":
        assignment = [[0] * dn.n_ders for _ in range(dn.n_sites)]
        for d, node in placement.items():
            d = int(d)
            if not 0 <= d < dn.n_ders:
                raise InputError("unknown DER index %d" % d)
            assignment[dn.site_position(int(node))][d] = 1
        sites = tuple(int(any(row)) for row in assignment)
        return cls(sites, tuple(tuple(row) for row in assignment), dn.candidate_sites)

    @classmethod
    def from_vector(cls, dn: DistributionNetwork, vec: Sequence[float]) -> "Allocation":
        vec = np.rint(np.asarray(vec, dtype=float)).astype(int)
        if vec.shape != (dn.n_alloc,):
            raise ValueError("allocation vector has length %d, expected %d"
                             % (vec.size, dn.n_alloc))
        sites = tuple(int(v) for v in vec[: dn.n_sites])
        gens = vec[dn.n_sites:].reshape(dn.n_sites, dn.n_ders)
        return cls(sites, tuple(tuple(int(v) for v in row) for row in gens),
                   dn.candidate_sites)


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class ProblemData:
    """Everything read from one input file."""

    network: DistributionNetwork
    scenarios: Optional[Tuple[Scenario, ...]] = None
    line_fail_probs: Optional[np.ndarray] = None
    allocations: Mapping[str, Mapping[int, int]] = field(default_factory=dict)
    source: str = ""

    def named_allocation(self, name: str) -> Allocation:
        if name not in self.allocations:
            raise InputError("unknown allocation %r in %s" % (name, self.source))
        return Allocation.from_placement(self.network, self.allocations[name])


def validate_network(dn: DistributionNetwork) -> ValidationReport:
    out: List[str] = []
    n = dn.n_nodes
    if not 0 <= dn.substation_id < n:
        return ValidationReport(("substation %d is not a node" % dn.substation_id,))

    for i, node in enumerate(dn.nodes):
        if not 0.0 <= node.gamma_min <= 1.0:
            out.append("node %d: gamma_min outside [0, 1]" % i)
        if node.cost_control > node.cost_shed:
            out.append("node %d: cost_control exceeds cost_shed" % i)
        if node.pc_max < 0 or node.qc_max < 0:
            out.append("node %d: negative demand" % i)
        if not node.v_load_min < node.v_load_max:
            out.append("node %d: empty load voltage range" % i)
        if node.has_dg_bounds and not node.v_dg_min < node.v_dg_max:
            out.append("node %d: empty DG voltage range" % i)

    seen = set()
    for e, edge in enumerate(dn.edges):
        ends = (edge.from_node, edge.to_node)
        if not all(0 <= v < n for v in ends):
            out.append("edge %d: unknown endpoint in %s" % (e, ends))
            continue
        if edge.from_node == edge.to_node:
            out.append("edge %d: cycle detected (self loop at node %d)" % (e, edge.from_node))
        if edge.pair in seen:
            out.append("edge %d: cycle detected between nodes %d and %d" % ((e,) + ends))
        seen.add(edge.pair)
        if edge.resistance < 0 or edge.reactance < 0:
            out.append("edge %d: negative impedance" % e)

    if out:
        return ValidationReport(tuple(out))

    g = dn.graph
    try:
        cycle = nx.find_cycle(g)
        out.append("cycle detected through nodes %s" % sorted({u for u, _ in cycle}))
    except nx.NetworkXNoCycle:
        pass
    if not nx.is_connected(g):
        out.append("network is not connected to the substation")
    if dn.n_edges != n - 1:
        out.append("edge count %d differs from non-substation node count %d"
                   % (dn.n_edges, n - 1))
    if not out:
        depth = nx.single_source_shortest_path_length(g, dn.substation_id)
        for e, edge in enumerate(dn.edges):
            if depth[edge.from_node] >= depth[edge.to_node]:
                out.append("edge %d (%d->%d) is not oriented away from the substation"
                           % (e, edge.from_node, edge.to_node))

    for site in dn.candidate_sites:
        if site == dn.substation_id:
            out.append("site at substation (node %d)" % site)
        elif not 0 <= site < n:
            out.append("candidate site %d is not a node" % site)

    dg_lows = [x.v_dg_min for x in dn.nodes if x.has_dg_bounds]
    dg_highs = [x.v_dg_max for x in dn.nodes if x.has_dg_bounds]
    for d, der in enumerate(dn.ders):
        if der.pg_max < 0:
            out.append("DER %d: negative pg_max" % d)
        if der.pf_tan < 0:
            out.append("DER %d: negative pf_tan" % d)
        if der.qg_max is not None and der.qg_max < 0:
            out.append("DER %d: negative qg_max" % d)
        if dg_lows and not min(dg_lows) <= der.v_ref <= max(dg_highs):
            out.append("DER %d: v_ref outside the DG voltage range" % d)
    return ValidationReport(tuple(out))


def enumerate_allocations(dn: DistributionNetwork, budget: int) -> List[Allocation]:
    """Every allocation within the placement rules, empty allocation first."""
    if budget < 0 or budget > dn.n_ders:
        raise InputError("budget %d outside [0, %d]" % (budget, dn.n_ders))
    choices = [None] + list(dn.candidate_sites)
    out = []
    for combo in itertools.product(choices, repeat=dn.n_ders):
        placement = {d: site for d, site in enumerate(combo) if site is not None}
        if len(placement) <= budget:
            out.append(Allocation.from_placement(dn, placement))
    return out


def sample_scenarios(dn: DistributionNetwork, line_fail_probs: Sequence[float],
                     count: int, seed: int) -> List[Scenario]:
    """Independent per-line failures; substation edges always fail."""
    probs = np.asarray(line_fail_probs, dtype=float)
    if probs.shape != (dn.n_edges,):
        raise InputError("line_fail_probs has %d entries for %d edges"
                         % (probs.size, dn.n_edges))
    if np.any(probs < 0) or np.any(probs > 1):
        raise InputError("line failure probabilities must lie in [0, 1]")
    if count < 1:
        raise InputError("at least one scenario must be sampled, got %d" % count)
    rng = np.random.default_rng(seed)
    draws = rng.random((count, dn.n_edges)) < probs
    return [
        Scenario.build(dn, np.flatnonzero(row), 1.0 / count, "s%d" % j)
        for j, row in enumerate(draws)
    ]


def failed_edge_count_horizon(dn: DistributionNetwork) -> int:
    return dn.n_edges


###############################################
#          JSON ingestion                     #
###############################################

_MISSING = object()


def _get(obj, key, where, cast=float, default=_MISSING):
    if not isinstance(obj, Mapping):
        raise InputError("%s: expected an object" % where)
    if key not in obj or obj[key] is None:
        if default is _MISSING:
            raise InputError("%s.%s: missing field" % (where, key))
        return default
    try:
        return cast(obj[key])
    except (TypeError, ValueError):
        raise InputError("%s.%s: cannot read %r" % (where, key, obj[key])) from None


def _list(obj, key, where, required=True):
    val = obj.get(key)
    if val is None:
        if required:
            raise InputError("%s: missing section %r" % (where, key))
        return None
    if not isinstance(val, list):
        raise InputError("%s.%s: expected a list" % (where, key))
    return val


def parse_problem(obj: Mapping, source: str = "<input>") -> ProblemData:
    if not isinstance(obj, Mapping):
        raise InputError("%s: top level must be an object" % source)

    units = obj.get("voltage_units", "magnitude")
    if units not in ("magnitude", "squared"):
        raise InputError("%s.voltage_units: expected 'magnitude' or 'squared'" % source)
    sq = (lambda v: v * v) if units == "magnitude" else (lambda v: v)

    v_min = _get(obj, "v_load_min", source, default=None)
    v_max = _get(obj, "v_load_max", source, default=None)

    raw_nodes = _list(obj, "nodes", source)
    nodes = [None] * len(raw_nodes)
    for pos, item in enumerate(raw_nodes):
        where = "%s: nodes[%d]" % (source, pos)
        i = _get(item, "id", where, int, pos)
        if not 0 <= i < len(raw_nodes) or nodes[i] is not None:
            raise InputError("%s.id: node ids must be 0..%d without repeats"
                             % (where, len(raw_nodes) - 1))
        lo = _get(item, "v_load_min", where, default=v_min)
        hi = _get(item, "v_load_max", where, default=v_max)
        if lo is None or hi is None:
            raise InputError("%s: missing load voltage bounds" % where)
        dg_lo = _get(item, "v_dg_min", where, default=None)
        dg_hi = _get(item, "v_dg_max", where, default=None)
        nodes[i] = NodeParams(
            pc_max=_get(item, "pc_max", where, default=0.0),
            qc_max=_get(item, "qc_max", where, default=0.0),
            gamma_min=_get(item, "gamma_min", where, default=0.0),
            cost_shed=_get(item, "cost_shed", where, default=0.0),
            cost_control=_get(item, "cost_control", where, default=0.0),
            site_weight=_get(item, "site_weight", where, default=0.0),
            v_load_min=sq(lo),
            v_load_max=sq(hi),
            v_dg_min=None if dg_lo is None else sq(dg_lo),
            v_dg_max=None if dg_hi is None else sq(dg_hi),
        )

    edges = []
    for e, item in enumerate(_list(obj, "edges", source)):
        where = "%s: edges[%d]" % (source, e)
        edges.append(EdgeParams(
            from_node=_get(item, "from", where, int),
            to_node=_get(item, "to", where, int),
            resistance=_get(item, "r", where),
            reactance=_get(item, "x", where),
        ))

    ders = []
    for d, item in enumerate(_list(obj, "ders", source, required=False) or []):
        where = "%s: ders[%d]" % (source, d)
        pg = _get(item, "pg_max", where)
        qg = _get(item, "qg_max", where, default=None)
        pf = _get(item, "pf_tan", where, default=None)
        if pf is None:
            if qg is None or pg <= 0:
                raise InputError("%s: give pf_tan, or qg_max with a positive pg_max" % where)
            pf = qg / pg
        ders.append(DerParams(
            pg_max=pg,
            pf_tan=pf,
            qg_max=qg,
            droop_coeff=_get(item, "droop_coeff", where, default=0.0),
            v_ref=sq(_get(item, "v_ref", where, default=1.0)),
            name=_get(item, "name", where, str, "DER%d" % (d + 1)),
        ))

    sites = _list(obj, "candidate_sites", source, required=False) or []
    dn = DistributionNetwork(
        nodes=tuple(nodes),
        edges=tuple(edges),
        substation_id=_get(obj, "substation", source, int, 0),
        candidate_sites=tuple(int(s) for s in sites),
        ders=tuple(ders),
        nominal_sq_voltage=sq(_get(obj, "nominal_voltage", source, default=1.0)),
        name=_get(obj, "name", source, str, ""),
    )
    report = validate_network(dn)
    if not report.ok:
        raise InputError("%s: invalid network: %s" % (source, "; ".join(report.violations)))

    scenarios = None
    raw_scen = _list(obj, "scenarios", source, required=False)
    if raw_scen is not None:
        scenarios = []
        for j, item in enumerate(raw_scen):
            where = "%s: scenarios[%d]" % (source, j)
            failed = []
            for pair in _list(item, "failed", where):
                if isinstance(pair, list) and len(pair) == 2:
                    failed.append(dn.edge_index(int(pair[0]), int(pair[1])))
                else:
                    failed.append(int(pair))
            prob = _get(item, "probability", where, default=1.0 / len(raw_scen))
            scenarios.append(Scenario.build(
                dn, failed, prob, _get(item, "name", where, str, "S%d" % (j + 1))))
        if scenarios and abs(sum(s.probability for s in scenarios) - 1.0) > 1e-9:
            raise InputError("%s.scenarios: probabilities must sum to 1" % source)
        scenarios = tuple(scenarios)

    probs = obj.get("line_fail_probs")
    if probs is not None:
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (dn.n_edges,):
            raise InputError("%s.line_fail_probs: need one probability per edge" % source)

    allocations = {}
    for name, item in (obj.get("allocations") or {}).items():
        if not isinstance(item, Mapping):
            raise InputError("%s.allocations.%s: expected an object" % (source, name))
        allocations[name] = {int(d): int(node) for d, node in item.items()}
        Allocation.from_placement(dn, allocations[name])

    return ProblemData(dn, scenarios, probs, allocations, source)


def load_problem(path) -> ProblemData:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError("cannot read %s: %s" % (path, exc.strerror or exc)) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError("%s:%d:%d: %s" % (path, exc.lineno, exc.colno, exc.msg)) from None
    return parse_problem(obj, str(path))


def fixture_path() -> Path:
    return Path(str(resources.files("dnalloc") / "data" / FIXTURE_NAME))


def load_fixture() -> ProblemData:
    """The bundled 4-node example network."""
    return load_problem(fixture_path())
