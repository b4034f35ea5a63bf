"""
taint_engine.py - Taint propagation along call chains

Sources are the argument words the entry contract passes to its external calls
(plus the implicit msg.sender of each of its calls). Sinks are callee slots of call
sites in downstream contracts. Propagation runs over a product graph whose nodes are
(chain position, endpoint):

    facts          endpoint -> endpoint inside one function
    crossing       callarg(i, site, p) -> arg(i + 1, p) along chain edge i
    return         ret(i + 1, j) -> callret(i, site)
    off-chain      callarg(site, k) -> callret(site) for every FuncArgToFuncRet(k)
                   of a resolved target of a call site the chain does not follow
    unresolved     callarg(site, p) -> callret(site) when the site has no resolved target
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import networkx as nx

from core.abstract_value import ValueKind
from core.diagnostics import Diagnostic
from core.flow_summary import SENDER, Endpoint, EndpointKind, FactKind, FlowFact
from core.function_detector import FORWARDED, format_selector

logger = logging.getLogger(__name__)

SINK_KIND = "callee-variable"


@dataclass(frozen=True, order=True)
class TaintLabel:
    """
    Origin of one seeded value: the entry contract's call `callsite` in function
    `selector`, argument `position` (SENDER for the implicit msg.sender).
    """

    entry: object
    selector: int
    callsite: int
    position: int
    marks_self: bool = False

    def to_dict(self):
        return {
            "entry": self.entry.hex,
            "selector": format_selector(self.selector),
            "callsite": self.callsite,
            "position": "sender" if self.position == SENDER else self.position,
            "marks_self": self.marks_self,
        }


@dataclass(frozen=True)
class SinkSite:
    contract: object
    function: int
    callsite: int
    sink_kind: str = SINK_KIND

    def to_dict(self):
        return {
            "contract": self.contract.hex,
            "function": format_selector(self.function),
            "callsite": self.callsite,
            "sink_kind": self.sink_kind,
        }


@dataclass(frozen=True)
class WitnessStep:
    contract: object
    selector: int
    fact: FlowFact

    def to_dict(self):
        return {
            "contract": self.contract.hex,
            "selector": format_selector(self.selector),
            **self.fact.to_dict(),
        }


@dataclass
class ReachResult:
    chain: object
    sink: SinkSite
    label: TaintLabel
    chain_index: int
    witness: List[WitnessStep] = field(default_factory=list)
    resolved_callback_target: Optional[Tuple[object, int]] = None


# ============================================================================
# SOURCES
# ============================================================================

def _marks_self(value, entry):
    if value.kind == ValueKind.SELF:
        return True
    return value.is_const and value.value == entry.as_int


def seed_sources(entry, summaries) -> List[TaintLabel]:
    """One label per argument position of every external call in every f in E_f."""
    labels = []
    for summary in summaries:
        for site in summary.call_sites:
            for position, value in enumerate(site.arg_values):
                labels.append(TaintLabel(entry, summary.selector, site.id, position, _marks_self(value, entry)))
    return sorted(labels)


def sender_sources(entry, summaries) -> List[TaintLabel]:
    """msg.sender of every non-delegate call of the entry is the entry itself."""
    labels = []
    for summary in summaries:
        for site in summary.call_sites:
            if not site.is_delegate:
                labels.append(TaintLabel(entry, summary.selector, site.id, SENDER, True))
    return sorted(labels)


# ============================================================================
# PROPAGATION
# ============================================================================

def _callarg(site, position):
    return Endpoint(EndpointKind.CALLARG, site, position)


def _callret(site):
    return Endpoint(EndpointKind.CALLRET, site)


def _positions(site):
    return list(range(len(site.arg_values))) + [SENDER]


def add_function_edges(graph, index, summary):
    """Flow facts of one function at chain position `index`."""
    for fact in summary.flow_facts:
        graph.add_edge((index, fact.source_endpoint), (index, fact.sink_endpoint), fact=fact)


def is_reachable(source: Endpoint, sink: Endpoint, facts):
    """
    Single-function reachability between two endpoints over `facts`.
    Returns (reachable, witness facts).
    """
    if source == sink:
        return True, []

    graph = nx.DiGraph()
    for fact in facts:
        graph.add_edge(fact.source_endpoint, fact.sink_endpoint, fact=fact)

    if source not in graph or sink not in graph:
        return False, []
    try:
        path = nx.shortest_path(graph, source, sink)
    except nx.NetworkXNoPath:
        return False, []

    witness = [graph.edges[a, b]["fact"] for a, b in zip(path, path[1:]) if "fact" in graph.edges[a, b]]
    return True, witness


class TaintEngine:
    """
    summary_lookup(contract, selector) returns the FunctionSummary that runs when
    `selector` is called on `contract`, or None for unresolved contracts.
    edges_from(contract, selector) returns the resolved CallEdges of that function;
    without it every call site off the chain counts as unresolved.
    """

    def __init__(self, summary_lookup, entry, edges_from=None):
        self.summary_lookup = summary_lookup
        self.entry = entry
        self.edges_from = edges_from
        self.diagnostics: List[Diagnostic] = []
        self._reported = set()

    def _diagnose(self, code, detail, contract):
        key = (code, detail, contract)
        if key not in self._reported:
            self._reported.add(key)
            self.diagnostics.append(Diagnostic(code, detail, contract))

    def product_graph(self, chain):
        nodes = chain.nodes
        summaries = [self.summary_lookup(contract, selector) for contract, selector in nodes]
        graph = nx.DiGraph()

        for index, summary in enumerate(summaries):
            if summary is not None:
                add_function_edges(graph, index, summary)
                followed = chain.edges[index].callsite if index < len(chain.edges) else None
                self._add_off_chain_edges(graph, index, nodes[index], summary, followed)

        for index, edge in enumerate(chain.edges):
            caller, callee = summaries[index], summaries[index + 1]
            if caller is None:
                continue
            site = caller.site(edge.callsite)
            if site is None:
                continue
            for position in _positions(site):
                graph.add_edge((index, _callarg(site.id, position)), (index + 1, Endpoint(EndpointKind.ARG, None, position)))
            if callee is not None:
                returns = {f.sink_endpoint for f in callee.flow_facts if f.sink_endpoint.kind == EndpointKind.RET}
                for ret in returns:
                    graph.add_edge((index + 1, ret), (index, _callret(site.id)))

        return graph, summaries

    def _add_off_chain_edges(self, graph, index, node, summary, followed):
        """Call results of sites the chain does not follow at position `index`."""
        edges = self.edges_from(*node) if self.edges_from is not None else []
        for site in summary.call_sites:
            if site.id == followed:
                continue
            targets = [e for e in edges if e.callsite == site.id]
            if not targets:
                for position in _positions(site):
                    graph.add_edge((index, _callarg(site.id, position)), (index, _callret(site.id)))
                continue
            for target in targets:
                callee = self.summary_lookup(target.target_contract, target.target_func_sign)
                for fact in sorted(callee.flow_facts if callee is not None else ()):
                    if fact.kind != FactKind.FUNC_ARG_TO_FUNC_RET:
                        continue
                    pair = ((index, _callarg(site.id, fact.source)), (index, _callret(site.id)))
                    if not graph.has_edge(*pair):
                        graph.add_edge(*pair, fact=fact, owner=(target.target_contract, target.target_func_sign))

    def propagate(self, chain, labels) -> List[ReachResult]:
        """Every (label, sink) pair connected in the chain's product graph."""
        graph, summaries = self.product_graph(chain)
        nodes = chain.nodes
        root_selector = nodes[0][1]

        for index, summary in enumerate(summaries):
            if summary is not None and summary.partial:
                contract, selector = nodes[index]
                self._diagnose("partial-summary", format_selector(selector), contract.hex)

        sinks = {}
        for index in range(1, len(nodes)):
            contract, selector = nodes[index]
            summary = summaries[index]
            if summary is None or contract == self.entry:
                continue
            for site in summary.call_sites:
                sinks[(index, Endpoint(EndpointKind.CALLEE, site.id))] = (index, site)

        results = []
        for label in labels:
            if label.selector != root_selector:
                continue
            seed = ("seed", label)
            start = (0, _callarg(label.callsite, label.position))
            if start not in graph:
                continue
            graph.add_edge(seed, start)

            reached = nx.descendants(graph, seed)
            self._check_storage_drop(reached, summaries, nodes)

            for node in sorted((n for n in reached if n in sinks), key=lambda n: (n[0], n[1].site)):
                index, site = sinks[node]
                contract, selector = nodes[index]
                path = nx.shortest_path(graph, seed, node)
                witness = [
                    WitnessStep(*graph.edges[a, b].get("owner", nodes[a[0]]), graph.edges[a, b]["fact"])
                    for a, b in zip(path, path[1:])
                    if "fact" in graph.edges[a, b]
                ]
                results.append(ReachResult(
                    chain=chain,
                    sink=SinkSite(contract, selector, site.id),
                    label=label,
                    chain_index=index,
                    witness=witness,
                    resolved_callback_target=self._callback_target(label, site, selector),
                ))
            graph.remove_node(seed)

        return results

    def _callback_target(self, label, site, called_selector):
        if not label.marks_self:
            return None
        selector = site.target_selector
        if selector == FORWARDED:
            selector = called_selector
        if selector is None:
            return None
        return (self.entry, selector)

    def _check_storage_drop(self, reached, summaries, nodes):
        for node in reached:
            if node[0] == "seed":
                continue
            index, endpoint = node
            summary = summaries[index]
            if endpoint.kind == EndpointKind.ARG and summary is not None and endpoint.position in summary.stored_args:
                contract, selector = nodes[index]
                self._diagnose(
                    "taint-dropped-at-storage",
                    f"{format_selector(selector)} stores tainted arg {endpoint.position}",
                    contract.hex,
                )
