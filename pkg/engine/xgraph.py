"""
xgraph.py - Cross-contract call graph and call chain enumeration

Starting from every public function of the entry contract that makes external
calls (E_f), resolves each call site to a concrete (contract, selector) and walks
the resulting call graph depth-first, recording every maximal call chain.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx

from core.abstract_value import ValueKind
from core.analysis_config import DEFAULT_CONFIG
from core.diagnostics import Diagnostic
from core.errors import ChainFetchError
from core.function_detector import FORWARDED, format_selector
from engine.chain_client import ContractId

logger = logging.getLogger(__name__)

COMPLETE = "complete"
DEPTH_CAPPED = "depth-capped"
UNRESOLVED_TAIL = "unresolved-tail"

STORAGE_SHARING_CALLS = ("DELEGATECALL", "CALLCODE")


@dataclass(frozen=True)
class Unresolved:
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class ResolvedTarget:
    contract: ContractId
    selector: int


@dataclass(frozen=True)
class CallEdge:
    callsite: int
    caller_address: ContractId
    caller_func_sign: int
    target_contract: ContractId
    target_func_sign: int
    call_opcode: str = "CALL"

    @property
    def sort_key(self):
        return (self.callsite, self.target_contract.address, self.target_func_sign)

    def to_dict(self):
        return {
            "callsite": self.callsite,
            "caller_address": self.caller_address.hex,
            "caller_funcSign": format_selector(self.caller_func_sign),
            "target_contract": self.target_contract.hex,
            "target_funcSign": format_selector(self.target_func_sign),
            "call_opcode": self.call_opcode,
        }


@dataclass(frozen=True)
class UnresolvedCall:
    contract: ContractId
    selector: int
    callsite: int
    reason: str

    def to_dict(self):
        return {
            "contract": self.contract.hex,
            "selector": format_selector(self.selector),
            "callsite": self.callsite,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class CallChain:
    root: Tuple[ContractId, int]
    edges: Tuple[CallEdge, ...] = ()
    truncation: str = COMPLETE

    def __len__(self):
        return len(self.edges)

    @property
    def nodes(self):
        """(contract, called selector) per chain position; position 0 is the root."""
        return [self.root] + [(e.target_contract, e.target_func_sign) for e in self.edges]

    @property
    def visited(self):
        return set(self.nodes)

    def to_dict(self):
        return {
            "root": {"contract": self.root[0].hex, "selector": format_selector(self.root[1])},
            "edges": [edge.to_dict() for edge in self.edges],
            "truncation": self.truncation,
        }


@dataclass
class XGraph:
    entry: ContractId
    entry_functions: List[int] = field(default_factory=list)
    contracts: Dict[ContractId, object] = field(default_factory=dict)
    unresolved_contracts: Dict[ContractId, str] = field(default_factory=dict)
    edges: List[CallEdge] = field(default_factory=list)
    unresolved_calls: List[UnresolvedCall] = field(default_factory=list)
    chains: Dict[int, List[CallChain]] = field(default_factory=dict)
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def visited_contracts(self):
        return len(self.contracts)

    @property
    def max_depth(self):
        return max((len(c) for chains in self.chains.values() for c in chains), default=0)

    @property
    def metrics(self):
        return {
            "visited_contracts": self.visited_contracts,
            "max_depth": self.max_depth,
            "edges": len(self.edges),
            "chains": sum(len(chains) for chains in self.chains.values()),
        }

    def edges_from(self, contract, selector):
        return [e for e in self.edges if e.caller_address == contract and e.caller_func_sign == selector]

    def to_networkx(self):
        graph = nx.MultiDiGraph()
        for contract, analysis in self.contracts.items():
            for selector in analysis.public_functions:
                graph.add_node((contract.hex, format_selector(selector)))
        for contract in self.unresolved_contracts:
            graph.add_node((contract.hex, None), external_unresolved=True)
        for edge in self.edges:
            graph.add_edge(
                (edge.caller_address.hex, format_selector(edge.caller_func_sign)),
                (edge.target_contract.hex, format_selector(edge.target_func_sign)),
                callsite=edge.callsite,
                opcode=edge.call_opcode,
            )
        return graph

    def to_dict(self):
        return {
            "entry": self.entry.hex,
            "entry_functions": [format_selector(s) for s in self.entry_functions],
            "contracts": {
                contract.hex: {
                    "functions": [format_selector(s) for s in analysis.public_functions],
                    "code_size": len(analysis.code),
                }
                for contract, analysis in sorted(self.contracts.items())
            },
            "external_unresolved": {c.hex: reason for c, reason in sorted(self.unresolved_contracts.items())},
            "edges": [edge.to_dict() for edge in self.edges],
            "unresolved_calls": [u.to_dict() for u in self.unresolved_calls],
            "chains": {
                format_selector(selector): [chain.to_dict() for chain in chains]
                for selector, chains in sorted(self.chains.items())
            },
            "metrics": self.metrics,
        }


def resolve_call_target(site, host, reader=None, callee=None, storage=None, incoming_selector=None):
    """
    Resolve a call site to (contract, selector).

    Const callees are read directly, StorageLoad callees through `reader.get_storage`
    on the storage context (the host unless a DELEGATECALL lends its own), EnvSelf is
    the host. Every other callee is Unresolved("dynamic").
    """
    callee = callee or site.callee
    storage = storage or host

    if callee.kind == ValueKind.CONST:
        target = ContractId.from_int(callee.value)
    elif callee.kind == ValueKind.STORAGE:
        if reader is None:
            return Unresolved("fetch-error", "no storage reader")
        try:
            target = ContractId.from_int(reader.get_storage(storage, callee.value))
        except ChainFetchError as e:
            return Unresolved("fetch-error", str(e))
    elif callee.kind == ValueKind.SELF:
        target = host
    else:
        return Unresolved("dynamic", str(callee))

    selector = site.target_selector
    if selector == FORWARDED:
        selector = incoming_selector
    if selector is None:
        return Unresolved("unknown-selector", f"call 0x{site.id:x}")

    return ResolvedTarget(target, selector)


class _Builder:

    def __init__(self, entry, analyzer, depth_limit, config):
        self.analyzer = analyzer
        self.depth_limit = depth_limit
        self.config = config
        self.graph = XGraph(entry=entry)
        self._outgoing = {}
        self._edge_set = set()
        self._unresolved_set = set()
        self._reported = set()

    def diagnose(self, code, detail, contract=None):
        key = (code, detail, contract)
        if key not in self._reported:
            self._reported.add(key)
            self.graph.diagnostics.append(Diagnostic(code, detail, contract))

    def load(self, contract):
        if contract in self.graph.contracts:
            return self.graph.contracts[contract]
        if contract in self.graph.unresolved_contracts:
            return None
        try:
            analysis = self.analyzer.analyze(contract)
        except ChainFetchError as e:
            self.graph.unresolved_contracts[contract] = str(e)
            self.diagnose("external-unresolved", str(e), contract.hex)
            return None
        self.graph.contracts[contract] = analysis
        return analysis

    def outgoing(self, contract, selector, storage):
        """Resolved (edge, storage context) pairs and unresolved reasons for one node."""
        key = (contract, selector, storage)
        if key in self._outgoing:
            return self._outgoing[key]

        analysis = self.graph.contracts[contract]
        summary = analysis.route(selector)
        resolved = []
        unresolved = []

        for site in (summary.call_sites if summary else ()):
            targets = []
            variants = site.callee_variants or (site.callee,)
            for callee in variants:
                result = resolve_call_target(
                    site, contract, self.analyzer, callee=callee, storage=storage, incoming_selector=selector,
                )
                if isinstance(result, Unresolved):
                    unresolved.append(UnresolvedCall(contract, selector, site.id, result.reason))
                    if result.reason in ("fetch-error", "unknown-selector"):
                        self.diagnose(result.reason, f"call 0x{site.id:x}: {result.detail}", contract.hex)
                    continue
                if self.load(result.contract) is None:
                    unresolved.append(UnresolvedCall(contract, selector, site.id, "fetch-error"))
                    continue
                if result not in targets:
                    targets.append(result)

            if len(targets) > self.config.fanout_cap:
                self.diagnose("fanout-capped", f"call 0x{site.id:x}: {len(targets)} targets", contract.hex)
                targets = targets[:self.config.fanout_cap]

            for target in targets:
                edge = CallEdge(site.id, contract, selector, target.contract, target.selector, site.call_opcode)
                child_storage = storage if site.call_opcode in STORAGE_SHARING_CALLS else target.contract
                resolved.append((edge, child_storage))

        resolved.sort(key=lambda item: item[0].sort_key)
        for call in unresolved:
            if call not in self._unresolved_set:
                self._unresolved_set.add(call)
                self.graph.unresolved_calls.append(call)

        self._outgoing[key] = (resolved, unresolved)
        return self._outgoing[key]

    def record_edge(self, edge):
        if edge not in self._edge_set:
            self._edge_set.add(edge)
            self.graph.edges.append(edge)

    def walk_root(self, selector):
        entry = self.graph.entry
        chains = []
        root = (entry, selector)
        counts = Counter({root: 1})
        capped = False

        def visit(contract, called, storage, edges):
            nonlocal capped
            if capped:
                return
            resolved, unresolved = self.outgoing(contract, called, storage)

            if not resolved:
                chains.append(CallChain(root, tuple(edges), UNRESOLVED_TAIL if unresolved else COMPLETE))
            elif len(edges) >= self.depth_limit:
                chains.append(CallChain(root, tuple(edges), DEPTH_CAPPED))
            else:
                for edge, child_storage in resolved:
                    if len(chains) >= self.config.max_chains:
                        capped = True
                        return
                    self.record_edge(edge)
                    pair = (edge.target_contract, edge.target_func_sign)
                    path = edges + [edge]
                    if counts[pair]:
                        # one revisit is recorded; the walk does not re-enter it
                        chains.append(CallChain(root, tuple(path), COMPLETE))
                        continue
                    counts[pair] += 1
                    visit(edge.target_contract, edge.target_func_sign, child_storage, path)
                    counts[pair] -= 1

            if len(chains) >= self.config.max_chains:
                capped = True

        visit(entry, selector, entry, [])

        if capped:
            self.diagnose("chain-cap-reached", f"{format_selector(selector)}: {self.config.max_chains} chains", entry.hex)
        return chains


def build_xgraph(entry, analyzer, depth_limit=None, config=None) -> XGraph:
    """
    Build the call graph rooted at the entry contract's E_f.

    The entry must be analyzable (registered with the analyzer or fetchable);
    unfetchable downstream contracts become external-unresolved nodes.
    """
    config = config or analyzer.config or DEFAULT_CONFIG
    depth_limit = depth_limit or config.depth_limit
    builder = _Builder(entry, analyzer, depth_limit, config)

    entry_analysis = analyzer.analyze(entry)
    builder.graph.contracts[entry] = entry_analysis
    builder.graph.entry_functions = list(entry_analysis.entry_functions)

    for selector in builder.graph.entry_functions:
        builder.graph.chains[selector] = builder.walk_root(selector)

    builder.graph.edges.sort(key=lambda e: (e.caller_address.address, e.caller_func_sign) + e.sort_key)
    logger.info(
        "✓ XGraph built for %s: %d contracts, %d edges, max depth %d",
        entry, builder.graph.visited_contracts, len(builder.graph.edges), builder.graph.max_depth,
    )
    return builder.graph


def enumerate_call_chains(graph: XGraph, selector) -> List[CallChain]:
    """All maximal chains rooted at (entry, selector), in call-site then target order."""
    return list(graph.chains.get(selector, []))
