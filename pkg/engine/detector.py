"""
detector.py

Applies the three-step reentrancy condition to taint results and produces the
classified detection report:

    1. a seeded value that is the entry's own address reaches a downstream callee slot
    2. the selector that callee is invoked with is implemented by the entry (f in C_F)
    3. the entry's implementation of f calls back into a (contract, selector) already
       visited on the chain, with at least one non-STATICCALL such call
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from core.diagnostics import Diagnostic
from core.function_detector import FALLBACK, format_selector
from core.hook_registry import DEFAULT_REGISTRY
from engine.taint_engine import TaintEngine, seed_sources, sender_sources
from engine.xgraph import ResolvedTarget, build_xgraph, resolve_call_target

logger = logging.getLogger(__name__)

ATTACKER = "attacker"
BENIGN = "benign"


class AttackType(str, Enum):
    FALLBACK = "fallback"
    ERC_HOOK = "erc-hook"
    USER_DEFINED = "user-defined"


@dataclass(frozen=True)
class HookCall:
    callsite: int
    call_opcode: str
    target_contract: object
    target_selector: int

    @property
    def pair(self):
        return (self.target_contract, self.target_selector)

    def to_dict(self):
        return {
            "callsite": self.callsite,
            "opcode": self.call_opcode,
            "target_contract": self.target_contract.hex,
            "target_selector": format_selector(self.target_selector),
        }


@dataclass
class Finding:
    attack_type: AttackType
    hook: int
    hook_name: Optional[str]
    root: int
    chain: object
    sink: object
    label: object
    witness: list
    reentered_targets: List[Tuple[object, int]]
    victims: list
    hook_calls: List[HookCall] = field(default_factory=list)


@dataclass
class DetectionReport:
    entry: object
    verdict: str
    findings: List[Finding] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)
    public_functions: List[int] = field(default_factory=list)
    entry_functions: List[int] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    timing_ms: float = 0.0
    xgraph: object = None

    @property
    def is_attacker(self):
        return self.verdict == ATTACKER


def classify_attack_type(finding_or_hook, registry=None):
    """FALLBACK -> fallback; selector in the hook registry -> erc-hook; anything else -> user-defined."""
    registry = DEFAULT_REGISTRY if registry is None else registry
    hook = finding_or_hook.hook if isinstance(finding_or_hook, Finding) else finding_or_hook

    if hook == FALLBACK:
        return AttackType.FALLBACK
    if hook in registry:
        return AttackType.ERC_HOOK
    return AttackType.USER_DEFINED


class ReentrancyDetector:

    def __init__(self, analyzer, registry=None, depth_limit=None):
        self.analyzer = analyzer
        self.registry = DEFAULT_REGISTRY if registry is None else registry
        self.depth_limit = depth_limit
        self.diagnostics: List[Diagnostic] = []
        self._reported = set()

    def diagnose(self, code, detail, contract=None):
        key = (code, detail, contract)
        if key not in self._reported:
            self._reported.add(key)
            self.diagnostics.append(Diagnostic(code, detail, contract))

    def hook_calls(self, entry, hook_summary):
        """Resolved external calls of the entry's hook implementation."""
        calls = []
        for site in hook_summary.call_sites:
            for callee in site.callee_variants or (site.callee,):
                target = resolve_call_target(
                    site, entry, self.analyzer, callee=callee, incoming_selector=hook_summary.selector,
                )
                if isinstance(target, ResolvedTarget):
                    call = HookCall(site.id, site.call_opcode, target.contract, target.selector)
                    if call not in calls:
                        calls.append(call)
        return calls

    def evaluate(self, reach, entry_analysis):
        """Steps 2 and 3 for one marks-self reach result; None when a step fails."""
        entry = entry_analysis.contract
        _, hook = reach.resolved_callback_target
        hook_text = format_selector(hook)

        # Step 2: f in C_F
        if hook not in entry_analysis.table:
            self.diagnose("callback-not-implemented", f"callback {hook_text} not in public functions", entry.hex)
            return None
        hook_summary = entry_analysis.summary(hook)

        # Step 3: f_EC intersects Visited
        visited = reach.chain.visited
        calls = self.hook_calls(entry, hook_summary)
        reentering = [c for c in calls if c.pair in visited and c.target_contract != entry]
        if not reentering:
            return None
        if all(c.call_opcode == "STATICCALL" for c in reentering):
            self.diagnose("read-only-reentrancy", f"{hook_text} re-enters only through STATICCALL", entry.hex)
            return None

        if hook_summary.sender_checked:
            self.diagnose("sender-guarded-hook", f"{hook_text} compares or calls msg.sender", entry.hex)

        reentered = sorted({c.pair for c in reentering}, key=lambda p: (p[0].address, p[1]))
        edge_targets = {edge.target_contract for edge in reach.chain.edges}
        victims = {c for c, _ in reentered if c in edge_targets}
        victims.add(reach.sink.contract)

        return Finding(
            attack_type=classify_attack_type(hook, self.registry),
            hook=hook,
            hook_name=self.registry.name_of(hook),
            root=reach.chain.root[1],
            chain=reach.chain,
            sink=reach.sink,
            label=reach.label,
            witness=reach.witness,
            reentered_targets=reentered,
            victims=sorted(victims, key=lambda c: c.address),
            hook_calls=calls,
        )

    def detect(self, entry) -> DetectionReport:
        start = time.perf_counter()
        graph = build_xgraph(entry, self.analyzer, self.depth_limit)
        entry_analysis = graph.contracts[entry]

        def lookup(contract, selector):
            analysis = graph.contracts.get(contract)
            return analysis.route(selector) if analysis is not None else None

        engine = TaintEngine(lookup, entry, graph.edges_from)
        entry_summaries = [entry_analysis.summary(s) for s in graph.entry_functions]
        labels = seed_sources(entry, entry_summaries) + sender_sources(entry, entry_summaries)

        findings = {}
        for selector in graph.entry_functions:
            for chain in graph.chains.get(selector, []):
                for reach in engine.propagate(chain, labels):
                    # Step 1: the tainted callee must be the entry itself
                    if reach.resolved_callback_target is None:
                        continue
                    finding = self.evaluate(reach, entry_analysis)
                    if finding is None:
                        continue
                    key = (
                        finding.hook,
                        (finding.sink.contract, finding.sink.function, finding.sink.callsite),
                        tuple(finding.reentered_targets),
                    )
                    findings.setdefault(key, finding)

        diagnostics = []
        for analysis in graph.contracts.values():
            diagnostics.extend(analysis.diagnostics)
        diagnostics.extend(graph.diagnostics + engine.diagnostics + self.diagnostics)
        diagnostics = sorted(set(diagnostics), key=lambda d: (d.code, d.contract or "", d.detail))

        verdict = ATTACKER if findings else BENIGN
        report = DetectionReport(
            entry=entry,
            verdict=verdict,
            findings=list(findings.values()),
            diagnostics=diagnostics,
            public_functions=list(entry_analysis.public_functions),
            entry_functions=list(graph.entry_functions),
            metrics=graph.metrics,
            timing_ms=round((time.perf_counter() - start) * 1000, 3),
            xgraph=graph,
        )

        if report.is_attacker:
            logger.info("✗ %s flagged: %d finding(s)", entry, len(report.findings))
        else:
            logger.info("✓ %s benign", entry)
        return report


def detect(entry, analyzer, registry=None, depth_limit=None) -> DetectionReport:
    return ReentrancyDetector(analyzer, registry, depth_limit).detect(entry)


def format_report_text(report):
    """Readable verdict summary for the console."""
    lines = [f"ENTRY: {report.entry}", f"VERDICT: {report.verdict.upper()}", ""]

    for finding in report.findings:
        hook = format_selector(finding.hook)
        if finding.hook_name:
            hook += f" ({finding.hook_name})"
        lines.append(f"  - {finding.attack_type.value}: hook {hook}, root {format_selector(finding.root)}")
        for contract, selector in finding.reentered_targets:
            lines.append(f"      ↳ Re-enters: {contract}.{format_selector(selector)}")
        lines.append(f"      ↳ Victims: {', '.join(str(v) for v in finding.victims)}")

    if report.diagnostics:
        lines.append("")
        lines.append(f"DIAGNOSTICS: {len(report.diagnostics)}")

    metrics = report.metrics
    lines.append(
        f"Visited contracts: {metrics.get('visited_contracts', 0)}, max call depth: {metrics.get('max_depth', 0)}"
    )
    return "\n".join(lines)
