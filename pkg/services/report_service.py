"""
report_service.py - JSON report schema and writers
"""

import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, model_validator

from core.analysis_config import SCHEMA_VERSION
from core.flow_summary import SENDER
from core.function_detector import format_selector

logger = logging.getLogger(__name__)


class DiagnosticModel(BaseModel):
    code: str
    detail: str = ""
    contract: Optional[str] = None


class EdgeModel(BaseModel):
    callsite: int
    caller_address: str
    caller_funcSign: str
    target_contract: str
    target_funcSign: str
    call_opcode: str


class TargetModel(BaseModel):
    contract: str
    selector: str


class ChainModel(BaseModel):
    root: TargetModel
    edges: List[EdgeModel]
    truncation: Literal["complete", "depth-capped", "unresolved-tail"]
    visited: List[TargetModel]


class SinkModel(BaseModel):
    contract: str
    function: str
    callsite: int
    sink_kind: Literal["callee-variable"] = "callee-variable"


class LabelModel(BaseModel):
    entry: str
    selector: str
    callsite: int
    position: Union[int, Literal["sender"]]
    marks_self: bool


class WitnessStepModel(BaseModel):
    contract: str
    selector: str
    kind: str
    source: str
    sink: str


class HookCallModel(BaseModel):
    callsite: int
    opcode: str
    target_contract: str
    target_selector: str


class FindingModel(BaseModel):
    attack_type: Literal["fallback", "erc-hook", "user-defined"]
    hook: str
    hook_name: Optional[str] = None
    root: str
    chain: ChainModel
    sink: SinkModel
    label: LabelModel
    witness: List[WitnessStepModel]
    reentered_targets: List[TargetModel]
    victims: List[str]
    hook_calls: List[HookCallModel]


class MetricsModel(BaseModel):
    visited_contracts: int = 0
    max_depth: int = 0
    edges: int = 0
    chains: int = 0


class TimingModel(BaseModel):
    analysis_ms: float = 0.0


class ReportModel(BaseModel):
    schema_version: Literal[1] = SCHEMA_VERSION
    entry: str
    verdict: Literal["attacker", "benign"]
    public_functions: List[str]
    entry_functions: List[str]
    findings: List[FindingModel]
    diagnostics: List[DiagnosticModel]
    metrics: MetricsModel
    timing: TimingModel
    xgraph: Optional[dict] = None

    @model_validator(mode="after")
    def verdict_matches_findings(self):
        if (self.verdict == "attacker") != bool(self.findings):
            raise ValueError("verdict must be 'attacker' exactly when findings are present")
        return self


def _target(contract, selector):
    return TargetModel(contract=contract.hex, selector=format_selector(selector))


def _chain_model(chain):
    visited = sorted(chain.visited, key=lambda pair: (pair[0].address, pair[1]))
    return ChainModel(
        root=_target(*chain.root),
        edges=[EdgeModel(**edge.to_dict()) for edge in chain.edges],
        truncation=chain.truncation,
        visited=[_target(c, s) for c, s in visited],
    )


def _finding_model(finding):
    label = finding.label
    return FindingModel(
        attack_type=finding.attack_type.value,
        hook=format_selector(finding.hook),
        hook_name=finding.hook_name,
        root=format_selector(finding.root),
        chain=_chain_model(finding.chain),
        sink=SinkModel(**finding.sink.to_dict()),
        label=LabelModel(
            entry=label.entry.hex,
            selector=format_selector(label.selector),
            callsite=label.callsite,
            position="sender" if label.position == SENDER else label.position,
            marks_self=label.marks_self,
        ),
        witness=[
            WitnessStepModel(
                contract=step.contract.hex,
                selector=format_selector(step.selector),
                kind=step.fact.kind.value,
                source=str(step.fact.source_endpoint),
                sink=str(step.fact.sink_endpoint),
            )
            for step in finding.witness
        ],
        reentered_targets=[_target(c, s) for c, s in finding.reentered_targets],
        victims=[victim.hex for victim in finding.victims],
        hook_calls=[HookCallModel(**call.to_dict()) for call in finding.hook_calls],
    )


def build_report_model(report, emit_xgraph=False) -> ReportModel:
    return ReportModel(
        entry=report.entry.hex,
        verdict=report.verdict,
        public_functions=[format_selector(s) for s in report.public_functions],
        entry_functions=[format_selector(s) for s in report.entry_functions],
        findings=[_finding_model(f) for f in report.findings],
        diagnostics=[DiagnosticModel(**d.to_dict()) for d in report.diagnostics],
        metrics=MetricsModel(**report.metrics),
        timing=TimingModel(analysis_ms=report.timing_ms),
        xgraph=report.xgraph.to_dict() if emit_xgraph and report.xgraph is not None else None,
    )


def report_json(model: ReportModel, include_timing=True):
    exclude = None if include_timing else {"timing"}
    return model.model_dump_json(indent=2, exclude=exclude)


def load_report(path) -> ReportModel:
    return ReportModel.model_validate_json(Path(path).read_text())


def report_schema():
    return ReportModel.model_json_schema()


class ReportService:

    def save_report(self, output_path, model: ReportModel):
        """
        Write one report as JSON, creating parent folders.
        """
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(report_json(model) + "\n")
        logger.info("✓ Report saved: %s", output_path)
        return output_path
