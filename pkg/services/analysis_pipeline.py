"""
analysis_pipeline.py - Single-input analysis run

Wires the run configuration to a chain backend, the shared contract analyzer and the
detector, and turns one input (hex file, raw hex, or address) into a report.
"""

import logging
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from core.analysis_config import DEPTH_LIMIT, FANOUT_CAP, RPC_URL_ENV, AnalysisConfig
from core.disassembler import Bytecode, BytecodeKind
from core.errors import InputError
from core.hook_registry import DEFAULT_REGISTRY, HookRegistry
from engine.chain_client import ChainClient, ContractId, FixtureRecorder, FixtureStore
from engine.contract_analyzer import ContractAnalyzer
from engine.detector import ReentrancyDetector, format_report_text
from services.report_service import ReportService, build_report_model
from services.rpc_service import RpcBackend

logger = logging.getLogger(__name__)


class AnalysisInput(BaseModel):
    kind: Literal["hex-file", "hex", "address"]
    value: str
    creation: bool = False

    @property
    def label(self):
        if self.kind == "hex-file":
            return Path(self.value).stem
        if self.kind == "address":
            return self.value.lower()
        return "hex"


class RunConfig(BaseModel):
    input: Optional[AnalysisInput] = None
    fixtures: Optional[Path] = None
    rpc_url: Optional[str] = None
    record: Optional[Path] = None
    depth_limit: int = Field(DEPTH_LIMIT, ge=1)
    fanout_cap: int = Field(FANOUT_CAP, ge=1)
    jobs: int = Field(1, ge=1)
    output: Optional[Path] = None
    emit_xgraph: bool = False
    hooks: Optional[Path] = None

    @model_validator(mode="after")
    def check_backend(self):
        if self.fixtures is not None and self.rpc_url is not None:
            raise ValueError("--fixtures and --rpc are mutually exclusive")
        if self.record is not None and self.rpc_url is None:
            raise ValueError("--record requires an RPC backend")
        if self.input is not None and self.input.kind == "address" and not self.has_backend:
            raise ValueError("address input requires --fixtures or --rpc")
        return self

    @property
    def has_backend(self):
        return self.fixtures is not None or self.rpc_url is not None

    @classmethod
    def with_environment(cls, **values):
        """Fill rpc_url from the environment when neither backend flag is given."""
        if values.get("rpc_url") is None and values.get("fixtures") is None and os.environ.get(RPC_URL_ENV):
            values["rpc_url"] = os.environ[RPC_URL_ENV]
        return cls(**values)


def build_client(config: RunConfig, session=None):
    if config.fixtures is not None:
        return ChainClient(FixtureStore(config.fixtures))
    if config.rpc_url is not None:
        recorder = FixtureRecorder(config.record) if config.record is not None else None
        return ChainClient(RpcBackend(config.rpc_url, session=session), recorder)
    return None


class AnalysisPipeline:
    """
    One backend, hook registry and contract analyzer shared by every input run
    through this pipeline (batch items included).
    """

    def __init__(self, config: RunConfig, session=None):
        self.config = config
        self.registry = HookRegistry.from_file(config.hooks) if config.hooks else DEFAULT_REGISTRY
        self.analysis_config = AnalysisConfig(depth_limit=config.depth_limit, fanout_cap=config.fanout_cap)
        self.client = build_client(config, session)
        self.analyzer = ContractAnalyzer(self.client, self.registry, self.analysis_config)
        self.storage = ReportService()

        if self.client is not None:
            logger.info("✓ Backend: %s", self.client.describe())
        else:
            logger.info("⚠ No chain backend, calls to other contracts stay unresolved")

    def resolve_input(self, item: AnalysisInput):
        """(entry address, bytecode or None when the code is fetched from the backend)."""
        kind = BytecodeKind.CREATION if item.creation else BytecodeKind.RUNTIME

        if item.kind == "address":
            if self.client is None:
                raise InputError("address input requires --fixtures or --rpc")
            return ContractId.parse(item.value), None

        if item.kind == "hex-file":
            code = Bytecode.from_file(item.value, kind)
            stem = Path(item.value).stem
            entry = ContractId.parse(stem) if ContractId.is_address(stem) else ContractId.for_code(code)
            return entry, code

        code = Bytecode.from_hex(item.value, kind)
        return ContractId.for_code(code), code

    def run(self, item: AnalysisInput, output=None):
        """
        Analyze one input. Returns (DetectionReport, ReportModel); writes the report
        when an output path is given.
        """
        entry, code = self.resolve_input(item)
        if code is not None:
            self.analyzer.register(entry, code)
        else:
            self.analyzer.analyze(entry)

        detector = ReentrancyDetector(self.analyzer, self.registry, self.config.depth_limit)
        report = detector.detect(entry)
        model = build_report_model(report, emit_xgraph=self.config.emit_xgraph)

        logger.debug(format_report_text(report))
        if output is not None:
            self.storage.save_report(output, model)

        return report, model
