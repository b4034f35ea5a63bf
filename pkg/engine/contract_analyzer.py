"""
contract_analyzer.py - Per-contract lifting pipeline with a shared memo

bytecode -> runtime slice -> instruction stream -> CFG -> function table -> summaries
"""

import logging
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from core.analysis_config import DEFAULT_CONFIG
from core.cfg_builder import CFG, build_cfg
from core.diagnostics import Diagnostic
from core.disassembler import Bytecode, InstructionStream, disassemble, locate_runtime
from core.errors import ChainFetchError
from core.flow_summary import FunctionSummary, summarize
from core.function_detector import FALLBACK, FunctionTable, identify_functions

logger = logging.getLogger(__name__)


@dataclass
class ContractAnalysis:
    contract: object
    code: Bytecode
    stream: InstructionStream
    cfg: CFG
    table: FunctionTable
    summaries: Dict[int, FunctionSummary] = field(default_factory=dict)
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def is_empty(self):
        return not self.code.data

    @property
    def public_functions(self):
        """C_F: every selector in the function table, FALLBACK included."""
        return self.table.selectors

    @property
    def entry_functions(self):
        """E_f: public functions containing at least one external call."""
        return [s for s in self.table.selectors if self.summaries[s].has_external_calls]

    def summary(self, selector) -> Optional[FunctionSummary]:
        return self.summaries.get(selector)

    def route(self, selector) -> Optional[FunctionSummary]:
        """Summary of the function that runs for `selector` (exact match, else FALLBACK)."""
        return self.summaries.get(selector) or self.summaries.get(FALLBACK)


def _tag(diagnostics, contract):
    return [d if d.contract else replace(d, contract=contract) for d in diagnostics]


def analyze_bytecode(code, contract, registry=None, config=None) -> ContractAnalysis:
    config = config or DEFAULT_CONFIG
    runtime, runtime_diagnostics = locate_runtime(code)
    stream = disassemble(runtime)
    cfg = build_cfg(stream, config)
    table = identify_functions(cfg, contract.hex)

    summaries = {}
    diagnostics = list(runtime_diagnostics) + cfg.diagnostics + table.diagnostics
    for function in table:
        summary = summarize(function, cfg, registry=registry, config=config)
        summaries[function.selector] = summary
        diagnostics.extend(summary.diagnostics)

    logger.info(
        "✓ Contract analyzed: %s (%d functions, %d with external calls)",
        contract, len(table), sum(1 for s in summaries.values() if s.has_external_calls),
    )
    return ContractAnalysis(
        contract=contract,
        code=runtime,
        stream=stream,
        cfg=cfg,
        table=table,
        summaries=summaries,
        diagnostics=_tag(diagnostics, contract.hex),
    )


class ContractAnalyzer:
    """
    Analyzes each contract once and shares the result.

    Safe to share across threads: the memo is lock-protected; two threads missing
    on the same contract may both analyze it, and the first stored result wins.
    """

    def __init__(self, client=None, registry=None, config=None, use_cache=True):
        self.client = client
        self.registry = registry
        self.config = config or DEFAULT_CONFIG
        self.use_cache = use_cache
        self._memo: Dict[object, ContractAnalysis] = {}
        self._errors: Dict[object, str] = {}
        self._lock = threading.Lock()

    def register(self, contract, code):
        """Analyze bytecode supplied directly (hex input) under a given address."""
        analysis = analyze_bytecode(code, contract, self.registry, self.config)
        with self._lock:
            self._memo[contract] = analysis
        return analysis

    def analyze(self, contract) -> ContractAnalysis:
        """Raises ChainFetchError when the code cannot be fetched."""
        with self._lock:
            if contract in self._memo:
                return self._memo[contract]
            if contract in self._errors:
                raise ChainFetchError(self._errors[contract])

        if self.client is None:
            raise ChainFetchError(f"no chain backend configured for {contract}")

        try:
            code = self.client.get_code(contract)
        except ChainFetchError as e:
            logger.warning("✗ Fetch failed for %s: %s", contract, e)
            with self._lock:
                self._errors[contract] = str(e)
            raise

        analysis = analyze_bytecode(code, contract, self.registry, self.config)
        if not self.use_cache:
            return analysis

        with self._lock:
            return self._memo.setdefault(contract, analysis)

    def get_storage(self, contract, slot):
        if self.client is None:
            raise ChainFetchError(f"no chain backend configured for storage of {contract}")
        return self.client.get_storage(contract, slot)
