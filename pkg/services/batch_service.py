"""
batch_service.py - Batch analysis over a list of inputs

Each list line is an address, a bytecode file path, or raw hex. Items run on a
thread pool sharing one contract analyzer; a failing item becomes an error row and
never stops the batch.
"""

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import pandas as pd

from core.errors import InputError, ReentryScopeError
from core.excel_formatter import ExcelFormatter
from engine.chain_client import ContractId
from services.analysis_pipeline import AnalysisInput, AnalysisPipeline

logger = logging.getLogger(__name__)

EXIT_BENIGN = 0
EXIT_ERROR = 1
EXIT_ATTACKER = 2

_UNSAFE_NAME = re.compile(r"[^A-Za-z0-9_.-]+")


@dataclass
class BatchItem:
    index: int
    input: AnalysisInput

    @property
    def report_name(self):
        name = _UNSAFE_NAME.sub("_", self.input.label)[:48] or "item"
        return f"{self.index:04d}_{name}.json"


@dataclass
class BatchResult:
    item: BatchItem
    verdict: str
    entry: Optional[str] = None
    attack_types: List[str] = field(default_factory=list)
    findings: int = 0
    diagnostics: int = 0
    analysis_ms: float = 0.0
    error_kind: Optional[str] = None
    message: str = ""
    report_path: Optional[Path] = None

    def to_row(self):
        return {
            "Index": self.item.index,
            "Input": self.item.input.value,
            "Entry": self.entry or "",
            "Verdict": self.verdict,
            "Attack Types": ", ".join(self.attack_types),
            "Findings": self.findings,
            "Diagnostics": self.diagnostics,
            "Analysis ms": self.analysis_ms,
            "Error": f"{self.error_kind}: {self.message}" if self.error_kind else "",
        }


# ============================================================================
# LIST PARSING
# ============================================================================

def classify_line(line, creation=False) -> AnalysisInput:
    """
    0x plus exactly 40 hex digits is an address; without the 0x the same digits are
    bytecode. Twenty-byte bytecode with a 0x prefix has to come from a .hex file.
    A line naming a .hex or existing file is a hex-file; anything else is hex text.
    """
    text = line.strip()
    if ContractId.is_address(text):
        return AnalysisInput(kind="address", value=text, creation=creation)
    if text.endswith(".hex") or Path(text).is_file():
        return AnalysisInput(kind="hex-file", value=text, creation=creation)
    return AnalysisInput(kind="hex", value=text, creation=creation)


def read_batch_list(path, creation=False) -> List[BatchItem]:
    """Blank lines and lines starting with '#' are skipped."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise InputError(f"Cannot read batch list {path}: {e}") from e

    items = []
    for line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        items.append(BatchItem(len(items), classify_line(stripped, creation)))
    return items


# ============================================================================
# BATCH RUN
# ============================================================================

class BatchService:

    def __init__(self, pipeline: AnalysisPipeline, output_folder=None, jobs=1):
        self.pipeline = pipeline
        self.output_folder = Path(output_folder) if output_folder else None
        self.jobs = max(1, jobs)

    def run_item(self, item: BatchItem) -> BatchResult:
        output = self.output_folder / "reports" / item.report_name if self.output_folder else None
        try:
            report, model = self.pipeline.run(item.input, output=output)
        except ReentryScopeError as e:
            logger.warning("✗ Item %d (%s) failed: %s", item.index, item.input.value, e)
            return BatchResult(item, "error", error_kind=e.kind, message=str(e))
        except Exception as e:
            logger.exception("✗ Item %d (%s) crashed", item.index, item.input.value)
            return BatchResult(item, "error", error_kind="internal-error", message=str(e))

        return BatchResult(
            item,
            model.verdict,
            entry=model.entry,
            attack_types=sorted({f.attack_type for f in model.findings}),
            findings=len(model.findings),
            diagnostics=len(model.diagnostics),
            analysis_ms=model.timing.analysis_ms,
            report_path=output,
        )

    def run(self, items: List[BatchItem]) -> List[BatchResult]:
        logger.info("Running %d item(s) on %d worker(s)", len(items), self.jobs)
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            results = list(pool.map(self.run_item, items))

        if self.output_folder is not None:
            self.save_summary(results)
        return results

    # ========================================================================
    # SUMMARY
    # ========================================================================

    @staticmethod
    def summarize(results) -> dict:
        verdicts = Counter(r.verdict for r in results)
        attack_types = Counter(t for r in results for t in r.attack_types)
        timed = [r.analysis_ms for r in results if r.verdict != "error"]

        return {
            "items": len(results),
            "verdicts": {v: verdicts.get(v, 0) for v in ("attacker", "benign", "error")},
            "attack_types": dict(sorted(attack_types.items())),
            "mean_analysis_ms": round(sum(timed) / len(timed), 3) if timed else 0.0,
            "results": [
                {
                    "index": r.item.index,
                    "input": r.item.input.value,
                    "entry": r.entry,
                    "verdict": r.verdict,
                    "attack_types": r.attack_types,
                    "error": {"kind": r.error_kind, "message": r.message} if r.error_kind else None,
                    "report": r.report_path.name if r.report_path else None,
                }
                for r in results
            ],
        }

    def save_summary(self, results):
        self.output_folder.mkdir(parents=True, exist_ok=True)

        summary = self.summarize(results)
        json_path = self.output_folder / "summary.json"
        json_path.write_text(json.dumps(summary, indent=2) + "\n")

        df = pd.DataFrame([r.to_row() for r in results])
        if df.empty:
            df = pd.DataFrame(columns=["Index", "Input", "Entry", "Verdict", "Attack Types",
                                       "Findings", "Diagnostics", "Analysis ms", "Error"])
        total = {column: "" for column in df.columns}
        total.update({
            "Index": "Total",
            "Verdict": f"{summary['verdicts']['attacker']} attacker",
            "Findings": int(df["Findings"].sum()) if len(df) else 0,
            "Diagnostics": int(df["Diagnostics"].sum()) if len(df) else 0,
            "Analysis ms": summary["mean_analysis_ms"],
        })
        df = pd.concat([df, pd.DataFrame([total])], ignore_index=True)

        xlsx_path = self.output_folder / "summary.xlsx"
        with pd.ExcelWriter(xlsx_path, engine="openpyxl") as writer:
            df.to_excel(writer, sheet_name="Summary", index=False)
            ExcelFormatter().apply_standard_formatting(
                worksheet=writer.sheets["Summary"],
                dataframe=df,
                total_identifier="Total",
                bold_columns=["Verdict"],
            )

            counts = [{"Attack Type": t, "Attackers": n} for t, n in summary["attack_types"].items()]
            counts_df = pd.DataFrame(counts, columns=["Attack Type", "Attackers"])
            counts_df = pd.concat([counts_df, pd.DataFrame([{
                "Attack Type": "Total",
                "Attackers": summary["verdicts"]["attacker"],
            }])], ignore_index=True)
            counts_df.to_excel(writer, sheet_name="Attack Types", index=False)
            ExcelFormatter().apply_standard_formatting(
                worksheet=writer.sheets["Attack Types"],
                dataframe=counts_df,
                total_identifier="Total",
            )

        logger.info("✓ Summary saved: %s, %s", json_path, xlsx_path)
        return json_path, xlsx_path


def exit_code_for(results) -> int:
    if any(r.verdict == "attacker" for r in results):
        return EXIT_ATTACKER
    return EXIT_BENIGN
