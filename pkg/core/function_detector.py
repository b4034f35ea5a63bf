"""
function_detector.py - Public function table from the selector dispatcher

Recognizes the standard dispatcher (selector load from calldata word 0 followed by
4-byte compare + JUMPI blocks) and records one entry per selector plus the
dispatcher's default path as FALLBACK.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

from core import opcodes
from core.diagnostics import Diagnostic
from core.stack_emulator import AbstractState

logger = logging.getLogger(__name__)

FALLBACK = -1
FORWARDED = -2     # call forwards the caller's own selector (proxy)

DISPATCHER_OPS = {
    "POP", "EQ", "LT", "GT", "ISZERO", "SHR", "DIV", "AND",
    "CALLDATALOAD", "CALLDATASIZE", "CALLVALUE", "MSTORE", "JUMPI", "JUMPDEST",
}


def format_selector(selector):
    if selector == FALLBACK:
        return "fallback"
    if selector == FORWARDED:
        return "forwarded"
    if selector is None:
        return "unknown"
    return f"0x{selector:08x}"


def parse_selector(text):
    """Inverse of format_selector for report payloads."""
    if text == "fallback":
        return FALLBACK
    if text == "forwarded":
        return FORWARDED
    if text == "unknown":
        return None
    return int(text, 16)


@dataclass
class FunctionEntry:
    selector: int
    entry_block: Optional[int]
    payable: Optional[bool] = None
    entry_state: AbstractState = field(default_factory=AbstractState)

    @property
    def label(self):
        return format_selector(self.selector)


@dataclass
class FunctionTable:
    contract: Optional[str] = None
    functions: List[FunctionEntry] = field(default_factory=list)
    dispatcher_found: bool = False
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    def __contains__(self, selector):
        return any(entry.selector == selector for entry in self.functions)

    @property
    def selectors(self):
        return [entry.selector for entry in self.functions]

    def get(self, selector) -> Optional[FunctionEntry]:
        for entry in self.functions:
            if entry.selector == selector:
                return entry
        return None

    def route(self, selector) -> Optional[FunctionEntry]:
        """Function that runs when `selector` is called: exact match, else FALLBACK."""
        return self.get(selector) or self.get(FALLBACK)


def _is_dispatcher_like(block):
    for ins in block.instructions:
        name = ins.name
        if ins.is_push or name.startswith("DUP") or name.startswith("SWAP"):
            continue
        if name not in DISPATCHER_OPS:
            return False
    return True


def _selector_push(ins):
    if ins.is_push and 1 <= opcodes.push_width(ins.opcode) <= 4:
        return ins.push_value
    return None


def match_selector_compare(block):
    """
    (selector, target offset) for a block ending in a selector compare:
        [DUP1] PUSH4 sel EQ PUSHn tgt JUMPI
        PUSH4 sel DUP2 EQ PUSHn tgt JUMPI
    """
    ins = block.instructions
    if len(ins) < 4 or ins[-1].name != "JUMPI" or not ins[-2].is_push or ins[-3].name != "EQ":
        return None

    selector = _selector_push(ins[-4])
    if selector is None and ins[-4].name == "DUP2" and len(ins) >= 5:
        selector = _selector_push(ins[-5])
    if selector is None:
        return None

    return selector, ins[-2].push_value


def _loads_selector(block):
    ins = block.instructions
    for i in range(1, len(ins)):
        if ins[i].name == "CALLDATALOAD" and ins[i - 1].is_push and ins[i - 1].push_value == 0:
            return True
    return False


def _payable_flag(cfg, block_id):
    names = [name for name in cfg.blocks[block_id].names if name != "JUMPDEST"]
    if names[:3] == ["CALLVALUE", "DUP1", "ISZERO"]:
        return False
    return None


def identify_functions(cfg, contract=None) -> FunctionTable:
    table = FunctionTable(contract=contract)

    if not cfg.blocks:
        table.functions.append(FunctionEntry(FALLBACK, None))
        table.diagnostics.append(Diagnostic("no-dispatcher", "empty code", contract))
        return table

    compares = []
    selector_targets = set()
    dispatcher_blocks = []
    candidates = []
    seen = set()

    queue = deque([0])
    while queue:
        block_id = queue.popleft()
        if block_id in seen:
            continue
        seen.add(block_id)

        block = cfg.blocks[block_id]
        if not _is_dispatcher_like(block):
            candidates.append(block_id)
            continue
        dispatcher_blocks.append(block_id)

        match = match_selector_compare(block)
        target = None
        if match is not None:
            target = cfg.jumpdests.get(match[1])
            if target is not None:
                compares.append((block_id, match[0], target))
                selector_targets.add(target)

        for succ in block.successors:
            if succ != target:
                queue.append(succ)

    has_load = any(_loads_selector(cfg.blocks[b]) for b in dispatcher_blocks)

    if not compares or not has_load:
        logger.debug("⚠ No dispatcher found, rooting FALLBACK at block 0")
        table.functions.append(FunctionEntry(FALLBACK, 0, _payable_flag(cfg, 0), cfg.entry_state(0)))
        table.diagnostics.append(Diagnostic("no-dispatcher", "no selector compare chain", contract))
        return table

    table.dispatcher_found = True

    last_compare = max(compares, key=lambda c: cfg.blocks[c[0]].start_offset)[0]
    fall = cfg.fallthrough(cfg.blocks[last_compare])
    default = None
    if fall is not None and fall not in selector_targets and not _is_dispatcher_like(cfg.blocks[fall]):
        default = fall
    else:
        remaining = [c for c in candidates if c not in selector_targets]
        default = remaining[0] if remaining else None

    if default is not None:
        table.functions.append(FunctionEntry(FALLBACK, default, _payable_flag(cfg, default), cfg.entry_state(default)))

    for _, selector, target in compares:
        if selector in table:
            continue
        table.functions.append(FunctionEntry(selector, target, _payable_flag(cfg, target), cfg.entry_state(target)))

    table.functions.sort(key=lambda entry: entry.selector)
    logger.debug("✓ Dispatcher: %d functions", len(table.functions))
    return table
