"""
cfg_builder.py - Basic blocks and jump edges

Partitions an instruction stream into basic blocks and resolves JUMP/JUMPI targets
by exploring the whole contract with the abstract stack emulator.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import networkx as nx

from core import opcodes
from core.analysis_config import DEFAULT_CONFIG
from core.diagnostics import Diagnostic
from core.stack_emulator import AbstractState, explore, join_states

logger = logging.getLogger(__name__)

HALTS = {"STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT", "JUMP"}


@dataclass
class BasicBlock:
    id: int
    start_offset: int
    instructions: list
    successors: List[int] = field(default_factory=list)
    unresolved: bool = False

    @property
    def last(self):
        return self.instructions[-1]

    @property
    def end_offset(self):
        return self.last.offset + self.last.size

    @property
    def names(self):
        return [ins.name for ins in self.instructions]

    def __len__(self):
        return len(self.instructions)


class CFG:
    """
    Control flow graph of one contract.

    entry_states maps a block id to the abstract states it was entered with during
    whole-contract exploration (blocks never reached are absent).
    """

    def __init__(self, stream, blocks):
        self.stream = stream
        self.blocks: List[BasicBlock] = blocks
        self.by_offset = {block.start_offset: block.id for block in blocks}
        self.jumpdests = {
            block.start_offset: block.id
            for block in blocks if block.instructions[0].name == "JUMPDEST"
        }
        self.entry_states: Dict[int, List[AbstractState]] = {}
        self.diagnostics: List[Diagnostic] = list(stream.diagnostics)

    def __len__(self):
        return len(self.blocks)

    def fallthrough(self, block) -> Optional[int]:
        if block.last.name in HALTS or block.id + 1 >= len(self.blocks):
            return None
        return block.id + 1

    def jump_target(self, value) -> Optional[int]:
        if value is None or not value.is_const:
            return None
        return self.jumpdests.get(value.value)

    def transfer(self, block, target):
        """
        Successor block ids for leaving `block` with jump target value `target`.

        Status is "ok", "terminal", "unresolved" (non-Const target) or "invalid"
        (Const target that is not a JUMPDEST).
        """
        name = block.last.name

        if name in ("JUMP", "JUMPI"):
            resolved = self.jump_target(target)
            if resolved is not None:
                status = "ok"
            elif target is not None and target.is_const:
                status = "invalid"
            else:
                status = "unresolved"

            successors = [resolved] if resolved is not None else []
            if name == "JUMPI":
                fall = self.fallthrough(block)
                if fall is not None and fall not in successors:
                    successors.append(fall)
            return successors, status

        fall = self.fallthrough(block)
        if fall is None:
            return [], "terminal"
        return [fall], "ok"

    def add_edge(self, src, dst):
        successors = self.blocks[src].successors
        if dst not in successors:
            successors.append(dst)
            successors.sort()

    def edges(self):
        return [(block.id, succ) for block in self.blocks for succ in block.successors]

    def entry_state(self, block_id):
        """Join of every state recorded at a block, or an empty state when never reached."""
        states = self.entry_states.get(block_id)
        return join_states(states) if states else AbstractState()

    @property
    def unresolved_jumps(self):
        return [block.id for block in self.blocks if block.unresolved]

    def to_networkx(self):
        graph = nx.DiGraph()
        for block in self.blocks:
            graph.add_node(block.id, start_offset=block.start_offset, unresolved=block.unresolved)
        graph.add_edges_from(self.edges())
        return graph


def partition_blocks(stream):
    blocks = []
    current = []

    def close():
        if current:
            blocks.append(BasicBlock(len(blocks), current[0].offset, list(current)))
            current.clear()

    for ins in stream:
        if ins.name == "JUMPDEST":
            close()
        current.append(ins)
        if ins.name in opcodes.TERMINATORS:
            close()
    close()

    return blocks


def _syntactic_target(cfg, block):
    """Target of a trailing `PUSH x; JUMP(I)` pair, when x is a JUMPDEST."""
    if len(block) < 2 or not block.instructions[-2].is_push:
        return None
    return cfg.jumpdests.get(block.instructions[-2].push_value)


def build_cfg(stream, config=None) -> CFG:
    """
    Recover basic blocks and jump edges.

    Reachable jumps are resolved from abstract stack states; a non-Const target is
    marked unresolved, never guessed. Blocks exploration never reaches get only their
    structural edges (fallthrough and a literal `PUSH; JUMP(I)` target).
    """
    config = config or DEFAULT_CONFIG
    cfg = CFG(stream, partition_blocks(stream))
    if not cfg.blocks:
        return cfg

    invalid = set()

    def on_transfer(block, target, successors, status):
        for succ in successors:
            cfg.add_edge(block.id, succ)
        if status == "unresolved":
            block.unresolved = True
        elif status == "invalid":
            invalid.add(block.id)

    exploration = explore(
        cfg, 0, AbstractState(),
        distinct_cap=config.distinct_states,
        visit_cap=config.visit_cap,
        step_budget=config.step_budget,
        on_transfer=on_transfer,
    )
    cfg.entry_states = exploration.entry_states
    cfg.diagnostics.extend(exploration.diagnostics)

    for block in cfg.blocks:
        if block.id in cfg.entry_states:
            continue
        target = _syntactic_target(cfg, block)
        if target is not None and block.last.name in ("JUMP", "JUMPI"):
            cfg.add_edge(block.id, target)
        fall = cfg.fallthrough(block)
        if fall is not None:
            cfg.add_edge(block.id, fall)

    for block_id in sorted(invalid):
        block = cfg.blocks[block_id]
        cfg.diagnostics.append(Diagnostic(
            "invalid-jump-target", f"block {block_id} at 0x{block.last.offset:x} jumps to a non-JUMPDEST",
        ))
    for block_id in cfg.unresolved_jumps:
        block = cfg.blocks[block_id]
        cfg.diagnostics.append(Diagnostic(
            "unresolved-jump", f"block {block_id} at 0x{block.last.offset:x}",
        ))

    if cfg.unresolved_jumps:
        logger.debug("⚠ %d unresolved jumps", len(cfg.unresolved_jumps))
    logger.debug("✓ CFG built: %d blocks, %d edges", len(cfg.blocks), len(cfg.edges()))

    return cfg
