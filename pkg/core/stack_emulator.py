"""
stack_emulator.py - Abstract execution of EVM blocks

Runs instructions over AbstractState (stack of AbstractValue plus a coarse memory
model) and explores block graphs, either as a joined worklist (CFG recovery) or
per acyclic path inside one function (call-site recovery).

Memory model:
    - one summary cell joins every stored value and answers MLOAD
    - the free-memory pointer word (0x40) is tracked exactly while it holds a constant
    - constant-offset writes are kept in a write log read only when decoding call
      input buffers and RETURN payloads
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Set, Tuple

from core import abstract_value as av
from core.abstract_value import TOP, ZERO, AbstractValue
from core.analysis_config import DEFAULT_CONFIG
from core.diagnostics import Diagnostic

logger = logging.getLogger(__name__)

FREE_MEMORY_POINTER = 0x40
REGION_WORDS = 16
REGION_LIMIT = av.ARG_BASE + av.ARG_STRIDE * REGION_WORDS


class StackUnderflow(Exception):
    def __init__(self, offset):
        super().__init__(f"stack underflow at 0x{offset:x}")
        self.offset = offset


@dataclass(frozen=True)
class AbstractState:
    stack: Tuple[AbstractValue, ...] = ()
    memory: Optional[AbstractValue] = None
    free_ptr: Optional[int] = None
    mem_log: Tuple[Tuple[int, AbstractValue], ...] = ()
    last_call: Optional[int] = None

    def peek(self, depth=0):
        """Stack item `depth` positions below the top (0 = top), Top when absent."""
        if depth < len(self.stack):
            return self.stack[-1 - depth]
        return TOP

    def memory_word(self, offset):
        """Logged word written at exactly `offset`, or None."""
        for key, value in self.mem_log:
            if key == offset:
                return value
        return None

    def load(self, offset: AbstractValue):
        if offset.is_const and offset.value == FREE_MEMORY_POINTER and self.free_ptr is not None:
            return av.const(self.free_ptr)
        return self.memory if self.memory is not None else ZERO

    def join(self, other):
        if self == other:
            return self

        height = max(len(self.stack), len(other.stack))
        left = (TOP,) * (height - len(self.stack)) + self.stack
        right = (TOP,) * (height - len(other.stack)) + other.stack

        if self.memory is None and other.memory is None:
            memory = None
        else:
            memory = (self.memory or ZERO).join(other.memory or ZERO)

        theirs = dict(other.mem_log)
        log = tuple(
            (key, value.join(theirs[key]))
            for key, value in self.mem_log if key in theirs
        )

        return AbstractState(
            stack=tuple(a.join(b) for a, b in zip(left, right)),
            memory=memory,
            free_ptr=self.free_ptr if self.free_ptr == other.free_ptr else None,
            mem_log=log,
            last_call=self.last_call if self.last_call == other.last_call else None,
        )

    def widen(self):
        return replace(self, stack=(TOP,) * len(self.stack), memory=TOP, mem_log=())


def join_states(states):
    result = None
    for state in states:
        result = state if result is None else result.join(state)
    return result


# ============================================================================
# CONSTANT FOLDING
# ============================================================================

def _signed(x):
    return x - (1 << 256) if x >> 255 else x


def _sdiv(a, b):
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    quotient = abs(sa) // abs(sb)
    return -quotient if (sa < 0) != (sb < 0) else quotient


def _smod(a, b):
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    remainder = abs(sa) % abs(sb)
    return -remainder if sa < 0 else remainder


def _signextend(size, x):
    if size >= 31:
        return x
    bit = size * 8 + 7
    mask = (1 << (bit + 1)) - 1
    return x | (av.WORD_MASK ^ mask) if (x >> bit) & 1 else x & mask


def _sar(shift, x):
    if shift >= 256:
        return av.WORD_MASK if x >> 255 else 0
    return _signed(x) >> shift


# operands are (top, second)
_BINARY_OPS: Dict[str, Callable[[int, int], int]] = {
    "ADD": lambda a, b: a + b,
    "MUL": lambda a, b: a * b,
    "SUB": lambda a, b: a - b,
    "DIV": lambda a, b: a // b if b else 0,
    "SDIV": _sdiv,
    "MOD": lambda a, b: a % b if b else 0,
    "SMOD": _smod,
    "EXP": lambda a, b: pow(a, b, 1 << 256),
    "SIGNEXTEND": _signextend,
    "LT": lambda a, b: int(a < b),
    "GT": lambda a, b: int(a > b),
    "SLT": lambda a, b: int(_signed(a) < _signed(b)),
    "SGT": lambda a, b: int(_signed(a) > _signed(b)),
    "EQ": lambda a, b: int(a == b),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "XOR": lambda a, b: a ^ b,
    "BYTE": lambda i, x: (x >> (248 - 8 * i)) & 0xFF if i < 32 else 0,
    "SHL": lambda s, x: x << s if s < 256 else 0,
    "SHR": lambda s, x: x >> s if s < 256 else 0,
    "SAR": _sar,
}

_TERNARY_OPS = {
    "ADDMOD": lambda a, b, n: (a + b) % n if n else 0,
    "MULMOD": lambda a, b, n: (a * b) % n if n else 0,
}

ONE = av.const(1)


def _is_low_mask(word):
    return word >= 0xFFFFFFFF and (word & (word + 1)) == 0


def fold_binary(name, a: AbstractValue, b: AbstractValue):
    if a.is_const and b.is_const:
        return av.const(_BINARY_OPS[name](a.value, b.value))

    if name == "AND":
        for mask, other in ((a, b), (b, a)):
            if mask.is_const and _is_low_mask(mask.value):
                return other
    if name in ("ADD", "OR", "XOR"):
        if a == ZERO:
            return b
        if b == ZERO:
            return a
    if name == "SUB" and b == ZERO:
        return a
    if name == "MUL":
        if a == ONE:
            return b
        if b == ONE:
            return a
    # selector extraction from the first calldata word
    if name == "SHR" and a.is_const and b.is_selector_word:
        return b
    if name == "DIV" and b.is_const and a.is_selector_word:
        return a

    return TOP


# ============================================================================
# MEMORY
# ============================================================================

def _invalidate(log, start, end):
    """
    Drop logged words overlapping byte range [start, end). A Const word whose tail
    is overwritten keeps its leading bytes (the selector in front of argument 0).
    """
    kept = {}
    for key, value in log.items():
        if key + 32 <= start or key >= end:
            kept[key] = value
        elif key < start and end >= key + 32 and value.is_const:
            tail_bits = 8 * (key + 32 - start)
            kept[key] = av.const(value.value >> tail_bits << tail_bits)
    return kept


def _region_offsets(size):
    limit = REGION_LIMIT if size is None else min(size, REGION_LIMIT)
    offsets = set(range(0, limit, av.ARG_STRIDE))
    offsets.update(av.ARG_BASE + av.ARG_STRIDE * k for k in range(REGION_WORDS))
    return sorted(o for o in offsets if o < limit)


def _join_memory(memory, value):
    return value if memory is None else memory.join(value)


def _write_region(state, dest, size, value_at):
    """Log a copied region starting at constant `dest`; value_at(relative offset) gives each word."""
    if not dest.is_const:
        return replace(state, mem_log=(), memory=_join_memory(state.memory, TOP))

    length = size.value if size.is_const else None
    span = REGION_LIMIT if length is None else length
    log = _invalidate(dict(state.mem_log), dest.value, dest.value + max(span, 1))
    for rel in _region_offsets(length):
        log[dest.value + rel] = value_at(rel)

    free_ptr = state.free_ptr
    if dest.value < FREE_MEMORY_POINTER + 32 and dest.value + span > FREE_MEMORY_POINTER:
        free_ptr = None

    return replace(state, mem_log=tuple(sorted(log.items())), free_ptr=free_ptr)


def _mstore(state, offset, value):
    memory = state.memory
    free_ptr = state.free_ptr

    if not offset.is_const:
        return replace(state, mem_log=(), memory=_join_memory(memory, value))

    where = offset.value
    log = _invalidate(dict(state.mem_log), where, where + 32)

    if where == FREE_MEMORY_POINTER:
        free_ptr = value.value if value.is_const else None
    else:
        log[where] = value
        memory = _join_memory(memory, value)
        if abs(where - FREE_MEMORY_POINTER) < 32:
            free_ptr = None

    return replace(state, mem_log=tuple(sorted(log.items())), memory=memory, free_ptr=free_ptr)


def _clobber(state, dest, size):
    """Unmodelled write (MSTORE8, CODECOPY, MCOPY, ...)."""
    memory = _join_memory(state.memory, TOP)
    if not dest.is_const:
        return replace(state, mem_log=(), memory=memory)

    end = dest.value + (size.value if size.is_const else REGION_LIMIT)
    log = _invalidate(dict(state.mem_log), dest.value, max(end, dest.value + 1))
    free_ptr = state.free_ptr
    if dest.value < FREE_MEMORY_POINTER + 32 and end > FREE_MEMORY_POINTER:
        free_ptr = None
    return replace(state, mem_log=tuple(sorted(log.items())), memory=memory, free_ptr=free_ptr)


# ============================================================================
# INSTRUCTION STEP
# ============================================================================

def _calldata_value(offset: AbstractValue):
    if offset.is_const:
        return av.calldata_at(offset.value)
    return TOP


def step(state: AbstractState, ins) -> AbstractState:
    """Execute one instruction abstractly. Raises StackUnderflow."""
    name = ins.name
    info = ins.info
    stack = state.stack

    if ins.is_push:
        return replace(state, stack=stack + (av.const(ins.push_value),))

    if name.startswith("DUP"):
        depth = info.pops
        if len(stack) < depth:
            raise StackUnderflow(ins.offset)
        return replace(state, stack=stack + (stack[-depth],))

    if name.startswith("SWAP"):
        depth = info.pops - 1
        if len(stack) <= depth:
            raise StackUnderflow(ins.offset)
        items = list(stack)
        items[-1], items[-1 - depth] = items[-1 - depth], items[-1]
        return replace(state, stack=tuple(items))

    pops = info.pops
    if len(stack) < pops:
        raise StackUnderflow(ins.offset)

    args = stack[len(stack) - pops:][::-1]
    rest = stack[:len(stack) - pops]
    base = replace(state, stack=rest)

    def push(*values):
        return replace(base, stack=rest + values)

    if name in _BINARY_OPS:
        return push(fold_binary(name, args[0], args[1]))
    if name in _TERNARY_OPS:
        if all(a.is_const for a in args):
            return push(av.const(_TERNARY_OPS[name](*(a.value for a in args))))
        return push(TOP)
    if name == "ISZERO":
        return push(av.const(int(args[0].value == 0)) if args[0].is_const else TOP)
    if name == "NOT":
        return push(av.const(av.WORD_MASK ^ args[0].value) if args[0].is_const else TOP)

    if name == "ADDRESS":
        return push(av.SELF)
    if name == "CALLER":
        return push(av.SENDER)
    if name == "PC":
        return push(av.const(ins.offset))
    if name == "CALLDATALOAD":
        return push(_calldata_value(args[0]))
    if name == "SLOAD":
        return push(av.storage_load(args[0].value) if args[0].is_const else TOP)
    if name == "MLOAD":
        return push(state.load(args[0]))

    if name == "MSTORE":
        return _mstore(base, args[0], args[1])
    if name == "CALLDATACOPY":
        src = args[1]
        return _write_region(
            base, args[0], args[2],
            lambda rel: av.calldata_at(src.value + rel) if src.is_const else TOP,
        )
    if name == "RETURNDATACOPY":
        if base.last_call is None:
            return _clobber(base, args[0], args[2])
        site_value = av.call_return(base.last_call)
        return _write_region(base, args[0], args[2], lambda rel: site_value)
    if name in ("MSTORE8",):
        return _clobber(base, args[0], av.const(1))
    if name in ("CODECOPY", "MCOPY"):
        return _clobber(base, args[0], args[2])
    if name == "EXTCODECOPY":
        return _clobber(base, args[1], args[3])

    if name in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"):
        out_offset, out_size = (args[5], args[6]) if name in ("CALL", "CALLCODE") else (args[4], args[5])
        site_value = av.call_return(ins.offset)
        after = replace(push(site_value), last_call=ins.offset)
        if out_size.is_const and out_size.value == 0:
            return after
        after = _write_region(after, out_offset, out_size, lambda rel: site_value)
        return replace(after, memory=_join_memory(after.memory, site_value))

    return push(*([TOP] * info.pushes))


def run_block(block, state, on_step=None):
    """
    Execute every instruction of a block.

    Returns (exit state, jump target value or None). on_step(ins, pre_state) is called
    before each instruction.
    """
    target = None
    for ins in block.instructions:
        if on_step is not None:
            on_step(ins, state)
        if ins.name in ("JUMP", "JUMPI"):
            target = state.peek(0) if state.stack else None
        state = step(state, ins)
    return state, target


# ============================================================================
# EXPLORATION
# ============================================================================

@dataclass
class ExplorationResult:
    entry_states: Dict[int, List[AbstractState]] = field(default_factory=dict)
    diagnostics: List[Diagnostic] = field(default_factory=list)
    steps: int = 0
    budget_exhausted: bool = False


def explore(cfg, entry_id, entry_state, distinct_cap=None, visit_cap=None,
            step_budget=None, on_step=None, on_transfer=None):
    """
    Joined worklist exploration from one block.

    Each block keeps up to `distinct_cap` distinct entry states; further arrivals are
    joined into one state that is re-run while it changes, and widened to Top after
    `visit_cap` changes. on_transfer(block, target, successors, status) reports every
    control transfer taken.
    """
    distinct_cap = distinct_cap or DEFAULT_CONFIG.distinct_states
    visit_cap = visit_cap or DEFAULT_CONFIG.visit_cap
    step_budget = step_budget or DEFAULT_CONFIG.step_budget

    result = ExplorationResult()
    seen: Dict[int, List[AbstractState]] = {entry_id: [entry_state]}
    joined: Dict[int, AbstractState] = {}
    changes = Counter()
    saturated: Set[int] = set()
    reported = set()

    worklist = deque([(entry_id, entry_state)])

    def admit(block_id, state):
        if block_id in saturated:
            return
        states = seen.setdefault(block_id, [])
        if state in states:
            return
        if len(states) < distinct_cap:
            states.append(state)
            worklist.append((block_id, state))
            return

        previous = joined.get(block_id) or join_states(states)
        merged = previous.join(state)
        if merged == previous and block_id in joined:
            return
        changes[block_id] += 1
        if changes[block_id] >= visit_cap:
            merged = merged.widen()
            saturated.add(block_id)
        joined[block_id] = merged
        worklist.append((block_id, merged))

    while worklist:
        if result.steps >= step_budget:
            result.budget_exhausted = True
            result.diagnostics.append(Diagnostic("path-cap-reached", f"step budget {step_budget} exhausted"))
            logger.warning("⚠ Exploration step budget exhausted at %d blocks", result.steps)
            break

        block_id, state = worklist.popleft()
        result.steps += 1
        block = cfg.blocks[block_id]

        try:
            out, target = run_block(block, state, on_step)
        except StackUnderflow as e:
            if e.offset not in reported:
                reported.add(e.offset)
                result.diagnostics.append(Diagnostic("infeasible-path", str(e)))
            continue

        successors, status = cfg.transfer(block, target)
        if on_transfer is not None:
            on_transfer(block, target, successors, status)
        for succ in successors:
            admit(succ, out)

    for block_id, states in seen.items():
        result.entry_states[block_id] = list(states) + ([joined[block_id]] if block_id in joined else [])

    return result


@dataclass
class EmulationResult:
    """Per-instruction abstract states collected while emulating one function."""

    snapshots: Dict[int, Set[AbstractState]] = field(default_factory=dict)
    paths: int = 0
    partial: bool = False
    fell_back: bool = False
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def states_at(self, offset):
        return self.snapshots.get(offset, set())

    def record(self, ins, state):
        self.snapshots.setdefault(ins.offset, set()).add(state)


class _PathCapReached(Exception):
    pass


def emulate_stack(cfg, entry_id, entry_state=None, config=None) -> EmulationResult:
    """
    Emulate a function from its entry block, one acyclic path at a time.

    A block may reappear on a path only with a new entry state, at most visit_cap
    times. Past path_cap paths (or the step budget) the function is re-emulated with
    joined block-level states instead.
    """
    config = config or DEFAULT_CONFIG
    entry_state = entry_state or AbstractState()
    result = EmulationResult()
    reported = set()
    steps = 0

    work = [(entry_id, entry_state, (), frozenset())]
    try:
        while work:
            block_id, state, counts, on_path = work.pop()
            steps += 1
            if steps > config.step_budget:
                raise _PathCapReached()

            block = cfg.blocks[block_id]
            try:
                out, target = run_block(block, state, result.record)
            except StackUnderflow as e:
                if e.offset not in reported:
                    reported.add(e.offset)
                    result.diagnostics.append(Diagnostic("infeasible-path", str(e)))
                continue

            successors, status = cfg.transfer(block, target)
            if status == "unresolved":
                result.partial = True

            count_map = dict(counts)
            count_map[block_id] = count_map.get(block_id, 0) + 1
            path = on_path | {(block_id, state)}
            next_counts = tuple(sorted(count_map.items()))

            branches = [
                (succ, out, next_counts, path)
                for succ in successors
                if (succ, out) not in path and count_map.get(succ, 0) < config.visit_cap
            ]
            if not branches:
                result.paths += 1
                if result.paths > config.path_cap:
                    raise _PathCapReached()
            work.extend(reversed(branches))

    except _PathCapReached:
        logger.debug("⚠ Path cap reached at block %d, falling back to joined states", entry_id)
        fallback = EmulationResult(fell_back=True, partial=result.partial, paths=result.paths)
        fallback.diagnostics.append(Diagnostic(
            "path-cap-reached", f"function at block {entry_id}: more than {config.path_cap} paths",
        ))

        def mark_unresolved(block, target, successors, status):
            if status == "unresolved":
                fallback.partial = True

        exploration = explore(
            cfg, entry_id, entry_state,
            distinct_cap=1, visit_cap=config.visit_cap, step_budget=config.step_budget,
            on_step=fallback.record, on_transfer=mark_unresolved,
        )
        fallback.diagnostics.extend(result.diagnostics + exploration.diagnostics)
        return fallback

    return result
