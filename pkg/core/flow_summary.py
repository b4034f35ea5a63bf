"""
flow_summary.py - External call sites and dataflow facts per public function

Reads the emulator's per-instruction states to recover every external call (callee
provenance, target selector, argument words) and the five intra-function flow facts:

    FuncArgToCallArg   function argument  -> call argument
    FuncArgToFuncRet   function argument  -> returned word
    FuncArgToCallee    function argument  -> callee address
    CallRetToCallArg   call result        -> call argument
    CallRetToFuncRet   call result        -> returned word

msg.sender is treated as the pseudo-argument SENDER.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, List, NamedTuple, Optional, Tuple

from core import abstract_value as av
from core.abstract_value import TOP, AbstractValue, ValueKind
from core.analysis_config import DEFAULT_CONFIG
from core.diagnostics import Diagnostic
from core.function_detector import FALLBACK, FORWARDED, format_selector
from core.hook_registry import HookClass, classify_hook
from core.stack_emulator import emulate_stack

logger = logging.getLogger(__name__)

SENDER = -1         # argument position of msg.sender
MAX_ARGS = 16
SELECTOR_SHIFT = 224

VALUE_CALLS = ("CALL", "CALLCODE")


class FactKind(str, Enum):
    FUNC_ARG_TO_CALL_ARG = "FuncArgToCallArg"
    FUNC_ARG_TO_FUNC_RET = "FuncArgToFuncRet"
    FUNC_ARG_TO_CALLEE = "FuncArgToCallee"
    CALL_RET_TO_CALL_ARG = "CallRetToCallArg"
    CALL_RET_TO_FUNC_RET = "CallRetToFuncRet"


class EndpointKind(str, Enum):
    ARG = "arg"
    CALLARG = "callarg"
    CALLEE = "callee"
    CALLRET = "callret"
    RET = "ret"


class Endpoint(NamedTuple):
    kind: EndpointKind
    site: Optional[int] = None
    position: Optional[int] = None

    def __str__(self):
        if self.kind == EndpointKind.ARG:
            return "arg(sender)" if self.position == SENDER else f"arg({self.position})"
        if self.kind == EndpointKind.RET:
            return f"ret({self.position})"
        if self.kind == EndpointKind.CALLARG:
            position = "sender" if self.position == SENDER else self.position
            return f"callarg(0x{self.site:x}, {position})"
        return f"{self.kind.value}(0x{self.site:x})"


_SOURCE_KIND = {
    FactKind.FUNC_ARG_TO_CALL_ARG: EndpointKind.ARG,
    FactKind.FUNC_ARG_TO_FUNC_RET: EndpointKind.ARG,
    FactKind.FUNC_ARG_TO_CALLEE: EndpointKind.ARG,
    FactKind.CALL_RET_TO_CALL_ARG: EndpointKind.CALLRET,
    FactKind.CALL_RET_TO_FUNC_RET: EndpointKind.CALLRET,
}


@dataclass(frozen=True, order=True)
class FlowFact:
    """
    kind:     one of the five flow rules
    source:   argument index (SENDER for msg.sender) or source call-site id
    site:     sink call-site id; None when the sink is a returned word
    position: argument position at the sink site, or returned word index;
              None when the sink is the callee slot
    """

    kind: FactKind
    source: int
    site: Optional[int] = None
    position: Optional[int] = None

    @property
    def source_endpoint(self):
        if _SOURCE_KIND[self.kind] == EndpointKind.ARG:
            return Endpoint(EndpointKind.ARG, None, self.source)
        return Endpoint(EndpointKind.CALLRET, self.source, None)

    @property
    def sink_endpoint(self):
        if self.kind in (FactKind.FUNC_ARG_TO_FUNC_RET, FactKind.CALL_RET_TO_FUNC_RET):
            return Endpoint(EndpointKind.RET, None, self.position)
        if self.kind == FactKind.FUNC_ARG_TO_CALLEE:
            return Endpoint(EndpointKind.CALLEE, self.site, None)
        return Endpoint(EndpointKind.CALLARG, self.site, self.position)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "from": str(self.source_endpoint),
            "to": str(self.sink_endpoint),
        }

    def __str__(self):
        return f"{self.kind.value}({self.source_endpoint} -> {self.sink_endpoint})"


@dataclass(frozen=True)
class CallSite:
    """
    id:              offset of the call instruction
    target_selector: 4-byte selector, FALLBACK for empty input, FORWARDED for a proxy
                     forwarding its own calldata, None when unknown
    sends_value:     True / False / None (unknown)
    """

    id: int
    host_function: int
    call_opcode: str
    callee: AbstractValue
    callee_variants: Tuple[AbstractValue, ...] = ()
    target_selector: Optional[int] = None
    arg_values: Tuple[AbstractValue, ...] = ()
    sends_value: Optional[bool] = None

    @property
    def is_static(self):
        return self.call_opcode == "STATICCALL"

    @property
    def is_delegate(self):
        return self.call_opcode in ("DELEGATECALL", "CALLCODE")

    def to_dict(self):
        return {
            "id": self.id,
            "opcode": self.call_opcode,
            "callee": self.callee.to_dict(),
            "target_selector": format_selector(self.target_selector),
            "args": [value.to_dict() for value in self.arg_values],
            "sends_value": self.sends_value,
        }


@dataclass
class FunctionSummary:
    selector: int
    call_sites: Tuple[CallSite, ...] = ()
    flow_facts: FrozenSet[FlowFact] = frozenset()
    is_hook: Optional[HookClass] = None
    arg_count: int = 0
    stored_args: FrozenSet[int] = frozenset()
    sender_checked: bool = False
    partial: bool = False
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def has_external_calls(self):
        return bool(self.call_sites)

    def site(self, site_id) -> Optional[CallSite]:
        for site in self.call_sites:
            if site.id == site_id:
                return site
        return None

    def dangling_facts(self):
        """Facts whose endpoints reference a call site missing from this summary."""
        ids = {site.id for site in self.call_sites}
        dangling = []
        for fact in self.flow_facts:
            for endpoint in (fact.source_endpoint, fact.sink_endpoint):
                if endpoint.site is not None and endpoint.site not in ids:
                    dangling.append(fact)
                    break
        return dangling

    def facts_from(self, endpoint):
        return sorted(fact for fact in self.flow_facts if fact.source_endpoint == endpoint)


# ============================================================================
# CALL DECODING
# ============================================================================

def _call_operands(name, state):
    """(callee, value, in_offset, in_size) from the pre-call stack."""
    if name in VALUE_CALLS:
        return state.peek(1), state.peek(2), state.peek(3), state.peek(4)
    return state.peek(1), None, state.peek(2), state.peek(3)


def _decode_selector(state, in_offset, in_size):
    if in_size.is_const and in_size.value == 0:
        return FALLBACK
    if not in_offset.is_const:
        return None
    if in_size.is_const and in_size.value < 4:
        return None

    word = state.memory_word(in_offset.value)
    if word is not None:
        if word.is_const:
            return word.value >> SELECTOR_SHIFT
        if word.is_selector_word:
            return FORWARDED

    # selector stored right-aligned in the word ending at in_offset + 4
    word = state.memory_word(in_offset.value - 28)
    if word is not None and word.is_const:
        return word.value & 0xFFFFFFFF
    return None


def _decode_args(state, in_offset, in_size):
    if not in_offset.is_const:
        return ()
    base = in_offset.value + av.ARG_BASE

    if in_size.is_const:
        count = min(max(in_size.value - av.ARG_BASE, 0) // av.ARG_STRIDE, MAX_ARGS)
        return tuple(
            state.memory_word(base + av.ARG_STRIDE * k) or TOP
            for k in range(count)
        )

    values = []
    for k in range(MAX_ARGS):
        word = state.memory_word(base + av.ARG_STRIDE * k)
        if word is None:
            break
        values.append(word)
    return tuple(values)


def _decode_return(state):
    offset, size = state.peek(0), state.peek(1)
    if not offset.is_const:
        return ()
    count = min(size.value // av.ARG_STRIDE, MAX_ARGS) if size.is_const else MAX_ARGS
    words = []
    for j in range(count):
        word = state.memory_word(offset.value + av.ARG_STRIDE * j)
        if word is None:
            if size.is_const:
                words.append(TOP)
                continue
            break
        words.append(word)
    return tuple(words)


def _sends_value(name, value):
    if name not in VALUE_CALLS:
        return False
    if value.is_const:
        return value.value != 0
    return None


def _join_options(values):
    values = set(values)
    return values.pop() if len(values) == 1 else None


def _join_positions(tuples):
    width = max((len(t) for t in tuples), default=0)
    return tuple(
        av.join_all(t[k] if k < len(t) else TOP for t in tuples)
        for k in range(width)
    )


def _variant_key(value):
    return (value.kind.value, value.value if value.value is not None else -1, value.raw)


# ============================================================================
# FACTS
# ============================================================================

def _arg_source(value):
    """Argument position a value comes from, SENDER for msg.sender, else None."""
    if value.is_arg:
        return value.value
    if value.kind == ValueKind.SENDER:
        return SENDER
    return None


def _facts_for_call(site_id, name, callee, args):
    facts = set()

    source = _arg_source(callee)
    if source is not None:
        facts.add(FlowFact(FactKind.FUNC_ARG_TO_CALLEE, source, site_id, None))

    for position, value in enumerate(args):
        source = _arg_source(value)
        if source is not None:
            facts.add(FlowFact(FactKind.FUNC_ARG_TO_CALL_ARG, source, site_id, position))
        elif value.kind == ValueKind.CALL_RETURN and value.value != site_id:
            facts.add(FlowFact(FactKind.CALL_RET_TO_CALL_ARG, value.value, site_id, position))

    if name == "DELEGATECALL":
        facts.add(FlowFact(FactKind.FUNC_ARG_TO_CALL_ARG, SENDER, site_id, SENDER))

    return facts


def _facts_for_return(words):
    facts = set()
    for position, value in enumerate(words):
        source = _arg_source(value)
        if source is not None:
            facts.add(FlowFact(FactKind.FUNC_ARG_TO_FUNC_RET, source, None, position))
        elif value.kind == ValueKind.CALL_RETURN:
            facts.add(FlowFact(FactKind.CALL_RET_TO_FUNC_RET, value.value, None, position))
    return facts


def summarize(function, cfg, emulation=None, registry=None, config=None) -> FunctionSummary:
    """
    Build the FunctionSummary of one public function.

    emulation defaults to emulate_stack from the function's entry block and entry state.
    """
    config = config or DEFAULT_CONFIG
    selector = function.selector
    summary = FunctionSummary(selector=selector, is_hook=classify_hook(selector, registry))

    if function.entry_block is None:
        return summary

    if emulation is None:
        emulation = emulate_stack(cfg, function.entry_block, function.entry_state, config)

    summary.diagnostics.extend(emulation.diagnostics)
    summary.partial = emulation.partial

    facts = set()
    stored = set()
    sites = []
    arg_count = 0
    sender_checked = False

    instructions = {ins.offset: ins for block in cfg.blocks for ins in block.instructions}

    for offset in sorted(emulation.snapshots):
        ins = instructions[offset]
        states = emulation.snapshots[offset]
        name = ins.name

        if name == "CALLDATALOAD":
            for state in states:
                value = av.calldata_at(state.peek(0).value) if state.peek(0).is_const else TOP
                if value.is_arg:
                    arg_count = max(arg_count, value.value + 1)

        elif name == "SSTORE":
            for state in states:
                if state.peek(1).is_arg:
                    stored.add(state.peek(1).value)

        elif name == "EQ":
            if any(av.SENDER in (state.peek(0), state.peek(1)) for state in states):
                sender_checked = True

        elif name == "RETURN":
            for state in states:
                facts |= _facts_for_return(_decode_return(state))

        elif name in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"):
            variants = set()
            selectors = []
            arg_tuples = []
            value_flags = []

            for state in states:
                callee, value, in_offset, in_size = _call_operands(name, state)
                args = _decode_args(state, in_offset, in_size)
                variants.add(callee)
                selectors.append(_decode_selector(state, in_offset, in_size))
                arg_tuples.append(args)
                value_flags.append(_sends_value(name, value) if value is not None else False)
                facts |= _facts_for_call(offset, name, callee, args)
                if callee == av.SENDER:
                    sender_checked = True

            ordered = sorted(variants, key=_variant_key)
            if len(ordered) > config.fanout_cap:
                summary.diagnostics.append(Diagnostic(
                    "fanout-capped", f"call 0x{offset:x}: {len(ordered)} callee variants",
                ))
                ordered = ordered[:config.fanout_cap]

            sites.append(CallSite(
                id=offset,
                host_function=selector,
                call_opcode=name,
                callee=av.join_all(variants),
                callee_variants=tuple(ordered),
                target_selector=_join_options(selectors),
                arg_values=_join_positions(arg_tuples),
                sends_value=_join_options(value_flags),
            ))

    summary.call_sites = tuple(sites)
    summary.flow_facts = frozenset(facts)
    summary.stored_args = frozenset(stored)
    summary.arg_count = arg_count
    summary.sender_checked = sender_checked

    dangling = summary.dangling_facts()
    if dangling:
        summary.flow_facts = frozenset(f for f in facts if f not in dangling)
        for fact in sorted(dangling):
            summary.diagnostics.append(Diagnostic("fact-dangling-endpoint", str(fact)))

    if summary.partial:
        summary.diagnostics.append(Diagnostic(
            "partial-summary", f"{format_selector(selector)} has unresolved control flow",
        ))

    logger.debug(
        "✓ Summarized %s: %d call sites, %d facts",
        format_selector(selector), len(summary.call_sites), len(summary.flow_facts),
    )
    return summary
