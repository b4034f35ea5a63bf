"""
abstract_value.py - Flat value lattice used by the stack emulator

Every stack slot carries one AbstractValue recording where the word came from:
a constant, a storage slot, calldata, the status of an external call, the running
contract's own address, msg.sender, or nothing known (Top).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

WORD_MASK = (1 << 256) - 1
ADDRESS_MASK = (1 << 160) - 1

# ABI head words: argument k lives at calldata offset 4 + 32 * k
ARG_BASE = 4
ARG_STRIDE = 32


class ValueKind(str, Enum):
    CONST = "const"
    STORAGE = "storage"
    CALLDATA = "calldata"
    CALL_RETURN = "callret"
    SELF = "self"
    SENDER = "sender"
    TOP = "top"


@dataclass(frozen=True)
class AbstractValue:
    """
    kind:  lattice variant
    value: word for CONST, slot for STORAGE, call-site id for CALL_RETURN,
           argument index (or raw byte offset when raw=True) for CALLDATA
    """

    kind: ValueKind
    value: Optional[int] = None
    raw: bool = False

    @property
    def is_const(self):
        return self.kind == ValueKind.CONST

    @property
    def is_top(self):
        return self.kind == ValueKind.TOP

    @property
    def is_arg(self):
        return self.kind == ValueKind.CALLDATA and not self.raw

    @property
    def is_selector_word(self):
        """The raw first calldata word, or the selector derived from it."""
        return self.kind == ValueKind.CALLDATA and self.raw and self.value == 0

    def join(self, other):
        return self if self == other else TOP

    def to_dict(self):
        data = {"kind": self.kind.value}
        if self.kind == ValueKind.CONST:
            data["value"] = hex(self.value)
        elif self.kind == ValueKind.STORAGE:
            data["slot"] = hex(self.value)
        elif self.kind == ValueKind.CALLDATA:
            data["raw_offset" if self.raw else "arg"] = self.value
        elif self.kind == ValueKind.CALL_RETURN:
            data["site"] = self.value
        return data

    def __str__(self):
        if self.kind == ValueKind.CONST:
            return f"Const({self.value:#x})"
        if self.kind == ValueKind.STORAGE:
            return f"StorageLoad({self.value:#x})"
        if self.kind == ValueKind.CALLDATA:
            return f"CallData(raw {self.value})" if self.raw else f"CallData(arg {self.value})"
        if self.kind == ValueKind.CALL_RETURN:
            return f"CallReturn({self.value:#x})"
        return {ValueKind.SELF: "EnvSelf", ValueKind.SENDER: "EnvSender"}.get(self.kind, "Top")


TOP = AbstractValue(ValueKind.TOP)
SELF = AbstractValue(ValueKind.SELF)
SENDER = AbstractValue(ValueKind.SENDER)


def const(word):
    return AbstractValue(ValueKind.CONST, word & WORD_MASK)


ZERO = const(0)


def storage_load(slot):
    return AbstractValue(ValueKind.STORAGE, slot & WORD_MASK)


def call_return(site):
    return AbstractValue(ValueKind.CALL_RETURN, site)


def calldata_at(offset):
    """Value of CALLDATALOAD at a constant offset: a head argument, or a raw calldata word."""
    if offset >= ARG_BASE and (offset - ARG_BASE) % ARG_STRIDE == 0:
        return AbstractValue(ValueKind.CALLDATA, (offset - ARG_BASE) // ARG_STRIDE)
    return AbstractValue(ValueKind.CALLDATA, offset, raw=True)


def arg(index):
    return AbstractValue(ValueKind.CALLDATA, index)


def join_all(values: Iterable[AbstractValue]):
    """Join of a non-empty collection; an empty collection joins to Top."""
    result = None
    for value in values:
        result = value if result is None else result.join(value)
        if result.is_top:
            return TOP
    return TOP if result is None else result
