"""
disassembler.py - Raw EVM bytecode to instruction stream

Handles hex/binary loading, the trailing CBOR metadata blob, PUSH immediates
(including a truncated final PUSH) and the runtime slice of creation bytecode.
"""

import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import cbor2

from core import opcodes
from core.diagnostics import Diagnostic
from core.errors import InputError

logger = logging.getLogger(__name__)


class BytecodeKind(str, Enum):
    RUNTIME = "runtime"
    CREATION = "creation"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Bytecode:
    data: bytes = b""
    kind: BytecodeKind = BytecodeKind.RUNTIME

    def __len__(self):
        return len(self.data)

    @classmethod
    def from_hex(cls, text, kind=BytecodeKind.RUNTIME):
        cleaned = text.strip()
        if cleaned[:2].lower() == "0x":
            cleaned = cleaned[2:]
        try:
            return cls(bytes.fromhex(cleaned), kind)
        except ValueError as e:
            raise InputError(f"Invalid hex bytecode: {e}") from e

    @classmethod
    def from_file(cls, path, kind=BytecodeKind.RUNTIME):
        """Read a hex text file, or raw binary when the content is not hex text."""
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise InputError(f"Cannot read bytecode file {path}: {e}") from e

        try:
            text = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            return cls(raw, kind)

        if text[:2].lower() == "0x":
            text = text[2:]
        try:
            return cls(bytes.fromhex(text), kind)
        except ValueError:
            return cls(raw, kind)


@dataclass(frozen=True)
class Instruction:
    offset: int
    opcode: int
    name: str
    immediate: Optional[bytes] = None
    truncated: bool = False

    @property
    def size(self):
        return 1 + (len(self.immediate) if self.immediate is not None else 0)

    @property
    def is_push(self):
        return self.immediate is not None or self.name == "PUSH0"

    @property
    def push_value(self):
        """Integer operand of a PUSH; a truncated immediate is read as zero-padded on the right."""
        if self.name == "PUSH0":
            return 0
        if self.immediate is None:
            return None
        width = opcodes.push_width(self.opcode)
        return int.from_bytes(self.immediate.ljust(width, b"\x00"), "big")

    @property
    def info(self):
        return opcodes.lookup(self.opcode)

    def __str__(self):
        text = f"{self.offset:04x}  {self.name}"
        if self.immediate is not None:
            text += " 0x" + self.immediate.hex()
        return text


@dataclass
class InstructionStream:
    instructions: List[Instruction] = field(default_factory=list)
    trailer: bytes = b""
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def serialize(self):
        """Re-emit the exact bytes this stream was decoded from, trailer included."""
        parts = []
        for ins in self.instructions:
            parts.append(bytes([ins.opcode]))
            if ins.immediate is not None:
                parts.append(ins.immediate)
        parts.append(self.trailer)
        return b"".join(parts)


def _is_cbor_map(blob):
    # major type 5 = map
    if not blob or blob[0] >> 5 != 5:
        return False

    buffer = io.BytesIO(blob)
    try:
        value = cbor2.CBORDecoder(buffer).decode()
    except Exception:
        return False

    return isinstance(value, dict) and buffer.tell() == len(blob)


def strip_metadata(code: Bytecode) -> Tuple[Bytecode, bytes]:
    """
    Split off a length-suffixed CBOR metadata trailer.

    Returns (code without trailer, trailer) where the trailer is blob + 2 length bytes,
    or (code, b"") when the tail is not a well-formed trailer.
    """
    data = code.data
    if len(data) < 3:
        return code, b""

    length = int.from_bytes(data[-2:], "big")
    if length == 0 or length + 2 > len(data):
        return code, b""

    split = len(data) - length - 2
    if not _is_cbor_map(data[split:-2]):
        return code, b""

    return Bytecode(data[:split], code.kind), data[split:]


def disassemble(code) -> InstructionStream:
    """
    Decode bytecode into an instruction stream.

    Accepts a Bytecode or plain bytes. Unknown bytes decode as one-byte INVALID
    instructions; a PUSH running past the end keeps its partial immediate and adds a
    "truncated-push" diagnostic.
    """
    if not isinstance(code, Bytecode):
        code = Bytecode(bytes(code))

    body, trailer = strip_metadata(code)
    data = body.data
    stream = InstructionStream(trailer=trailer)

    offset = 0
    while offset < len(data):
        byte = data[offset]
        info = opcodes.lookup(byte)
        name = info.name if byte in opcodes.OPCODES else "INVALID"
        width = opcodes.push_width(byte)

        if width:
            immediate = data[offset + 1: offset + 1 + width]
            truncated = len(immediate) < width
            if truncated:
                stream.diagnostics.append(Diagnostic(
                    "truncated-push",
                    f"{name} at 0x{offset:x} has {len(immediate)} of {width} immediate bytes",
                ))
            stream.instructions.append(Instruction(offset, byte, name, immediate, truncated))
            offset += 1 + len(immediate)
        else:
            stream.instructions.append(Instruction(offset, byte, name))
            offset += 1

    return stream


def locate_runtime(code: Bytecode) -> Tuple[Bytecode, List[Diagnostic]]:
    """
    Return the runtime segment of creation bytecode.

    Looks for the constructor tail CODECOPY(dest, offset, size) ... RETURN with constant
    offset/size. Runtime and unknown-kind code is returned unchanged. When no tail is
    found, the whole blob is analyzed and a "creation-unresolved" diagnostic is returned.
    """
    if code.kind != BytecodeKind.CREATION:
        return code, []

    stack = []
    candidate = None

    def pop():
        return stack.pop() if stack else None

    for ins in disassemble(code):
        info = ins.info

        if ins.is_push:
            stack.append(ins.push_value)
        elif ins.name.startswith("DUP"):
            depth = info.pops
            stack.append(stack[-depth] if len(stack) >= depth else None)
        elif ins.name.startswith("SWAP"):
            depth = info.pops - 1
            if len(stack) > depth:
                stack[-1], stack[-1 - depth] = stack[-1 - depth], stack[-1]
        elif ins.name == "CODECOPY":
            _, src, size = pop(), pop(), pop()
            if isinstance(src, int) and isinstance(size, int) and size > 0 and src + size <= len(code):
                candidate = (src, size)
        elif ins.name == "RETURN" and candidate:
            src, size = candidate
            logger.debug("✓ Runtime segment located at 0x%x (+%d bytes)", src, size)
            return Bytecode(code.data[src:src + size], BytecodeKind.RUNTIME), []
        else:
            for _ in range(info.pops):
                pop()
            stack.extend([None] * info.pushes)

    logger.warning("⚠ Creation bytecode without a CODECOPY/RETURN tail, analyzing whole blob")
    return (
        Bytecode(code.data, BytecodeKind.RUNTIME),
        [Diagnostic("creation-unresolved", "no CODECOPY/RETURN tail in constructor")],
    )
