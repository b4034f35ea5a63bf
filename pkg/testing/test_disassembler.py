import random

import cbor2
import pytest

from core.disassembler import Bytecode, BytecodeKind, disassemble, locate_runtime, strip_metadata
from core.errors import InputError
from testing.contract_assembler import assemble


def test_serialize_reproduces_corpus_bytecode(corpus_cases):
    for case in corpus_cases:
        for code in case.contracts.values():
            assert disassemble(Bytecode(code)).serialize() == code


def test_serialize_reproduces_random_bytes():
    rng = random.Random(1337)
    for _ in range(10000):
        data = rng.randbytes(rng.randrange(0, 2049))
        assert disassemble(data).serialize() == data


def test_serialize_reproduces_random_code_with_metadata():
    rng = random.Random(7331)
    for _ in range(500):
        trailer = cbor2.dumps({"ipfs": rng.randbytes(34), "solc": bytes([0, 8, rng.randrange(30)])})
        data = rng.randbytes(rng.randrange(0, 1990)) + trailer + len(trailer).to_bytes(2, "big")
        stream = disassemble(data)
        assert stream.trailer == data[-len(trailer) - 2:]
        assert stream.serialize() == data


def test_push_immediates_and_offsets():
    stream = disassemble(bytes.fromhex("6001610203005f"))
    assert [(ins.offset, ins.name, ins.push_value) for ins in stream] == [
        (0, "PUSH1", 1),
        (2, "PUSH2", 0x0203),
        (5, "STOP", None),
        (6, "PUSH0", 0),
    ]


def test_truncated_push_keeps_partial_immediate():
    stream = disassemble(bytes.fromhex("0061aa"))
    last = stream.instructions[-1]

    assert last.name == "PUSH2"
    assert last.truncated
    assert last.immediate == b"\xaa"
    assert last.push_value == 0xAA00
    assert [d.code for d in stream.diagnostics] == ["truncated-push"]


def test_unknown_byte_decodes_as_invalid():
    stream = disassemble(bytes([0x0C]))
    assert stream.instructions[0].name == "INVALID"
    assert stream.instructions[0].size == 1


def test_cbor_trailer_is_split_off():
    body = assemble("PUSH1 0x01 PUSH1 0x00 SSTORE STOP")
    blob = cbor2.dumps({"solc": b"\x00\x08\x13"})
    trailer = blob + len(blob).to_bytes(2, "big")

    stream = disassemble(Bytecode(body + trailer))

    assert stream.trailer == trailer
    assert [ins.name for ins in stream] == ["PUSH1", "PUSH1", "SSTORE", "STOP"]
    assert stream.serialize() == body + trailer


def test_tail_that_is_not_cbor_stays_code():
    code = Bytecode(bytes.fromhex("6001600055") + b"\x00\x03")
    stripped, trailer = strip_metadata(code)
    assert trailer == b""
    assert stripped == code


def test_locate_runtime_slices_constructor_tail():
    runtime = assemble("PUSH1 0x2a PUSH1 0x00 SSTORE STOP")
    constructor = assemble(f"PUSH1 {len(runtime)} DUP1 PUSH1 0x0b PUSH1 0x00 CODECOPY PUSH1 0x00 RETURN")
    assert len(constructor) == 0x0B

    located, diagnostics = locate_runtime(Bytecode(constructor + runtime, BytecodeKind.CREATION))

    assert located.data == runtime
    assert located.kind == BytecodeKind.RUNTIME
    assert diagnostics == []


def test_locate_runtime_without_tail_analyzes_whole_blob():
    code = Bytecode(assemble("PUSH1 0x01 PUSH1 0x00 SSTORE STOP"), BytecodeKind.CREATION)
    located, diagnostics = locate_runtime(code)

    assert located.data == code.data
    assert [d.code for d in diagnostics] == ["creation-unresolved"]


def test_runtime_code_is_returned_unchanged():
    code = Bytecode(b"\x60\x01")
    assert locate_runtime(code) == (code, [])


def test_from_hex_accepts_prefix_and_rejects_garbage():
    assert Bytecode.from_hex(" 0x6001\n").data == b"\x60\x01"
    with pytest.raises(InputError):
        Bytecode.from_hex("0xzz")


def test_from_file_reads_hex_text_and_binary(tmp_path):
    text_file = tmp_path / "code.hex"
    text_file.write_text("0x600160005500\n")
    binary_file = tmp_path / "code.bin"
    binary_file.write_bytes(b"\x60\x01\xff")

    assert Bytecode.from_file(text_file).data == bytes.fromhex("600160005500")
    assert Bytecode.from_file(binary_file).data == b"\x60\x01\xff"
    with pytest.raises(InputError):
        Bytecode.from_file(tmp_path / "missing.hex")
