import pytest

from core.cfg_builder import build_cfg
from core.disassembler import disassemble
from core.function_detector import (
    FALLBACK,
    FORWARDED,
    format_selector,
    identify_functions,
    match_selector_compare,
    parse_selector,
)
from testing.contract_assembler import ContractBuilder, assemble
from testing.fixture_corpus import ON_ERC1155_RECEIVED, TOKENS_RECEIVED


def table_of(code):
    return identify_functions(build_cfg(disassemble(code)), "0xtest")


def test_dispatcher_lists_selectors_and_fallback():
    code = (
        ContractBuilder()
        .function(ON_ERC1155_RECEIVED, "STOP")
        .function(TOKENS_RECEIVED, "STOP")
        .fallback("STOP")
        .build()
    )
    table = table_of(code)

    assert table.dispatcher_found
    assert table.selectors == [FALLBACK, 0x0023DE29, 0xF23A6E61]
    assert table.diagnostics == []


def test_each_selector_enters_its_own_body():
    code = ContractBuilder().function(0x11111111, "STOP").function(0x22222222, "STOP").build()
    table = table_of(code)

    entries = {entry.selector: entry.entry_block for entry in table}
    assert len(set(entries.values())) == 3
    assert all(block is not None for block in entries.values())


def test_code_without_dispatcher_is_all_fallback():
    table = table_of(ContractBuilder(dispatcher=False).fallback("PUSH1 0x01 PUSH1 0x00 SSTORE").build())

    assert not table.dispatcher_found
    assert table.selectors == [FALLBACK]
    assert table.get(FALLBACK).entry_block == 0
    assert [d.code for d in table.diagnostics] == ["no-dispatcher"]


def test_empty_code_has_only_a_bodiless_fallback():
    table = table_of(b"")

    assert table.selectors == [FALLBACK]
    assert table.get(FALLBACK).entry_block is None


def test_route_falls_back_for_unknown_selectors():
    table = table_of(ContractBuilder().function(0x11111111, "STOP").fallback("STOP").build())

    assert table.route(0x11111111).selector == 0x11111111
    assert table.route(0x99999999).selector == FALLBACK
    assert 0x99999999 not in table


def test_non_payable_guard_is_recognized():
    guarded = "CALLVALUE DUP1 ISZERO @paid_ok JUMPI PUSH1 0x00 DUP1 REVERT :paid_ok STOP"
    table = table_of(ContractBuilder().function(0x11111111, guarded).function(0x22222222, "STOP").build())

    assert table.get(0x11111111).payable is False
    assert table.get(0x22222222).payable is None


def test_compare_with_selector_below_the_word():
    cfg = build_cfg(disassemble(assemble("PUSH4 0xdeadbeef DUP2 EQ PUSH2 0x0010 JUMPI")))
    assert match_selector_compare(cfg.blocks[0]) == (0xDEADBEEF, 0x10)


@pytest.mark.parametrize("selector, text", [
    (FALLBACK, "fallback"),
    (FORWARDED, "forwarded"),
    (None, "unknown"),
    (0x0023DE29, "0x0023de29"),
])
def test_selector_text(selector, text):
    assert format_selector(selector) == text
    assert parse_selector(text) == selector
