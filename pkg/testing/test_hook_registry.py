import pytest

from core.errors import HookRegistryError
from core.function_detector import FALLBACK
from core.hook_registry import (
    BUILTIN_HOOKS,
    PROTOCOL_CALLBACKS,
    HookEntry,
    HookKind,
    HookRegistry,
    describe,
    selector_of,
)
from engine.detector import AttackType, classify_attack_type


@pytest.mark.parametrize("signature, selector", [
    ("transferFrom(address,address,uint256)", 0x23B872DD),
    ("onERC721Received(address,address,uint256,bytes)", 0x150B7A02),
    ("onERC1155Received(address,address,uint256,uint256,bytes)", 0xF23A6E61),
    ("onERC1155BatchReceived(address,address,uint256[],uint256[],bytes)", 0xBC197C81),
    ("tokensReceived(address,address,address,uint256,bytes,bytes)", 0x0023DE29),
    ("tokensToSend(address,address,address,uint256,bytes,bytes)", 0x75AB9782),
])
def test_builtin_selectors_match_their_signatures(signature, selector):
    assert selector_of(signature) == selector
    assert HookRegistry().is_eip_hook(selector)


def test_classification():
    registry = HookRegistry()

    assert registry.classify(FALLBACK).kind == HookKind.FALLBACK
    known = registry.classify(0x150B7A02)
    assert (known.kind, known.name) == (HookKind.KNOWN_EIP_HOOK, "onERC721Received")
    protocol = registry.classify(0x10D1E85C)
    assert (protocol.kind, protocol.name) == (HookKind.CANDIDATE, "uniswapV2Call")
    assert registry.classify(0x12345678).name is None


def test_describe():
    assert describe(0x150B7A02) == "0x150b7a02 (onERC721Received)"
    assert describe(0x12345678) == "0x12345678"


def test_file_rows_by_selector_and_by_signature(tmp_path):
    path = tmp_path / "hooks.csv"
    path.write_text(
        "# selector, name, kind[, provenance]\n"
        "0x12345678, myHook, eip\n"
        "\"onFlashLoan(address,address,uint256,uint256,bytes)\", onFlashLoan, protocol, audit note\n"
    )

    registry = HookRegistry.from_file(path)

    assert len(registry) == len(BUILTIN_HOOKS) + 1
    assert registry.is_eip_hook(0x12345678)
    assert registry.get(0x12345678).provenance == "registry file"
    flash = registry.get(0x23E30C8B)
    assert (flash.name, flash.kind, flash.provenance) == ("onFlashLoan", "protocol", "audit note")
    assert 0x23E30C8B not in registry


def test_file_without_builtins(tmp_path):
    path = tmp_path / "hooks.csv"
    path.write_text("0x12345678, myHook, EIP\n")

    registry = HookRegistry.from_file(path, include_builtin=False)

    assert len(registry) == 1
    assert registry.get(0x12345678).kind == "eip"


def test_empty_file_keeps_builtins(tmp_path):
    path = tmp_path / "hooks.csv"
    path.write_text("")

    assert len(HookRegistry.from_file(path)) == len(BUILTIN_HOOKS)


@pytest.mark.parametrize("row", [
    "0x12345678, myHook, weird\n",
    "0x12345678, myHook\n",
    "0x1234567890, wide, eip\n",
    "0xnothex, bad, eip\n",
])
def test_malformed_rows_raise(tmp_path, row):
    path = tmp_path / "hooks.csv"
    path.write_text(row)

    with pytest.raises(HookRegistryError):
        HookRegistry.from_file(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(HookRegistryError):
        HookRegistry.from_file(tmp_path / "absent.csv")


def test_unknown_kind_rejected_on_add():
    with pytest.raises(HookRegistryError):
        HookRegistry(entries=[HookEntry(0x1, "x", "custom")])


def test_protocol_callbacks_are_named_but_not_hooks():
    registry = HookRegistry()

    assert {entry.selector for entry in PROTOCOL_CALLBACKS} == {0x10D1E85C, 0x23E30C8B}
    assert 0x23E30C8B not in registry
    assert describe(0x23E30C8B) == "0x23e30c8b (onFlashLoan)"
    assert classify_attack_type(0x23E30C8B, registry) == AttackType.USER_DEFINED


def test_registering_a_selector_makes_it_an_erc_hook(tmp_path):
    path = tmp_path / "hooks.csv"
    path.write_text("0x23e30c8b, onFlashLoan, eip\n")

    registry = HookRegistry.from_file(path)

    assert 0x23E30C8B in registry
    assert registry.classify(0x23E30C8B).kind == HookKind.KNOWN_EIP_HOOK
    assert classify_attack_type(0x23E30C8B, registry) == AttackType.ERC_HOOK


def test_registry_without_entries_is_still_used():
    registry = HookRegistry(entries=[], callbacks=[])

    assert classify_attack_type(0x150B7A02, registry) == AttackType.USER_DEFINED
