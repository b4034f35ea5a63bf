"""
hook_registry.py - Hook Function Configuration Definitions

Selectors of functions that token standards call back on a counterparty contract.
Protocol callbacks (flash loans, pair swaps) are kept beside the hooks for naming
only; they classify as user-defined interfaces. Extensible from a registry file:

    # selector, name, kind[, provenance]
    0x150b7a02, onERC721Received, eip
    "onFlashLoan(address,address,uint256,uint256,bytes)", onFlashLoan, protocol

A first field that is not a 0x selector is hashed as a signature (quote it when it
contains commas).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import pandas as pd
from eth_hash.auto import keccak

from core.errors import HookRegistryError
from core.function_detector import FALLBACK, format_selector

logger = logging.getLogger(__name__)

HOOK_KINDS = ("eip", "protocol")


def selector_of(signature):
    """First 4 bytes of keccak-256 of a canonical signature, as an int."""
    return int.from_bytes(keccak(signature.encode("ascii"))[:4], "big")


class HookKind(str, Enum):
    KNOWN_EIP_HOOK = "KnownEIPHook"
    FALLBACK = "Fallback"
    CANDIDATE = "Candidate"


@dataclass(frozen=True)
class HookEntry:
    selector: int
    name: str
    kind: str = "eip"
    provenance: str = ""


@dataclass(frozen=True)
class HookClass:
    kind: HookKind
    name: Optional[str] = None

    def to_dict(self):
        return {"kind": self.kind.value, "name": self.name}


# ============================================================================
# BUILT-IN HOOKS
# ============================================================================

BUILTIN_HOOKS = [
    HookEntry(0x01C6ADC3, "transferFrom", "eip", "hook table, as listed"),
    HookEntry(0x23B872DD, "transferFrom", "eip", "keccak(transferFrom(address,address,uint256))"),
    HookEntry(0x150B7A02, "onERC721Received", "eip", "EIP-721"),
    HookEntry(0xF23A6E61, "onERC1155Received", "eip", "EIP-1155"),
    HookEntry(0xBC197C81, "onERC1155BatchReceived", "eip", "EIP-1155"),
    HookEntry(0x75AB9782, "tokensToSend", "eip", "EIP-777"),
    HookEntry(0x0023DE29, "tokensReceived", "eip", "EIP-777"),
    HookEntry(0x249CB3FA, "canImplementInterfaceForAddress", "eip", "EIP-1820"),
]

# seen in attacker contracts
PROTOCOL_CALLBACKS = [
    HookEntry(selector_of(signature), signature.split("(")[0], "protocol", signature)
    for signature in (
        "uniswapV2Call(address,uint256,uint256,bytes)",
        "onFlashLoan(address,address,uint256,uint256,bytes)",
    )
]


class HookRegistry:
    """
    Selector → HookEntry lookup used by classify_hook and the detector.
    `entries` are the hooks; `callbacks` only name protocol callbacks.
    """

    def __init__(self, entries=None, callbacks=None):
        self.entries: Dict[int, HookEntry] = {}
        self.callbacks: Dict[int, HookEntry] = {}
        for entry in BUILTIN_HOOKS if entries is None else entries:
            self.add(entry)
        for entry in PROTOCOL_CALLBACKS if callbacks is None else callbacks:
            self.add(entry)

    def add(self, entry: HookEntry):
        if entry.kind not in HOOK_KINDS:
            raise HookRegistryError(f"Unknown hook kind '{entry.kind}' for {entry.name}")
        table, other = (self.entries, self.callbacks) if entry.kind == "eip" else (self.callbacks, self.entries)
        other.pop(entry.selector, None)
        table[entry.selector] = entry

    def get(self, selector) -> Optional[HookEntry]:
        return self.entries.get(selector) or self.callbacks.get(selector)

    def __contains__(self, selector):
        return selector in self.entries

    def __len__(self):
        return len(self.entries)

    def is_eip_hook(self, selector):
        return selector in self.entries

    def name_of(self, selector):
        entry = self.get(selector)
        return entry.name if entry else None

    def classify(self, selector) -> HookClass:
        if selector == FALLBACK:
            return HookClass(HookKind.FALLBACK)
        if selector in self.entries:
            return HookClass(HookKind.KNOWN_EIP_HOOK, self.entries[selector].name)
        return HookClass(HookKind.CANDIDATE, self.name_of(selector))

    @classmethod
    def from_file(cls, path, include_builtin=True):
        """Load a registry file; built-in hooks stay unless include_builtin is False."""
        registry = cls() if include_builtin else cls(entries=[], callbacks=[])

        try:
            df = pd.read_csv(
                path,
                header=None,
                names=["selector", "name", "kind", "provenance"],
                comment="#",
                skipinitialspace=True,
                dtype=str,
                keep_default_na=False,
            )
        except pd.errors.EmptyDataError:
            logger.warning("⚠ Hook registry %s is empty", path)
            return registry
        except (OSError, pd.errors.ParserError) as e:
            raise HookRegistryError(f"Cannot read hook registry {path}: {e}") from e

        df = df.fillna("")
        for row_number, row in enumerate(df.itertuples(index=False), start=1):
            key = row.selector.strip()
            name = row.name.strip()
            kind = row.kind.strip().lower()
            if not key or not name or not kind:
                raise HookRegistryError(f"{path} row {row_number}: expected 'selector, name, kind'")

            if key.lower().startswith("0x"):
                try:
                    selector = int(key, 16)
                except ValueError as e:
                    raise HookRegistryError(f"{path} row {row_number}: bad selector '{key}'") from e
                if selector >> 32:
                    raise HookRegistryError(f"{path} row {row_number}: selector wider than 4 bytes")
                provenance = row.provenance.strip() or "registry file"
            else:
                selector = selector_of(key)
                provenance = row.provenance.strip() or f"keccak({key})"

            registry.add(HookEntry(selector, name, kind, provenance))

        logger.info("✓ Hook registry loaded: %d entries", len(registry))
        return registry


DEFAULT_REGISTRY = HookRegistry()


def classify_hook(selector, registry=None) -> HookClass:
    return (DEFAULT_REGISTRY if registry is None else registry).classify(selector)


def describe(selector, registry=None):
    """Selector text plus the registered name, e.g. '0x150b7a02 (onERC721Received)'."""
    name = (DEFAULT_REGISTRY if registry is None else registry).name_of(selector)
    text = format_selector(selector)
    return f"{text} ({name})" if name else text
