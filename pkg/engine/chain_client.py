"""
chain_client.py - Contract code and storage access

ChainClient puts a process-lifetime cache (and optional recorder) in front of a
backend: FixtureStore for on-disk fixture sets, RpcBackend for a live node.

Fixture layout:
    <dir>/<0xaddress>.hex     runtime bytecode as hex text
    <dir>/storage.json        {"0xaddress": {"0xslot": "0xword", ...}, ...}
"""

import json
import logging
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from eth_hash.auto import keccak
from eth_utils import to_checksum_address

from core.abstract_value import ADDRESS_MASK
from core.disassembler import Bytecode
from core.errors import InputError

logger = logging.getLogger(__name__)

ADDRESS_PATTERN = re.compile(r"^0x[0-9a-fA-F]{40}$")
STORAGE_FILE = "storage.json"


@dataclass(frozen=True, order=True)
class ContractId:
    address: bytes

    def __post_init__(self):
        if len(self.address) != 20:
            raise InputError(f"Address must be 20 bytes, got {len(self.address)}")

    @staticmethod
    def is_address(text):
        return bool(ADDRESS_PATTERN.match(text.strip()))

    @classmethod
    def parse(cls, text):
        """Parse 0x-prefixed hex; mixed-case input must carry a valid EIP-55 checksum."""
        cleaned = text.strip()
        if not ADDRESS_PATTERN.match(cleaned):
            raise InputError(f"Not a 20-byte hex address: {text!r}")

        body = cleaned[2:]
        if body != body.lower() and body != body.upper():
            if to_checksum_address(cleaned) != cleaned:
                raise InputError(f"EIP-55 checksum mismatch: {cleaned}")

        return cls(bytes.fromhex(body))

    @classmethod
    def from_int(cls, value):
        return cls((value & ADDRESS_MASK).to_bytes(20, "big"))

    @classmethod
    def for_code(cls, code):
        """Deterministic pseudo-address for bytecode analyzed without an address."""
        data = code.data if isinstance(code, Bytecode) else bytes(code)
        return cls(keccak(data)[-20:])

    @property
    def hex(self):
        return "0x" + self.address.hex()

    @property
    def checksum(self):
        return to_checksum_address(self.hex)

    @property
    def as_int(self):
        return int.from_bytes(self.address, "big")

    def __str__(self):
        return self.hex

    def __repr__(self):
        return f"ContractId({self.hex})"


# ============================================================================
# FIXTURE STORE
# ============================================================================

def _read_storage_file(path):
    if not path.exists():
        return {}
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Malformed fixture storage file {path}: {e}") from e

    storage = {}
    for address, slots in raw.items():
        storage[address.lower()] = {int(slot, 16): int(word, 16) for slot, word in slots.items()}
    return storage


class FixtureStore:
    """
    Local fixture backend. A missing address is an empty-code account with
    all-zero storage.
    """

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise InputError(f"Fixture directory not found: {self.root}")
        self._storage = None

    def describe(self):
        return f"fixtures:{self.root}"

    @property
    def block(self):
        return "fixtures"

    def get_code(self, contract):
        path = self.root / f"{contract.hex}.hex"
        if not path.exists():
            return b""
        return Bytecode.from_hex(path.read_text()).data

    def get_storage(self, contract, slot):
        if self._storage is None:
            self._storage = _read_storage_file(self.root / STORAGE_FILE)
        return self._storage.get(contract.hex, {}).get(slot, 0)


class FixtureRecorder:
    """
    Writes every fetched code blob and storage word in fixture layout so a live
    run can be replayed through FixtureStore.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._storage = {}

    def record_code(self, contract, code):
        with self._lock:
            (self.root / f"{contract.hex}.hex").write_text(code.hex())

    def record_storage(self, contract, slot, word):
        with self._lock:
            slots = self._storage.setdefault(contract.hex, {})
            slots[hex(slot)] = "0x" + word.to_bytes(32, "big").hex()
            ordered = {
                address: dict(sorted(values.items(), key=lambda item: int(item[0], 16)))
                for address, values in sorted(self._storage.items())
            }
            (self.root / STORAGE_FILE).write_text(json.dumps(ordered, indent=2))


# ============================================================================
# CLIENT
# ============================================================================

class ChainClient:
    """
    Cached access to contract code and storage, shareable across worker threads.

    Concurrent misses for one key may both reach the backend; the pinned block
    makes the results identical, so the last write wins.
    """

    def __init__(self, backend, recorder=None):
        self.backend = backend
        self.recorder = recorder
        self._code = {}
        self._storage = {}
        self._lock = threading.Lock()
        self.fetches = 0

    def describe(self):
        return self.backend.describe()

    @property
    def block(self):
        return self.backend.block

    def get_code(self, contract) -> Bytecode:
        with self._lock:
            if contract in self._code:
                return Bytecode(self._code[contract])

        data = self.backend.get_code(contract)
        with self._lock:
            self._code[contract] = data
            self.fetches += 1
        if self.recorder is not None:
            self.recorder.record_code(contract, data)

        logger.debug("✓ Code fetched for %s (%d bytes)", contract, len(data))
        return Bytecode(data)

    def get_storage(self, contract, slot) -> int:
        key = (contract, slot)
        with self._lock:
            if key in self._storage:
                return self._storage[key]

        word = self.backend.get_storage(contract, slot)
        with self._lock:
            self._storage[key] = word
            self.fetches += 1
        if self.recorder is not None:
            self.recorder.record_storage(contract, slot, word)

        return word
