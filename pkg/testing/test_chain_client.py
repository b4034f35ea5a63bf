import json

import pytest
import requests

from core.errors import ChainFetchError, InputError
from engine.chain_client import ChainClient, ContractId, FixtureRecorder, FixtureStore
from services.rpc_service import RpcBackend
from testing.fake_rpc import FakeNodeSession, FakeResponse, ScriptedSession
from testing.fixture_corpus import MemoryBackend, erc1155_claim

EIP55_VECTOR = "0x5aAeb6053F3E94C9b9A09f33669435E7Ef1BeAed"


# ============================================================================
# ADDRESSES
# ============================================================================

def test_checksummed_and_single_case_addresses_parse():
    lowered = ContractId.parse(EIP55_VECTOR.lower())

    assert ContractId.parse(EIP55_VECTOR) == lowered
    assert ContractId.parse("0x" + EIP55_VECTOR[2:].upper()) == lowered
    assert lowered.checksum == EIP55_VECTOR
    assert lowered.hex == EIP55_VECTOR.lower()


@pytest.mark.parametrize("vector", [
    "0xfB6916095ca1df60bB79Ce92cE3Ea74c37c5d359",
    "0xdbF03B407c01E7cD3CBea99509d93f8DDDC8C6FB",
    "0x52908400098527886E0F7030069857D2E4169EE7",
    "0xde709f2102306220921060314715629080e2fb77",
])
def test_checksum_matches_known_vectors(vector):
    contract = ContractId.parse(vector)

    assert contract.checksum == vector
    assert ContractId.parse(contract.checksum) == contract


@pytest.mark.parametrize("text", [
    "0x5aaeb6053F3E94C9b9A09f33669435E7Ef1BeAed",
    "0x1234",
    "5aaeb6053f3e94c9b9a09f33669435e7ef1beaed",
    "0xzzaeb6053f3e94c9b9a09f33669435e7ef1beaed",
])
def test_bad_addresses_are_input_errors(text):
    with pytest.raises(InputError):
        ContractId.parse(text)


def test_integer_round_trip_and_code_addresses():
    contract = ContractId.from_int(0xC0FFEE)
    assert contract.as_int == 0xC0FFEE
    assert ContractId.for_code(b"\x60\x01") == ContractId.for_code(b"\x60\x01")
    assert ContractId.for_code(b"\x60\x01") != ContractId.for_code(b"\x60\x02")


# ============================================================================
# FIXTURES
# ============================================================================

def test_fixture_store_reads_code_and_storage(tmp_path):
    case = erc1155_claim()
    case.write(tmp_path)
    store = FixtureStore(tmp_path)
    drop = sorted(case.contracts)[1]

    assert store.get_code(case.entry) == case.entry_code
    assert store.get_storage(case.entry, 0) == drop.as_int
    assert store.get_storage(case.entry, 1) == 0
    assert store.get_code(ContractId.from_int(0xDEAD)) == b""


def test_fixture_store_requires_a_directory(tmp_path):
    with pytest.raises(InputError):
        FixtureStore(tmp_path / "missing")


def test_malformed_storage_file(tmp_path):
    (tmp_path / "storage.json").write_text("{not json")
    with pytest.raises(InputError):
        FixtureStore(tmp_path).get_storage(ContractId.from_int(1), 0)


def test_client_caches_and_records(tmp_path):
    contract = ContractId.from_int(0xAB)
    backend = MemoryBackend({contract: b"\x60\x01\x00"}, {contract: {5: 0xBEEF}})
    client = ChainClient(backend, FixtureRecorder(tmp_path))

    assert client.get_code(contract).data == b"\x60\x01\x00"
    assert client.get_code(contract).data == b"\x60\x01\x00"
    assert client.get_storage(contract, 5) == 0xBEEF
    assert client.fetches == 2

    replay = FixtureStore(tmp_path)
    assert replay.get_code(contract) == b"\x60\x01\x00"
    assert replay.get_storage(contract, 5) == 0xBEEF
    stored = json.loads((tmp_path / "storage.json").read_text())
    assert stored[contract.hex]["0x5"] == "0x" + (0xBEEF).to_bytes(32, "big").hex()


# ============================================================================
# JSON-RPC
# ============================================================================

def test_rpc_pins_latest_block_once():
    contract = ContractId.from_int(0xAB)
    session = FakeNodeSession({contract: b"\x60\x01"}, {contract: {1: 7}}, block="0x10")
    backend = RpcBackend("http://node", session=session)

    assert backend.get_code(contract) == b"\x60\x01"
    assert backend.get_storage(contract, 1) == 7
    assert session.requests == [
        ("eth_blockNumber", []),
        ("eth_getCode", [contract.hex, "0x10"]),
        ("eth_getStorageAt", [contract.hex, "0x1", "0x10"]),
    ]


def test_rpc_with_explicit_block_skips_block_number():
    session = FakeNodeSession()
    backend = RpcBackend("http://node", block="0x5", session=session)

    assert backend.get_code(ContractId.from_int(1)) == b""
    assert session.methods == ["eth_getCode"]


def test_rpc_retries_transport_errors():
    session = FakeNodeSession(failures=1)
    backend = RpcBackend("http://node", block="0x5", session=session, attempts=2)

    assert backend.get_storage(ContractId.from_int(1), 0) == 0
    assert session.methods == ["eth_getStorageAt", "eth_getStorageAt"]


def test_rpc_gives_up_after_attempts():
    session = FakeNodeSession(failures=5)
    backend = RpcBackend("http://node", block="0x5", session=session, attempts=2)

    with pytest.raises(ChainFetchError):
        backend.get_code(ContractId.from_int(1))
    assert len(session.requests) == 2


@pytest.mark.parametrize("response", [
    FakeResponse({"jsonrpc": "2.0", "id": 1, "error": {"code": -32000, "message": "header not found"}}),
    FakeResponse({"jsonrpc": "2.0", "id": 1}),
    FakeResponse({"jsonrpc": "2.0", "id": 1, "result": "0xzz"}),
    FakeResponse({"jsonrpc": "2.0", "id": 1, "result": 12}),
    FakeResponse(ValueError("not json")),
    FakeResponse({}, status=502),
])
def test_rpc_failures_are_fetch_errors(response):
    backend = RpcBackend("http://node", block="0x5", session=ScriptedSession([response]), attempts=1)

    with pytest.raises(ChainFetchError):
        backend.get_code(ContractId.from_int(1))


def test_fetch_error_is_not_empty_code():
    backend = RpcBackend(
        "http://node", block="0x5",
        session=ScriptedSession([requests.Timeout("slow")]), attempts=1,
    )
    client = ChainClient(backend)

    with pytest.raises(ChainFetchError) as excinfo:
        client.get_code(ContractId.from_int(1))
    assert excinfo.value.kind == "fetch-error"
    assert client.fetches == 0
