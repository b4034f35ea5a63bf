"""
fake_rpc.py - In-process stand-in for a requests.Session talking to a JSON-RPC node
"""

import requests

from engine.chain_client import ContractId


class FakeResponse:

    def __init__(self, body, status=200):
        self.body = body
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"{self.status_code} Server Error")

    def json(self):
        if isinstance(self.body, Exception):
            raise self.body
        return self.body


class FakeNodeSession:
    """
    Answers eth_blockNumber, eth_getCode and eth_getStorageAt from in-memory state.

    `failures` transport errors are raised before the first answer; every request
    is kept in `requests` as (method, params).
    """

    def __init__(self, contracts=None, storage=None, block="0x112a880", failures=0):
        self.contracts = {c.hex: code for c, code in (contracts or {}).items()}
        self.storage = {c.hex: slots for c, slots in (storage or {}).items()}
        self.block = block
        self.failures = failures
        self.requests = []

    @classmethod
    def for_case(cls, case, **kwargs):
        return cls(case.contracts, case.storage, **kwargs)

    def post(self, url, json=None, timeout=None):
        method, params = json["method"], json["params"]
        self.requests.append((method, params))

        if self.failures:
            self.failures -= 1
            raise requests.ConnectionError("connection reset")

        return FakeResponse({"jsonrpc": "2.0", "id": json["id"], "result": self.answer(method, params)})

    def answer(self, method, params):
        if method == "eth_blockNumber":
            return self.block
        if method == "eth_getCode":
            return "0x" + self.contracts.get(ContractId.parse(params[0]).hex, b"").hex()
        if method == "eth_getStorageAt":
            word = self.storage.get(ContractId.parse(params[0]).hex, {}).get(int(params[1], 16), 0)
            return "0x" + word.to_bytes(32, "big").hex()
        raise AssertionError(f"unexpected method {method}")

    @property
    def methods(self):
        return [method for method, _ in self.requests]


class ScriptedSession:
    """Returns the given responses in order, one per request."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, timeout=None):
        self.requests.append((json["method"], json["params"]))
        response = self.responses.pop(0)
        if isinstance(response, Exception):
            raise response
        return response
