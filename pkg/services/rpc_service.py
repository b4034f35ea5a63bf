import itertools
import logging

import requests

from core.analysis_config import RPC_ATTEMPTS, RPC_TIMEOUT
from core.errors import ChainFetchError

logger = logging.getLogger(__name__)


class RpcBackend:
    """
    JSON-RPC 2.0 chain backend (eth_getCode, eth_getStorageAt).

    The block is pinned on first use: "latest" is resolved once through
    eth_blockNumber so every read of one run sees the same chain state.
    """

    def __init__(self, url, block="latest", session=None, timeout=RPC_TIMEOUT, attempts=RPC_ATTEMPTS):
        self.url = url
        self.session = session or requests.Session()
        self.timeout = timeout
        self.attempts = max(1, attempts)
        self._requested_block = block
        self._pinned_block = None if block == "latest" else block
        self._ids = itertools.count(1)

    def describe(self):
        return f"rpc:{self.url}"

    @property
    def block(self):
        if self._pinned_block is None:
            number = self.call("eth_blockNumber", [])
            self._pinned_block = number
            logger.info("✓ Pinned block %s (%d)", number, int(number, 16))
        return self._pinned_block

    def call(self, method, params):
        payload = {"jsonrpc": "2.0", "id": next(self._ids), "method": method, "params": params}

        last_error = None
        for attempt in range(1, self.attempts + 1):
            try:
                response = self.session.post(self.url, json=payload, timeout=self.timeout)
                response.raise_for_status()
                body = response.json()
                break
            except (requests.RequestException, ValueError) as e:
                last_error = e
                logger.warning("⚠ %s attempt %d/%d failed: %s", method, attempt, self.attempts, e)
        else:
            raise ChainFetchError(f"{method} failed after {self.attempts} attempts: {last_error}")

        if "error" in body:
            error = body["error"]
            message = error.get("message") if isinstance(error, dict) else error
            raise ChainFetchError(f"{method} returned error: {message}")
        if "result" not in body:
            raise ChainFetchError(f"{method} response has no result")

        return body["result"]

    def get_code(self, contract):
        result = self.call("eth_getCode", [contract.hex, self.block])
        return _decode_hex(result, "eth_getCode")

    def get_storage(self, contract, slot):
        result = self.call("eth_getStorageAt", [contract.hex, hex(slot), self.block])
        return int.from_bytes(_decode_hex(result, "eth_getStorageAt"), "big")


def _decode_hex(text, method):
    if not isinstance(text, str):
        raise ChainFetchError(f"{method} returned non-string result")
    cleaned = text[2:] if text[:2].lower() == "0x" else text
    if len(cleaned) % 2:
        cleaned = "0" + cleaned
    try:
        return bytes.fromhex(cleaned)
    except ValueError as e:
        raise ChainFetchError(f"{method} returned malformed hex: {e}") from e
