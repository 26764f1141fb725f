"""Shared fixtures: small protocol instances with easy targets and chain builders."""

from __future__ import annotations

import numpy as np
import pytest

from interlude.chain import Chain, ProtocolParams, genesis_chain, mine_parallel, mine_series
from interlude.crypto import MAX_HASH, Oracle
from interlude.ledger import transfer

FUNDED = {0: 1000, 1: 1000, 2: 1000, 3: 1000, 5: 50}


def make_params(k: int = 4, seed: int = 1, balances=None, **kw) -> ProtocolParams:
    return ProtocolParams(
        k=k,
        oracle=Oracle(seed),
        target_parallel=MAX_HASH >> 2,
        target_series=MAX_HASH >> 3,
        genesis_balances=dict(FUNDED if balances is None else balances),
        **kw,
    )


def full_kset(params: ProtocolParams, chain: Chain, rng, tx_sets=None, miner: int = 0):
    """One parallel block per sub-chain on ``chain``'s tip; ``tx_sets`` maps
    sub-chain index to the transactions of that block."""
    tx_sets = tx_sets or {}
    sets = [tuple(tx_sets.get(i, ())) for i in range(params.k)]
    return [mine_parallel(params, chain.tip.hash, i, rng, sets, miner) for i in range(params.k)]


def grow(params: ProtocolParams, chain: Chain, rng, rounds: int = 1, tx_sets=None, series_txs=()) -> Chain:
    """Extend ``chain`` by whole rounds; transactions go into the first round only."""
    for j in range(rounds):
        ks = full_kset(params, chain, rng, tx_sets if j == 0 else None)
        for b in ks:
            chain = chain.extend(b)
        chain = chain.extend(mine_series(params, chain.partial, rng, series_txs if j == 0 else ()))
    return chain


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def params():
    return make_params()


@pytest.fixture
def chain3(params, rng):
    """Three rounds with transactions on two sub-chains in round one."""
    txs = {0: [transfer(1, 0, 1, 10, 1)], 2: [transfer(2, 2, 3, 20, 2), transfer(3, 2, 1, 5)]}
    return grow(params, genesis_chain(params), rng, 3, txs, [transfer(4, 1, 0, 7, 1)])


# criterion number -> list of (part label, passed, detail), filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        parts = ACCEPTANCE_RESULTS[number]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        failed = [label for label, ok, _ in parts if not ok]
        note = f" (failing part: {', '.join(failed)})" if failed and len(parts) > 1 else ""
        terminalreporter.write_line(f"criterion {number}: {status}{note}")
