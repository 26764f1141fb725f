"""Transactions, balances, sub-chain assignment and the k-deep acceptance rule."""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .crypto import ParameterError, u32, u64

if TYPE_CHECKING:
    from .chain import Block


class LedgerError(ValueError):
    """A batch that cannot be applied. ``tx_id`` names the first offender."""

    def __init__(self, message: str, tx_id: int | None = None):
        super().__init__(message)
        self.tx_id = tx_id


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int
    senders: tuple[int, ...]
    outputs: tuple[tuple[int, int], ...]
    fee: int = 0
    blob: bytes = field(default=b"", compare=False, repr=False)

    def __post_init__(self):
        if not self.senders:
            raise ParameterError("transaction needs at least one sender")
        if self.fee < 0 or any(a < 0 for _, a in self.outputs):
            raise ParameterError("amounts and fee must be non-negative")
        if not self.blob:
            object.__setattr__(self, "blob", encode_tx(self))

    @property
    def typical(self) -> bool:
        return len(self.senders) == 1

    @property
    def amount(self) -> int:
        """Total debit: outputs plus fee."""
        return sum(a for _, a in self.outputs) + self.fee


def transfer(tx_id: int, sender: int, receiver: int, amount: int, fee: int = 0) -> Transaction:
    return Transaction(tx_id, (sender,), ((receiver, amount),), fee)


def encode_tx(tx: Transaction) -> bytes:
    parts = [u64(tx.id), u32(len(tx.senders))]
    parts += [u64(s) for s in tx.senders]
    parts.append(u32(len(tx.outputs)))
    for key, amount in tx.outputs:
        parts += [u64(key), u64(amount)]
    parts.append(u64(tx.fee))
    return b"".join(parts)


def decode_tx(blob: bytes) -> Transaction:
    tx_id, ns = struct.unpack_from(">QI", blob, 0)
    pos = 12
    senders = struct.unpack_from(f">{ns}Q", blob, pos)
    pos += 8 * ns
    (no,) = struct.unpack_from(">I", blob, pos)
    pos += 4
    flat = struct.unpack_from(f">{2 * no}Q", blob, pos)
    pos += 16 * no
    (fee,) = struct.unpack_from(">Q", blob, pos)
    outputs = tuple((flat[2 * j], flat[2 * j + 1]) for j in range(no))
    return Transaction(tx_id, tuple(senders), outputs, fee)


def canonical_order(txs: Iterable[Transaction]) -> tuple[Transaction, ...]:
    return tuple(sorted(txs, key=lambda t: t.id))


def subchain_index(sender_key: int, k: int) -> int:
    """Sub-chain of a sender: its low log2(k) bits for powers of two, and
    ``key mod k`` in general (the two agree on powers of two)."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    return sender_key % k


@dataclass(frozen=True, slots=True)
class BalanceState:
    balances: Mapping[int, int]
    spent: frozenset[int] = frozenset()

    def balance(self, key: int) -> int:
        return self.balances.get(key, 0)

    @property
    def supply(self) -> int:
        return sum(self.balances.values())


def genesis_state(allocation: Mapping[int, int]) -> BalanceState:
    if any(v < 0 for v in allocation.values()):
        raise ParameterError("initial balances must be non-negative")
    return BalanceState(dict(allocation), frozenset())


def _debits(tx: Transaction, balances: Mapping[int, int], pending: Mapping[int, int]) -> list[tuple[int, int]] | None:
    """Split the debit of ``tx`` over its senders greedily in sender order.
    Returns None when the senders together cannot cover it."""
    need = tx.amount
    out = []
    for s in dict.fromkeys(tx.senders):
        if need == 0:
            break
        avail = balances.get(s, 0) - pending.get(s, 0)
        take = min(max(avail, 0), need)
        if take:
            out.append((s, take))
            need -= take
    return out if need == 0 else None


def first_invalid(txs: Sequence[Transaction], state: BalanceState) -> int | None:
    """Index of the first transaction that double-spends or overdraws when the
    batch is applied in order against ``state``; None if the batch is valid."""
    seen: set[int] = set()
    pending: dict[int, int] = defaultdict(int)
    for j, tx in enumerate(txs):
        if tx.id in state.spent or tx.id in seen:
            return j
        seen.add(tx.id)
        debits = _debits(tx, state.balances, pending)
        if debits is None:
            return j
        for s, a in debits:
            pending[s] += a
    return None


def select_batch(
    candidates: Iterable[Transaction],
    state: BalanceState,
    capacity: int,
    fee_cap: int | None = None,
    exclude: set[int] | frozenset[int] = frozenset(),
) -> list[Transaction]:
    """Greedy batch: take candidates in the given order, skipping any that
    is spent, excluded, overdraws, or would push fees past ``fee_cap``."""
    out: list[Transaction] = []
    pending: dict[int, int] = defaultdict(int)
    seen: set[int] = set()
    fees = 0
    for tx in candidates:
        if len(out) >= capacity:
            break
        if tx.id in state.spent or tx.id in exclude or tx.id in seen:
            continue
        if fee_cap is not None and fees + tx.fee > fee_cap:
            continue
        debits = _debits(tx, state.balances, pending)
        if debits is None:
            continue
        for s, a in debits:
            pending[s] += a
        seen.add(tx.id)
        fees += tx.fee
        out.append(tx)
    return out


def validate_tx_batch(txs: Sequence[Transaction], state: BalanceState) -> bool:
    return first_invalid(txs, state) is None


def apply_txs(
    state: BalanceState,
    batches: Iterable[tuple[Sequence[Transaction], int | None, int]],
) -> BalanceState:
    """Apply several blocks' worth of transactions at once.

    Each batch is ``(txs, miner, reward)``: the transactions of one block,
    the key credited with its reward and fees (None for no credit), and the
    block reward. Batches are applied in order, each against the running state.
    """
    balances = dict(state.balances)
    spent = set(state.spent)
    for txs, miner, reward in batches:
        fees = 0
        for tx in txs:
            if tx.id in spent:
                raise LedgerError(f"transaction {tx.id} already spent", tx.id)
            debits = _debits(tx, balances, {})
            if debits is None:
                raise LedgerError(f"transaction {tx.id} overdraws its senders", tx.id)
            for s, a in debits:
                balances[s] -= a
            for key, amount in tx.outputs:
                balances[key] = balances.get(key, 0) + amount
            fees += tx.fee
            spent.add(tx.id)
        if miner is not None:
            balances[miner] = balances.get(miner, 0) + reward + fees
    return BalanceState(balances, frozenset(spent))


def block_reward(block: "Block", reward_parallel: int, reward_series: int) -> int:
    return reward_parallel if block.kind == "parallel" else reward_series


def apply_block(state: BalanceState, block: "Block", reward_parallel: int = 0, reward_series: int = 0) -> BalanceState:
    reward = block_reward(block, reward_parallel, reward_series)
    return apply_txs(state, [(block.txs, block.miner, reward)])


# ---------------------------------------------------------------------------
# Acceptance rule


@dataclass(frozen=True, slots=True)
class AcceptanceQuery:
    tx_id: int
    kappa: int
    c_star_len: int
    c_prime_len: int

    def __post_init__(self):
        if self.kappa < 0 or self.c_star_len < 0 or self.c_prime_len < 0:
            raise ParameterError("acceptance query fields must be non-negative")


def acceptance_rule(query: AcceptanceQuery) -> bool:
    return query.c_star_len - query.c_prime_len > query.kappa
