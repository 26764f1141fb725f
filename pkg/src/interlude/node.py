"""Per-party protocol state machines: the honest node and the withholding adversary.

A node keeps every valid block it has seen. Series blocks form a tree of
rounds; parallel blocks are filed under the series block they extend. For
each series block the node keeps the best incomplete k-set it can assemble
from the parallel blocks filed under it, so the selected chain is always the
best one constructible from everything known.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .chain import (
    PARALLEL,
    SERIES,
    Block,
    Chain,
    ParallelTemplate,
    ProtocolParams,
    Round,
    _round_fault,
    checked_block_fault,
    genesis_chain,
    mine_series,
    parallel_template,
    publish_parallel,
    selection_key,
    solve_parallel,
)
from .crypto import ParameterError
from .ledger import LedgerError, Transaction, apply_txs, first_invalid, select_batch, subchain_index

HONEST = "honest"
ADVERSARY = "adversary"
ADVERSARY_STRATEGIES = ("selfish", "private")


class SlotTable:
    """Parallel blocks filed under one series block and the k-set chosen from them.

    The chosen set is a maximum matching between distinct block hashes and
    sub-chain slots, built greedily from the lowest hash upward with
    augmenting paths: first as many blocks as possible, then the
    lexicographically smallest hashes among those.
    """

    __slots__ = ("blocks", "assign", "used", "version", "_partial")

    def __init__(self):
        self.blocks: dict[tuple[int, int], Block] = {}
        self.assign: dict[int, Block] = {}
        self.used: dict[int, int] = {}
        self.version = 0
        self._partial: tuple[Block, ...] | None = ()

    def __len__(self):
        return len(self.assign)

    def add(self, b: Block) -> bool:
        """File ``b``; returns True if the chosen k-set changed."""
        if b.key in self.blocks:
            return False
        self.blocks[b.key] = b
        if b.subchain not in self.assign and b.hash not in self.used:
            self.assign[b.subchain] = b
            self.used[b.hash] = b.subchain
            self._changed()
            return True
        before = set(self.assign.values())
        self._rematch()
        if set(self.assign.values()) != before:
            self._changed()
            return True
        return False

    def _changed(self):
        self.version += 1
        self._partial = None

    def _rematch(self):
        by_hash: dict[int, list[Block]] = {}
        for blk in self.blocks.values():
            by_hash.setdefault(blk.hash, []).append(blk)
        for lst in by_hash.values():
            lst.sort(key=lambda x: x.subchain)
        slot_owner: dict[int, int] = {}
        owner_block: dict[int, Block] = {}

        def augment(h: int, seen: set[int]) -> bool:
            for blk in by_hash[h]:
                s = blk.subchain
                if s in seen:
                    continue
                seen.add(s)
                other = slot_owner.get(s)
                if other is None or augment(other, seen):
                    slot_owner[s] = h
                    owner_block[h] = blk
                    return True
            return False

        for h in sorted(by_hash):
            augment(h, set())
        self.assign = {s: owner_block[h] for s, h in slot_owner.items()}
        self.used = {h: s for s, h in slot_owner.items()}

    def partial(self) -> tuple[Block, ...]:
        if self._partial is None:
            self._partial = tuple(self.assign[s] for s in sorted(self.assign))
        return self._partial

    def empty_slots(self, k: int) -> list[int]:
        return [i for i in range(k) if i not in self.assign]


class Mempool:
    """Pending transactions bucketed by sub-chain; multi-sender ones kept apart."""

    def __init__(self, k: int):
        self.k = k
        self.buckets: list[dict[int, Transaction]] = [{} for _ in range(k)]
        self.general: dict[int, Transaction] = {}

    def __len__(self):
        return sum(len(b) for b in self.buckets) + len(self.general)

    def add(self, tx: Transaction) -> None:
        if tx.typical:
            self.buckets[subchain_index(tx.senders[0], self.k)][tx.id] = tx
        else:
            self.general[tx.id] = tx

    def prune(self, spent: frozenset[int]) -> None:
        for bucket in self.buckets:
            for tid in [t for t in bucket if t in spent]:
                del bucket[tid]
        for tid in [t for t in self.general if t in spent]:
            del self.general[tid]

    @staticmethod
    def _by_fee(txs: Iterable[Transaction]) -> list[Transaction]:
        return sorted(txs, key=lambda t: (-t.fee, t.id))

    def bucket_candidates(self, i: int) -> list[Transaction]:
        return self._by_fee(self.buckets[i].values())

    def all_candidates(self) -> list[Transaction]:
        typical = [t for b in self.buckets for t in b.values()]
        return self._by_fee(typical) + self._by_fee(self.general.values())


@dataclass
class Published:
    """A solved parallel puzzle and the copy of it currently on offer."""

    template: ParallelTemplate
    nonce: int
    hash: int
    copy: Block
    abandoned: bool = False
    copies: list[Block] = field(default_factory=list)


@dataclass
class Update:
    view_changed: bool = False
    tip_changed: bool = False
    relocated: list[Block] = field(default_factory=list)
    new_rounds: list[Round] = field(default_factory=list)


class Node:
    """Honest participant: selects the best known chain, mines on it and
    relocates its own parallel blocks when they lose a slot."""

    role = HONEST

    def __init__(self, party: int, params: ProtocolParams, rng, prune_mempool: bool = True):
        self.party = party
        self.params = params
        self.k = params.k
        self.rng = rng
        self.prune_mempool = prune_mempool
        g = genesis_chain(params).round
        self.genesis = g
        self.rounds: dict[int, Round] = {g.series.hash: g}
        self.leaves: dict[int, Round] = {g.series.hash: g}
        self.by_height: dict[int, list[int]] = {0: [g.series.hash]}
        self.max_height = 0
        self.tables: dict[int, SlotTable] = {g.series.hash: SlotTable()}
        self.orphans: dict[int, list[Block]] = {}
        self.mempool = Mempool(self.k)
        self.published: dict[int, Published] = {}
        self._own_by_anchor: dict[int, list[int]] = {}
        self.best = g.series.hash
        self._view: Chain | None = None
        self._view_sig = (self.best, 0)
        self.dropped_invalid = 0
        self.abandoned = 0
        self.relocations = 0

    # -- knowledge -----------------------------------------------------------

    def knows(self, series_hash: int) -> bool:
        return series_hash in self.rounds

    def known_chains(self) -> list[Chain]:
        """The best chain ending at each known series block."""
        return [Chain(r, self.tables[h].partial()) for h, r in self.rounds.items()]

    @property
    def view(self) -> Chain:
        if self._view is None:
            self._view = Chain(self.rounds[self.best], self.tables[self.best].partial())
        return self._view

    @property
    def height(self) -> int:
        return self.rounds[self.best].height

    @property
    def mode(self) -> str:
        return SERIES if len(self.tables[self.best]) == self.k else PARALLEL

    def _select(self) -> None:
        best = max(self.by_height[self.max_height], key=lambda h: (len(self.tables[h]), -h))
        sig = (best, self.tables[best].version)
        if sig != self._view_sig:
            self.best = best
            self._view_sig = sig
            self._view = None

    def _find_round(self, chain: Chain | None, series_hash: int) -> Round | None:
        if chain is None:
            return None
        r = chain.round
        while r is not None and r.series.hash != series_hash:
            r = r.parent
        return r

    def _ingest_round(self, r: Round, update: Update) -> bool:
        pending = []
        while r.series.hash not in self.rounds:
            if r.parent is None:
                self.dropped_invalid += 1
                return False
            pending.append(r)
            r = r.parent
        for rr in reversed(pending):
            if rr._checked is not self.params:
                if _round_fault(rr, self.params) is not None:
                    self.dropped_invalid += 1
                    return False
                try:
                    rr.state(self.params)
                except LedgerError:
                    self.dropped_invalid += 1
                    return False
                rr._checked = self.params
            self._register(rr, update)
        return True

    def _register(self, r: Round, update: Update) -> None:
        h = r.series.hash
        parent_hash = r.parent.series.hash
        self.rounds[h] = r
        self.tables[h] = SlotTable()
        self.leaves.pop(parent_hash, None)
        self.leaves[h] = r
        self.by_height.setdefault(r.height, []).append(h)
        if r.height > self.max_height:
            self.max_height = r.height
        parent_table = self.tables[parent_hash]
        for b in r.kset:
            parent_table.add(b)
        update.new_rounds.append(r)
        for b in self.orphans.pop(h, ()):
            self._ingest_parallel(b, None, update)

    def _ingest_parallel(self, b: Block, chain: Chain | None, update: Update) -> None:
        anchor = b.top[0] if b.top else None
        if anchor not in self.rounds:
            r = self._find_round(chain, anchor)
            if r is None or not self._ingest_round(r, update):
                if r is None:
                    self.orphans.setdefault(anchor, []).append(b)
                return
        table = self.tables[anchor]
        if b.key in table.blocks:
            return
        if checked_block_fault(b, self.params) is not None:
            self.dropped_invalid += 1
            return
        if b.txs and first_invalid(b.txs, self.rounds[anchor].state(self.params)) is not None:
            self.dropped_invalid += 1
            return
        table.add(b)

    def receive(self, blocks: Iterable[Block], chain: Chain | None = None, time: float = 0.0) -> Update:
        """Take in announced blocks; ``chain`` supplies any missing ancestors."""
        update = Update()
        old_sig, old_tip = self._view_sig, self.best
        for b in blocks:
            if b.kind == SERIES:
                if b.hash in self.rounds:
                    continue
                r = self._find_round(chain, b.hash)
                if r is None:
                    self.dropped_invalid += 1
                    continue
                self._ingest_round(r, update)
            else:
                self._ingest_parallel(b, chain, update)
        self._select()
        update.relocated = self.update_on_fork(time)
        self._select()
        update.view_changed = self._view_sig != old_sig
        update.tip_changed = self.best != old_tip
        if update.tip_changed and self.prune_mempool:
            self.mempool.prune(self.rounds[self.best].state(self.params).spent)
        return update

    def on_receive_chain(self, incoming: Chain, time: float = 0.0) -> Chain | None:
        """Ingest every block of ``incoming``; return the new view to
        rebroadcast if the selection changed, else None."""
        blocks = [incoming.tip] + list(incoming.partial)
        upd = self.receive(blocks, incoming, time)
        return self.view if upd.view_changed else None

    def add_transaction(self, tx: Transaction) -> None:
        self.mempool.add(tx)

    # -- mining ---------------------------------------------------------------

    def build_parallel_template(self) -> tuple[ParallelTemplate, list[int]]:
        anchor = self.best
        table = self.tables[anchor]
        empty = table.empty_slots(self.k)
        state = self.rounds[anchor].state(self.params)
        sets: list[tuple[Transaction, ...]] = [()] * self.k
        cap = self.params.block_capacity
        for i in empty:
            if self.mempool.buckets[i]:
                sets[i] = tuple(select_batch(self.mempool.bucket_candidates(i), state, cap, self.params.fee_cap))
        return parallel_template(self.params, anchor, sets), empty

    def series_transactions(self) -> list[Transaction]:
        """Leftover and multi-sender transactions valid after the current k-set."""
        view = self.view
        if not len(self.mempool):
            return []
        state = view.round.state(self.params)
        in_kset = {t.id for b in view.partial for t in b.txs}
        after = apply_txs(state, [(b.txs, b.miner, self.params.reward_parallel) for b in view.partial])
        return select_batch(
            self.mempool.all_candidates(), after, self.params.block_capacity, self.params.fee_cap, in_kset
        )

    def on_pow_success(self, kind: str, time: float) -> Block | None:
        """Assemble and adopt a freshly mined block; None if the puzzle kind
        no longer matches the view."""
        if kind != self.mode:
            return None
        if kind == PARALLEL:
            tpl, empty = self.build_parallel_template()
            nonce, h = solve_parallel(self.params, tpl, self.rng)
            slot = int(empty[self.rng.integers(len(empty))])
            b = publish_parallel(tpl, nonce, h, slot, self.party, time)
            self.published[nonce] = Published(tpl, nonce, h, b, copies=[b])
            self._own_by_anchor.setdefault(tpl.anchor, []).append(nonce)
            self.tables[tpl.anchor].add(b)
        else:
            view = self.view
            txs = self.series_transactions()
            b = mine_series(self.params, view.partial, self.rng, txs, self.party, time)
            r = Round(view.round, view.partial, b)
            r._checked = self.params
            self._register(r, Update())
        self._select()
        return b

    def update_on_fork(self, time: float) -> list[Block]:
        """Relocate own parallel blocks on the selected tip that lost their slot."""
        anchor = self.best
        own = self._own_by_anchor.get(anchor)
        if not own:
            return []
        table = self.tables[anchor]
        moved = []
        for nonce in own:
            pub = self.published[nonce]
            if pub.abandoned or pub.hash in table.used:
                continue
            empty = table.empty_slots(self.k)
            if not empty:
                pub.abandoned = True
                self.abandoned += 1
                continue
            slot = int(empty[self.rng.integers(len(empty))])
            b = publish_parallel(pub.template, nonce, pub.hash, slot, self.party, time)
            pub.copy = b
            pub.copies.append(b)
            table.add(b)
            self.relocations += 1
            moved.append(b)
        return moved


class Adversary(Node):
    """Withholding coalition: mines empty blocks on a private fork, restarts
    from the public chain when it falls behind, and releases one withheld
    block each time the public chain grows, splitting the honest parties.

    The ``private`` strategy withholds everything until the public chain
    comes within one block, then publishes the whole fork; it is a
    double-spend control for the reversal measurement."""

    role = ADVERSARY

    def __init__(self, party: int, params: ProtocolParams, rng, strategy: str = "selfish"):
        if strategy not in ADVERSARY_STRATEGIES:
            raise ParameterError(f"strategy must be one of {ADVERSARY_STRATEGIES}")
        super().__init__(party, params, rng, prune_mempool=False)
        self.strategy = strategy
        self.private: Chain = self.view
        self.withheld: list[Block] = []
        self.snapshots: list[Chain] = []
        self._public_len = 0

    @property
    def mode(self) -> str:
        return SERIES if len(self.private.partial) == self.k else PARALLEL

    def update_on_fork(self, time: float) -> list[Block]:
        return []

    def on_pow_success(self, kind: str, time: float) -> Block | None:
        if kind != self.mode:
            return None
        priv = self.private
        if kind == PARALLEL:
            empty = [i for i in range(self.k) if priv.slot(i) is None]
            tpl = parallel_template(self.params, priv.tip.hash, [()] * self.k)
            nonce, h = solve_parallel(self.params, tpl, self.rng)
            slot = int(empty[self.rng.integers(len(empty))])
            b = publish_parallel(tpl, nonce, h, slot, self.party, time)
        else:
            b = mine_series(self.params, priv.partial, self.rng, (), self.party, time)
        self.private = priv.extend(b)
        self.withheld.append(b)
        self.snapshots.append(self.private)
        return b

    def _merge_public(self, pub: Chain) -> None:
        """Adopt public blocks that fit the private fork's open slots."""
        priv = self.private
        if priv.tip.hash != pub.tip.hash:
            return
        hashes = {b.hash for b in priv.partial}
        for b in pub.partial:
            if priv.slot(b.subchain) is None and b.hash not in hashes:
                priv = priv.extend(b)
                hashes.add(b.hash)
        self.private = priv

    def adversary_step(self) -> tuple[list[Block], Chain | None]:
        """React to the public chain. Returns (blocks to release, chain that
        carries them)."""
        pub = self.view
        k = self.k
        pub_len = pub.block_length(k)
        advanced = pub_len > self._public_len
        self._public_len = pub_len
        self._merge_public(pub)
        if selection_key(self.private) < selection_key(pub):
            self.private = pub
            self.withheld = []
            self.snapshots = []
            return [], None
        if not self.withheld or not advanced:
            return [], None
        if self.strategy == "private":
            if self.private.block_length(k) - pub_len > 1:
                return [], None
            upto = len(self.withheld)
        else:
            upto = 1
        released = self.withheld[:upto]
        carrier = self.snapshots[upto - 1]
        self.withheld = self.withheld[upto:]
        self.snapshots = self.snapshots[upto:]
        return released, carrier
