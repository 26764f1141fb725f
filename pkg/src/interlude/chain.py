"""Blocks, k-sets, chains, validation and fork choice.

A chain is a linked list of rounds. Each round holds the complete k-set of
parallel blocks and the series block that cites it; the chain adds an
incomplete k-set (``partial``) above its last series block. Chains are
immutable and share structure, so extending one is O(1) in the round count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

from .crypto import (
    LINK_TAG,
    MAX_HASH,
    MerkleProof,
    MerkleTree,
    Oracle,
    ParameterError,
    h2b,
    leaf_digest,
    merkle_build_leaves,
    merkle_prove,
    merkle_verify,
    pow_hash,
    search_nonce,
    tree_depth,
    u32,
    u64,
)
from .ledger import BalanceState, LedgerError, Transaction, apply_txs, decode_tx, genesis_state, subchain_index

PARALLEL = "parallel"
SERIES = "series"
SERIES_LEAF = 0xFFFFFFFF  # leaf index tag used for a series block's own transactions


@dataclass(frozen=True)
class ProtocolParams:
    k: int
    oracle: Oracle
    target_parallel: int = MAX_HASH >> 4
    target_series: int = MAX_HASH >> 8
    genesis_balances: Mapping[int, int] = field(default_factory=dict)
    reward_parallel: int = 0
    reward_series: int = 0
    fee_cap: int | None = None
    block_capacity: int = 1500
    memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


@dataclass(frozen=True, slots=True, eq=False)
class Block:
    kind: str
    top: tuple[int, ...]
    merkle_root: int
    nonce: int
    hash: int
    subchain: int = -1
    merkle_proof: MerkleProof | None = None
    txs: tuple[Transaction, ...] = ()
    miner: int = -1
    minted_at: float = 0.0
    leaf: int = 0
    cites: tuple[tuple[int, int], ...] = ()

    @property
    def key(self) -> tuple[int, int]:
        return (self.hash, self.subchain)

    def __eq__(self, other):
        return isinstance(other, Block) and self.key == other.key and self.kind == other.kind

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        tag = f"p{self.subchain}" if self.kind == PARALLEL else "s"
        return f"Block({tag}, {self.hash:#018x}..., {len(self.txs)} txs)"


def link_digest(oracle: Oracle, block: Block) -> int:
    """Commitment a series block makes to one cited parallel block: its hash,
    revealed branch, leaf and off-path digests."""
    proof = block.merkle_proof
    parts = [LINK_TAG, h2b(block.hash), u32(block.subchain), h2b(block.leaf)]
    parts += [h2b(x) for x in proof.off_path]
    return oracle(b"".join(parts))


def tx_leaf(oracle: Oracle, index: int, txs: Sequence[Transaction]) -> int:
    return leaf_digest(oracle, index, [t.blob for t in txs])


# ---------------------------------------------------------------------------
# Block construction


def genesis_block(params: ProtocolParams) -> Block:
    h = params.oracle(b"\x00genesis" + u64(params.k))
    return Block(SERIES, (), 0, 0, h, miner=-1)


@dataclass(frozen=True)
class ParallelTemplate:
    """Umbrella puzzle: one Merkle tree over k candidate sets atop one series block."""

    anchor: int
    tree: MerkleTree
    tx_sets: tuple[tuple[Transaction, ...], ...]
    leaves: tuple[int, ...]


def parallel_template(params: ProtocolParams, anchor: int, tx_sets: Sequence[Sequence[Transaction]]) -> ParallelTemplate:
    k = params.k
    if len(tx_sets) != k:
        raise ParameterError(f"expected {k} transaction sets, got {len(tx_sets)}")
    sets = tuple(tuple(sorted(s, key=lambda t: t.id)) for s in tx_sets)
    nonempty = {i: tx_leaf(params.oracle, i, s) for i, s in enumerate(sets) if s}
    tree = merkle_build_leaves(params.oracle, k, nonempty)
    return ParallelTemplate(anchor, tree, sets, tree.leaves)


def solve_parallel(params: ProtocolParams, tpl: ParallelTemplate, rng) -> tuple[int, int]:
    return search_nonce(params.oracle, (tpl.anchor,), tpl.tree.root, params.target_parallel, rng)


def publish_parallel(tpl: ParallelTemplate, nonce: int, h: int, subchain: int, miner: int, time: float) -> Block:
    """Reveal branch ``subchain`` of a solved template. Calling this again with
    another index relocates the block without new work."""
    return Block(
        PARALLEL,
        (tpl.anchor,),
        tpl.tree.root,
        nonce,
        h,
        subchain,
        merkle_prove(tpl.tree, subchain),
        tpl.tx_sets[subchain],
        miner,
        time,
        tpl.leaves[subchain],
    )


def mine_parallel(
    params: ProtocolParams,
    anchor: int,
    subchain: int,
    rng,
    tx_sets: Sequence[Sequence[Transaction]] | None = None,
    miner: int = 0,
    time: float = 0.0,
) -> Block:
    tpl = parallel_template(params, anchor, tx_sets if tx_sets is not None else [()] * params.k)
    nonce, h = solve_parallel(params, tpl, rng)
    return publish_parallel(tpl, nonce, h, subchain, miner, time)


def mine_series(
    params: ProtocolParams,
    kset: Sequence[Block],
    rng,
    txs: Sequence[Transaction] = (),
    miner: int = 0,
    time: float = 0.0,
) -> Block:
    kset = sorted(kset, key=lambda b: b.subchain)
    txs = tuple(sorted(txs, key=lambda t: t.id))
    links = tuple(link_digest(params.oracle, b) for b in kset)
    root = tx_leaf(params.oracle, SERIES_LEAF, txs)
    nonce, h = search_nonce(params.oracle, links, root, params.target_series, rng)
    cites = tuple((b.hash, b.subchain) for b in kset)
    return Block(SERIES, links, root, nonce, h, -1, None, txs, miner, time, root, cites)


# ---------------------------------------------------------------------------
# Validity of single blocks and k-sets


def block_fault(block: Block, params: ProtocolParams) -> str | None:
    """Return a rule label if ``block`` is individually invalid.

    "iv"/"ii" for proof-of-work failures of parallel/series blocks, "block" for
    content failures (commitments, sub-chain routing, capacity, fee cap).
    """
    oracle = params.oracle
    pow_rule = "iv" if block.kind == PARALLEL else "ii"
    target = params.target_parallel if block.kind == PARALLEL else params.target_series
    if block.hash > target or pow_hash(oracle, block.nonce, block.top, block.merkle_root) != block.hash:
        return pow_rule
    txs = block.txs
    if len(txs) > params.block_capacity:
        return "block"
    if any(txs[j].id >= txs[j + 1].id for j in range(len(txs) - 1)):
        return "block"
    if params.fee_cap is not None and sum(t.fee for t in txs) > params.fee_cap:
        return "block"
    if block.kind == PARALLEL:
        proof = block.merkle_proof
        if len(block.top) != 1 or not 0 <= block.subchain < params.k or proof is None:
            return "block"
        if proof.branch_index != block.subchain or len(proof.off_path) != tree_depth(params.k):
            return "block"
        if tx_leaf(oracle, block.subchain, txs) != block.leaf:
            return "block"
        if not merkle_verify(oracle, block.merkle_root, block.leaf, proof, params.k):
            return "block"
        for t in txs:
            if not t.typical or subchain_index(t.senders[0], params.k) != block.subchain:
                return "block"
    elif block.kind == SERIES:
        if len(block.top) != params.k or len(block.cites) != params.k:
            return "block"
        if tx_leaf(oracle, SERIES_LEAF, txs) != block.merkle_root or block.leaf != block.merkle_root:
            return "block"
    else:
        return "block"
    return None


def checked_block_fault(block: Block, params: ProtocolParams) -> str | None:
    """block_fault memoized per block object (blocks are immutable)."""
    hit = params.memo.get(id(block))
    if hit is not None and hit[0] is block:
        return hit[1]
    fault = block_fault(block, params)
    params.memo[id(block)] = (block, fault)
    return fault


def kset_fault(blocks: Sequence[Block], k: int) -> str | None:
    """Structural k-set conditions: size, common top, distinct sub-chains,
    distinct (root, nonce) pairs."""
    if len(blocks) > k:
        return "size"
    if any(b.kind != PARALLEL for b in blocks):
        return "kind"
    if len({b.top for b in blocks}) > 1:
        return "top"
    if len({b.subchain for b in blocks}) != len(blocks):
        return "subchain"
    if len({(b.merkle_root, b.nonce) for b in blocks}) != len(blocks):
        return "duplicate"
    return None


def validate_kset(blocks: Sequence[Block], params: ProtocolParams, complete: bool = False) -> bool:
    """True iff ``blocks`` is a valid (partial, or complete if asked) k-set
    whose members are individually valid."""
    if kset_fault(blocks, params.k) is not None:
        return False
    if complete and len(blocks) != params.k:
        return False
    return all(checked_block_fault(b, params) is None for b in blocks)


# ---------------------------------------------------------------------------
# Rounds and chains


class Round:
    """A series block together with the k-set it cites and its parent round."""

    __slots__ = ("parent", "kset", "series", "height", "_state", "_checked", "__weakref__")

    def __init__(self, parent: Round | None, kset: tuple[Block, ...], series: Block):
        self.parent = parent
        self.kset = kset
        self.series = series
        self.height = 0 if parent is None else parent.height + 1
        self._state: BalanceState | None = None
        self._checked: ProtocolParams | None = None

    def ancestor(self, height: int) -> Round:
        r = self
        while r.height > height:
            r = r.parent
        return r

    def state(self, params: ProtocolParams) -> BalanceState:
        """Balances after this round. Raises LedgerError if the round's
        transactions cannot be applied."""
        if self._state is None:
            if self.parent is None:
                self._state = genesis_state(params.genesis_balances)
            else:
                # compute parent states iteratively to avoid deep recursion
                pending = []
                r = self
                while r._state is None and r.parent is not None:
                    pending.append(r)
                    r = r.parent
                if r._state is None:
                    r._state = genesis_state(params.genesis_balances)
                for rr in reversed(pending):
                    batches = [(b.txs, b.miner, params.reward_parallel) for b in rr.kset]
                    batches.append((rr.series.txs, rr.series.miner, params.reward_series))
                    rr._state = apply_txs(rr.parent._state, batches)
        return self._state


class Chain:
    __slots__ = ("round", "partial")

    def __init__(self, round_: Round, partial: tuple[Block, ...] = ()):
        self.round = round_
        self.partial = partial

    @property
    def height(self) -> int:
        return self.round.height

    def __len__(self) -> int:
        return self.round.height

    @property
    def tip(self) -> Block:
        return self.round.series

    @property
    def ident(self) -> tuple:
        return (self.tip.hash, tuple((b.subchain, b.hash) for b in self.partial))

    def __eq__(self, other):
        return isinstance(other, Chain) and self.ident == other.ident

    def __hash__(self):
        return hash(self.ident)

    def __repr__(self):
        return f"Chain(height={self.height}, partial={len(self.partial)}, tip={self.tip.hash:#018x}...)"

    def block_length(self, k: int) -> int:
        return self.height * (k + 1) + len(self.partial)

    def rounds(self) -> list[Round]:
        out = []
        r = self.round
        while r is not None:
            out.append(r)
            r = r.parent
        out.reverse()
        return out

    def blocks(self) -> Iterator[Block]:
        """All blocks in canonical order, genesis first."""
        for r in self.rounds():
            yield from r.kset
            yield r.series
        yield from self.partial

    def slot(self, subchain: int) -> Block | None:
        for b in self.partial:
            if b.subchain == subchain:
                return b
        return None

    def extend(self, block: Block) -> Chain:
        """Append one block. Parallel blocks join the partial k-set; a series
        block closes the round it cites."""
        if block.kind == PARALLEL:
            if block.top != (self.tip.hash,):
                raise ParameterError("parallel block does not sit on this chain's tip")
            if any(b.subchain == block.subchain for b in self.partial):
                raise ParameterError(f"sub-chain {block.subchain} already occupied")
            partial = tuple(sorted(self.partial + (block,), key=lambda b: b.subchain))
            return Chain(self.round, partial)
        if block.cites != tuple((b.hash, b.subchain) for b in self.partial):
            raise ParameterError("series block does not cite this chain's k-set")
        return Chain(Round(self.round, self.partial, block), ())

    def prefix(self, height: int) -> Chain:
        return Chain(self.round.ancestor(height), ())

    def contains_round(self, r: Round) -> bool:
        return self.height >= r.height and self.round.ancestor(r.height) is r


def genesis_chain(params: ProtocolParams) -> Chain:
    return Chain(Round(None, (), genesis_block(params)))


def build_chain(params: ProtocolParams, blocks: Iterable[Block]) -> Chain:
    """Assemble a chain from blocks in canonical order (genesis may be omitted)."""
    chain = genesis_chain(params)
    for b in blocks:
        if b.kind == SERIES and not b.cites and b.hash == chain.tip.hash:
            continue
        chain = chain.extend(b)
    return chain


# ---------------------------------------------------------------------------
# Chain validation


@dataclass(frozen=True)
class Violation:
    """First broken rule found, top-down. Rules "i".."iv" refer to the last
    round (or the incomplete k-set for "iii"/"iv"); a fault in an earlier
    round is reported as "v" with the inner violation attached."""

    rule: str
    height: int
    detail: str = ""
    cause: Violation | None = None


def _round_fault(r: Round, params: ProtocolParams) -> Violation | None:
    s, ks, h = r.series, r.kset, r.height
    oracle = params.oracle
    # (i) series block links a valid complete k-set
    if len(ks) != params.k or kset_fault(ks, params.k) is not None:
        return Violation("i", h, f"k-set fault: {kset_fault(ks, params.k) or 'size'}")
    if s.kind != SERIES or s.cites != tuple((b.hash, b.subchain) for b in ks):
        return Violation("i", h, "series block cites a different k-set")
    if any(b.merkle_proof is None for b in ks) or s.top != tuple(link_digest(oracle, b) for b in ks):
        return Violation("i", h, "series links do not commit to the k-set")
    # (ii) series proof of work
    fault = checked_block_fault(s, params)
    if fault is not None:
        return Violation(fault, h, "series block")
    # (iii) the k-set sits on the preceding series block
    parent_hash = r.parent.series.hash
    if any(b.top != (parent_hash,) for b in ks):
        return Violation("iii", h, "k-set does not link the preceding series block")
    # (iv) parallel proofs of work
    for b in ks:
        fault = checked_block_fault(b, params)
        if fault is not None:
            return Violation(fault, h, f"parallel block on sub-chain {b.subchain}")
    return None


def _partial_fault(chain: Chain, params: ProtocolParams) -> Violation | None:
    h = chain.height + 1
    ks = chain.partial
    fault = kset_fault(ks, params.k)
    if fault is not None:
        return Violation("kset", h, f"incomplete k-set fault: {fault}")
    if any(b.top != (chain.tip.hash,) for b in ks):
        return Violation("iii", h, "incomplete k-set does not link the last series block")
    for b in ks:
        fault = checked_block_fault(b, params)
        if fault is not None:
            return Violation(fault, h, f"parallel block on sub-chain {b.subchain}")
    return None


def chain_violation(chain: Chain, params: ProtocolParams) -> Violation | None:
    """Diagnostic form of validate_chain."""
    v = _partial_fault(chain, params)
    if v is not None:
        return v
    top = chain.height
    r = chain.round
    while r.parent is not None and r._checked is not params:
        v = _round_fault(r, params)
        if v is not None:
            return v if r.height == top else Violation("v", r.height, "invalid prefix", v)
        r = r.parent
    if r.parent is None and r.series != genesis_block(params):
        return Violation("v" if top else "i", 0, "unknown genesis")
    # ledger, bottom-up
    try:
        state = chain.round.state(params)
    except LedgerError as e:
        return Violation("ledger", _first_bad_state(chain.round), str(e))
    try:
        apply_txs(state, [(b.txs, b.miner, params.reward_parallel) for b in chain.partial])
    except LedgerError as e:
        return Violation("ledger", top + 1, str(e))
    r = chain.round
    while r is not None and r._checked is not params:
        r._checked = params
        r = r.parent
    return None


def _first_bad_state(r: Round) -> int:
    while r.parent is not None and r.parent._state is None:
        r = r.parent
    return r.height


def validate_chain(chain: Chain, params: ProtocolParams) -> bool:
    return chain_violation(chain, params) is None


# ---------------------------------------------------------------------------
# Fork choice


def selection_key(chain: Chain) -> tuple:
    """Larger key wins. Orders by series count, incomplete k-set size, lower
    last series hash, then the k-set whose sorted hashes are lexicographically
    smallest (its minimum hash first); sub-chain assignment breaks the final
    tie so the order is total."""
    part = sorted(chain.partial, key=lambda b: (b.hash, b.subchain))
    return (
        chain.height,
        len(part),
        -chain.tip.hash,
        tuple(-b.hash for b in part),
        tuple(-b.subchain for b in part),
    )


def max_valid(chains: Iterable[Chain], params: ProtocolParams, validate: bool = True) -> Chain:
    best = None
    best_key = None
    for c in chains:
        if validate and not validate_chain(c, params):
            continue
        key = selection_key(c)
        if best is None or key > best_key:
            best, best_key = c, key
    if best is None:
        raise ValueError("no valid chain among the candidates")
    return best


class ForkClass(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"


def classify_fork(fork_tip: Chain, honest_views: Iterable[Chain]) -> ForkClass:
    """Public iff the fork's last series block lies on some honest party's
    current selection."""
    target = fork_tip.round
    for view in honest_views:
        if view.contains_round(target):
            return ForkClass.PUBLIC
    return ForkClass.PRIVATE


def transaction_order(chain: Chain) -> list[int]:
    return [t.id for b in chain.blocks() for t in b.txs]


# ---------------------------------------------------------------------------
# JSON-lines dump


def _hx(x: int, width: int = 64) -> str:
    return format(x, f"0{width}x")


def block_to_json(block: Block, height: int) -> dict:
    proof = block.merkle_proof
    return {
        "kind": block.kind,
        "height": height,
        "subchain": block.subchain,
        "hash": _hx(block.hash),
        "top": [_hx(x) for x in block.top],
        "cites": [[_hx(h), s] for h, s in block.cites],
        "merkle_root": _hx(block.merkle_root),
        "leaf": _hx(block.leaf),
        "merkle_proof": None
        if proof is None
        else {"branch_index": proof.branch_index, "off_path": [_hx(x) for x in proof.off_path]},
        "nonce": _hx(block.nonce, 16),
        "miner": block.miner,
        "minted_at": block.minted_at,
        "txs": [t.blob.hex() for t in block.txs],
    }


def block_from_json(d: dict) -> Block:
    proof = d["merkle_proof"]
    return Block(
        d["kind"],
        tuple(int(x, 16) for x in d["top"]),
        int(d["merkle_root"], 16),
        int(d["nonce"], 16),
        int(d["hash"], 16),
        d["subchain"],
        None if proof is None else MerkleProof(proof["branch_index"], tuple(int(x, 16) for x in proof["off_path"])),
        tuple(decode_tx(bytes.fromhex(t)) for t in d["txs"]),
        d["miner"],
        d["minted_at"],
        int(d["leaf"], 16),
        tuple((int(h, 16), s) for h, s in d["cites"]),
    )


def dump_chain(chain: Chain) -> Iterator[str]:
    """One JSON object per block, canonical order, genesis first."""
    for r in chain.rounds():
        for b in r.kset:
            yield json.dumps(block_to_json(b, r.height), sort_keys=True)
        yield json.dumps(block_to_json(r.series, r.height), sort_keys=True)
    for b in chain.partial:
        yield json.dumps(block_to_json(b, chain.height + 1), sort_keys=True)


def load_chain(lines: Iterable[str], params: ProtocolParams) -> Chain:
    blocks = [block_from_json(json.loads(line)) for line in lines if line.strip()]
    if not blocks or blocks[0].hash != genesis_block(params).hash:
        raise ValueError("dump does not start with this protocol's genesis block")
    return build_chain(params, blocks[1:])
