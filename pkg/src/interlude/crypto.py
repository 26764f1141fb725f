"""Emulated random oracle, Merkle commitments and the umbrella proof of work.

Hash values are plain Python ints in ``[0, 2**256)``. The oracle is a keyed
BLAKE2b over canonical bytes, so runs are reproducible for a given seed while
outputs behave like independent uniform draws.

Canonical byte layout of a proof-of-work input::

    nonce (8 bytes, big-endian) || top links (32 bytes each) || merkle root (32 bytes)
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

HASH_BITS = 256
HASH_BYTES = HASH_BITS // 8
MAX_HASH = (1 << HASH_BITS) - 1

LEAF_TAG = b"\x01leaf"
NODE_TAG = b"\x02node"
LINK_TAG = b"\x03link"

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class ParameterError(ValueError):
    """Raised on out-of-range arguments to the primitives."""


def u32(x: int) -> bytes:
    return _U32.pack(x)


def u64(x: int) -> bytes:
    return _U64.pack(x)


def h2b(h: int) -> bytes:
    """32-byte big-endian encoding of a hash value."""
    return h.to_bytes(HASH_BYTES, "big")


def b2h(b: bytes) -> int:
    return int.from_bytes(b, "big")


class Oracle:
    """Seeded random oracle with optional memo table and per-party rate limit.

    Memoization does not change any value (the keyed PRF is already a pure
    function of its input); the table is kept so that query accounting and
    the rate-limit model match an explicit lookup-table oracle.
    """

    def __init__(self, seed: int = 0, rate_limit_d: float | None = None, memoize: bool = False):
        if not 0 <= seed < 1 << 64:
            raise ParameterError("oracle seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.rate_limit_d = rate_limit_d
        self.memo: dict[bytes, int] | None = {} if memoize else None
        self.last_query_time: dict[int, float] = {}
        self._base = hashlib.blake2b(digest_size=HASH_BYTES, key=u64(seed), person=b"interlude-ro")
        self._empty_trees: dict[int, MerkleTree] = {}
        self._empty_leaves: dict[int, int] = {}

    def __call__(self, data: bytes) -> int:
        if self.memo is not None:
            hit = self.memo.get(data)
            if hit is not None:
                return hit
        h = self._base.copy()
        h.update(data)
        value = int.from_bytes(h.digest(), "big")
        if self.memo is not None:
            self.memo[data] = value
        return value

    def query(self, data: bytes, party: int | None = None, time: float | None = None) -> int | None:
        """Rate-limited query. Returns None when ``party`` asks again within
        ``rate_limit_d`` seconds of its previous query (answered or not)."""
        if self.rate_limit_d is not None and party is not None and time is not None:
            last = self.last_query_time.get(party)
            self.last_query_time[party] = time
            if last is not None and time - last < self.rate_limit_d:
                return None
        return self(data)


def ro_query(oracle: Oracle, party: int, time: float, data: bytes) -> int | None:
    return oracle.query(data, party=party, time=time)


# ---------------------------------------------------------------------------
# Merkle trees over k transaction sets


def tree_depth(k: int) -> int:
    """Number of off-path digests in a proof, ceil(log2 k)."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    return (k - 1).bit_length()


def leaf_bytes(index: int, tx_blobs: Sequence[bytes]) -> bytes:
    """Canonical leaf encoding: tag, sub-chain index, count, then each
    length-prefixed transaction blob. Callers pass blobs already sorted."""
    parts = [LEAF_TAG, u32(index), u32(len(tx_blobs))]
    for blob in tx_blobs:
        parts.append(u32(len(blob)))
        parts.append(blob)
    return b"".join(parts)


def leaf_digest(oracle: Oracle, index: int, tx_blobs: Sequence[bytes] = ()) -> int:
    if not tx_blobs:
        cached = oracle._empty_leaves.get(index)
        if cached is None:
            cached = oracle._empty_leaves[index] = oracle(leaf_bytes(index, ()))
        return cached
    return oracle(leaf_bytes(index, tx_blobs))


def node_digest(oracle: Oracle, left: int, right: int) -> int:
    return oracle(NODE_TAG + h2b(left) + h2b(right))


@dataclass(frozen=True, slots=True)
class MerkleProof:
    branch_index: int
    off_path: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class MerkleTree:
    """Binary tree over ``k`` leaves, padded to the next power of two with
    empty-set digests. ``levels[0]`` are the padded leaves, ``levels[-1]``
    is ``(root,)``."""

    k: int
    levels: tuple[tuple[int, ...], ...]

    @property
    def root(self) -> int:
        return self.levels[-1][0]

    @property
    def leaves(self) -> tuple[int, ...]:
        return self.levels[0][: self.k]


def _empty_tree(oracle: Oracle, k: int) -> MerkleTree:
    tree = oracle._empty_trees.get(k)
    if tree is None:
        width = 1 << tree_depth(k)
        level = [leaf_digest(oracle, i) for i in range(width)]
        levels = [tuple(level)]
        while len(level) > 1:
            level = [node_digest(oracle, level[j], level[j + 1]) for j in range(0, len(level), 2)]
            levels.append(tuple(level))
        tree = oracle._empty_trees[k] = MerkleTree(k, tuple(levels))
    return tree


def merkle_build_leaves(oracle: Oracle, k: int, nonempty: dict[int, int]) -> MerkleTree:
    """Build a tree from the empty tree plus ``{index: leaf digest}`` overrides.
    Only the paths above overridden leaves are rehashed."""
    base = _empty_tree(oracle, k)
    if not nonempty:
        return base
    levels = [list(level) for level in base.levels]
    for i, digest in nonempty.items():
        if not 0 <= i < k:
            raise ParameterError(f"leaf index {i} outside [0, {k})")
        levels[0][i] = digest
    dirty = sorted(nonempty)
    for depth in range(1, len(levels)):
        below = levels[depth - 1]
        parents = sorted({i >> 1 for i in dirty})
        for p in parents:
            levels[depth][p] = node_digest(oracle, below[2 * p], below[2 * p + 1])
        dirty = parents
    return MerkleTree(k, tuple(tuple(level) for level in levels))


def merkle_build(oracle: Oracle, tx_sets: Sequence[Sequence[bytes]], k: int | None = None) -> MerkleTree:
    """Tree over ``k`` transaction sets given as sequences of canonical tx
    blobs. Blobs are sorted inside each set, so set order is irrelevant."""
    if k is not None and len(tx_sets) != k:
        raise ParameterError(f"expected {k} transaction sets, got {len(tx_sets)}")
    if not tx_sets:
        raise ParameterError("need at least one transaction set")
    nonempty = {i: leaf_digest(oracle, i, sorted(s)) for i, s in enumerate(tx_sets) if s}
    return merkle_build_leaves(oracle, len(tx_sets), nonempty)


def merkle_prove(tree: MerkleTree, i: int) -> MerkleProof:
    if not 0 <= i < tree.k:
        raise ParameterError(f"branch index {i} outside [0, {tree.k})")
    off = []
    pos = i
    for level in tree.levels[:-1]:
        off.append(level[pos ^ 1])
        pos >>= 1
    return MerkleProof(i, tuple(off))


def merkle_verify(oracle: Oracle, root: int, leaf: int, proof: MerkleProof, k: int) -> bool:
    if not 0 <= proof.branch_index < k or len(proof.off_path) != tree_depth(k):
        return False
    acc = leaf
    pos = proof.branch_index
    for sibling in proof.off_path:
        acc = node_digest(oracle, sibling, acc) if pos & 1 else node_digest(oracle, acc, sibling)
        pos >>= 1
    return acc == root


# ---------------------------------------------------------------------------
# Umbrella proof of work


def pow_input(nonce: int, top_links: Iterable[int], root: int) -> bytes:
    return u64(nonce) + b"".join(h2b(x) for x in top_links) + h2b(root)


def pow_hash(oracle: Oracle, nonce: int, top_links: Iterable[int], root: int) -> int:
    return oracle(pow_input(nonce, top_links, root))


def umbrella_pow_check(oracle: Oracle, nonce: int, top_links: Sequence[int], root: int, target: int) -> bool:
    return pow_hash(oracle, nonce, top_links, root) <= target


def search_nonce(oracle: Oracle, top_links: Sequence[int], root: int, target: int, rng) -> tuple[int, int]:
    """Draw random 64-bit nonces until one meets ``target``.

    ``rng`` is a ``numpy.random.Generator``. Returns ``(nonce, hash)``."""
    suffix = b"".join(h2b(x) for x in top_links) + h2b(root)
    while True:
        nonce = int(rng.integers(0, 1 << 63)) << 1 | int(rng.integers(0, 2))
        value = oracle(u64(nonce) + suffix)
        if value <= target:
            return nonce, value


def target_for_probability(q: float) -> int:
    """Target whose per-query success probability is ``q``."""
    if not 0 < q <= 1:
        raise ParameterError("success probability must lie in (0, 1]")
    return min(MAX_HASH, int(q * (MAX_HASH + 1)) - 1) if q < 1 else MAX_HASH
