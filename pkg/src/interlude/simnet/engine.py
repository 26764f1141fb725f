"""Discrete-event loop driving honest nodes and an optional adversary."""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..chain import PARALLEL, SERIES, Block, Chain, ProtocolParams
from ..crypto import Oracle, ParameterError, target_for_probability
from ..ledger import Transaction, transfer
from ..node import Adversary, Node
from .config import SimConfig

ACCOUNT_BASE = 1 << 32

# event priorities at equal timestamps
P_TX = 0
P_DELIVER = 1
P_MINE = 2

# seed-sequence purposes
_S_MINE, _S_NODE, _S_LATENCY, _S_WORKLOAD, _S_ORACLE = range(5)


class InvariantError(RuntimeError):
    def __init__(self, name: str, detail: str = ""):
        super().__init__(f"invariant violated: {name}" + (f" ({detail})" if detail else ""))
        self.name = name


def sample_mining_time(rng: np.random.Generator, rate: float) -> float:
    """Exponential waiting time with mean 1/rate."""
    if not rate > 0:
        raise ParameterError("mining rate must be positive")
    return float(rng.exponential(1.0 / rate))


def _stream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, purpose, index]))


class Latency:
    """Per-receiver delivery delay, always within [0, delta]."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rngs = [_stream(cfg.seed, _S_LATENCY, q) for q in range(cfg.n)]
        self.fast = cfg.fast_parties

    def __call__(self, receiver: int) -> float:
        cfg = self.cfg
        if cfg.delta == 0:
            return 0.0
        if cfg.latency == "uniform":
            return float(self.rngs[receiver].uniform(0.0, cfg.delta))
        if cfg.latency == "fixed":
            return cfg.delta
        return cfg.d_fast if receiver in self.fast else cfg.slow_latency


def deliver(cfg: SimConfig, latency: Latency, sender: int, now: float) -> list[tuple[float, int]]:
    """Delivery times for a broadcast from ``sender`` to every other honest party."""
    return [(now + latency(q), q) for q in range(cfg.n) if q != sender]


@dataclass
class PowRecord:
    party: int
    kind: str
    time: float
    hash: int
    role: str


@dataclass
class TxRecord:
    tx: Transaction
    submitted: float
    receipts: dict[int, float] = field(default_factory=dict)


@dataclass
class SimResult:
    config: SimConfig
    params: ProtocolParams
    nodes: list[Node]
    adversary: Adversary | None
    final_views: list[Chain]
    end_time: float
    pow_records: list[PowRecord]
    created: list[tuple[int, float, Block]]
    txs: dict[int, TxRecord]
    accept_time: dict[int, dict[tuple[int, int], float]]
    tx_accept: dict[int, dict[int, float]]
    adopted_series: set[int]
    series_mined: dict[int, Block]
    bytes_by_bucket: dict[int, int]
    deliveries_by_bucket: dict[int, int]
    mined_by_bucket: dict[int, list[int]]
    dropped_invalid: int
    trace: list[dict] | None

    @property
    def final_chain(self) -> Chain:
        return self.final_views[0]


class Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        k = cfg.k
        allocation = {ACCOUNT_BASE + i: cfg.initial_balance for i in range(cfg.accounts)} if cfg.tx_rate > 0 else {}
        oracle_seed = int(_stream(cfg.seed, _S_ORACLE).integers(0, 1 << 63))
        self.params = ProtocolParams(
            k=k,
            oracle=Oracle(oracle_seed),
            target_parallel=target_for_probability(1 / cfg.parallel_difficulty),
            target_series=target_for_probability(1 / cfg.series_difficulty),
            genesis_balances=allocation,
            reward_parallel=cfg.reward_parallel,
            reward_series=cfg.reward_series,
            fee_cap=cfg.fee_cap,
            block_capacity=cfg.block_capacity,
        )
        self.shares = cfg.party_shares
        self.nodes: list[Node] = [Node(p, self.params, _stream(cfg.seed, _S_NODE, p)) for p in range(cfg.n)]
        self.adv_id = cfg.n
        adv_power = sum(self.shares[cfg.n :])
        self.adversary = Adversary(self.adv_id, self.params, _stream(cfg.seed, _S_NODE, 1 << 20), cfg.adversary_strategy) if adv_power > 0 else None
        self.rates = list(self.shares[: cfg.n]) + ([adv_power] if self.adversary else [])
        self.mine_rngs = [_stream(cfg.seed, _S_MINE, p) for p in range(cfg.n)] + [_stream(cfg.seed, _S_MINE, 1 << 20)]
        self.workload = _stream(cfg.seed, _S_WORKLOAD)
        self.latency = Latency(cfg)
        self.lam = cfg.parallel_rate
        self.queue: list = []
        self.seq = 0
        self.now = 0.0
        self.stopped = False
        self.next_tx_id = 1
        self.mine_tok = defaultdict(int)
        self.mine_kind: dict[int, str | None] = defaultdict(lambda: None)
        self.mine_pending: dict[int, bool] = defaultdict(bool)
        self.kappas = cfg.all_kappas
        self.accept_time: dict[int, dict[tuple[int, int], float]] = {kap: {} for kap in self.kappas}
        self.accepted_rounds: dict[int, set[int]] = {kap: set() for kap in self.kappas}
        self.tx_accept: dict[int, dict[int, float]] = {kap: {} for kap in self.kappas}
        self.pow_records: list[PowRecord] = []
        self.created: list[tuple[int, float, Block]] = []
        self.txs: dict[int, TxRecord] = {}
        self.adopted_series: set[int] = {self.nodes[0].best}
        self.series_mined: dict[int, Block] = {}
        self.bytes_by_bucket: dict[int, int] = defaultdict(int)
        self.deliveries_by_bucket: dict[int, int] = defaultdict(int)
        self.mined_by_bucket: dict[int, list[int]] = defaultdict(lambda: [0, 0])
        self.trace: list[dict] | None = [] if cfg.trace else None

    # -- queue ------------------------------------------------------------------

    def _push(self, t: float, prio: int, party: int, payload: tuple) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (t, prio, party, self.seq, payload))

    def _log(self, event: str, party: int, block: Block | None = None, chain_len: int | None = None) -> None:
        if self.trace is not None:
            self.trace.append(
                {
                    "time": self.now,
                    "event": event,
                    "party": party,
                    "block_hash": None if block is None else format(block.hash, "064x"),
                    "chain_len": chain_len,
                }
            )

    def _bucket(self, t: float) -> int:
        return int(t // self.cfg.bucket_seconds)

    # -- mining -------------------------------------------------------------------

    def _node(self, p: int) -> Node:
        return self.adversary if p == self.adv_id else self.nodes[p]

    def _schedule(self, p: int, t: float) -> None:
        if self.stopped:
            return
        kind = self._node(p).mode
        if self.mine_pending[p] and self.mine_kind[p] == kind:
            return
        self.mine_tok[p] += 1
        self.mine_kind[p] = kind
        rate = self.rates[p] * (self.lam if kind == PARALLEL else self.cfg.beta)
        if rate <= 0:
            self.mine_pending[p] = False
            return
        dt = sample_mining_time(self.mine_rngs[p], rate)
        self.mine_pending[p] = True
        self._push(t + dt, P_MINE, p, ("mine", self.mine_tok[p], kind))

    def _on_mine(self, p: int, tok: int, kind: str) -> None:
        if tok != self.mine_tok[p]:
            return
        self.mine_pending[p] = False
        if self.stopped:
            return
        node = self._node(p)
        old_best = node.best
        b = node.on_pow_success(kind, self.now)
        if b is not None:
            role = node.role
            self.pow_records.append(PowRecord(p, kind, self.now, b.hash, role))
            self.mined_by_bucket[self._bucket(self.now)][0 if kind == PARALLEL else 1] += 1
            if kind == SERIES:
                self.series_mined[b.hash] = b
            self._log("mine_" + kind, p, b, node.height)
            if p != self.adv_id:
                self.created.append((p, self.now, b))
                self._broadcast(p, [b], node.view)
                if node.best != old_best:
                    self._on_tip_change(p)
        self._schedule(p, self.now)

    # -- network --------------------------------------------------------------------

    def _broadcast(self, sender: int, blocks: list[Block], chain: Chain) -> None:
        cfg = self.cfg
        payload = ("blocks", tuple(blocks), chain)
        if sender == self.adv_id:
            for q in range(cfg.n):
                self._push(self.now + cfg.adversary_latency, P_DELIVER, q, payload)
            return
        for t, q in deliver(cfg, self.latency, sender, self.now):
            if cfg.check_invariants and not (self.now <= t <= self.now + cfg.delta):
                raise InvariantError("bounded delay", f"latency {t - self.now} exceeds {cfg.delta}")
            self._push(t, P_DELIVER, q, payload)
        if self.adversary is not None:
            self._push(self.now, P_DELIVER, self.adv_id, payload)

    def _on_blocks(self, q: int, blocks: tuple[Block, ...], chain: Chain) -> None:
        b_idx = self._bucket(self.now)
        self.deliveries_by_bucket[b_idx] += len(blocks)
        self.bytes_by_bucket[b_idx] += len(blocks) * self.cfg.block_bytes
        node = self._node(q)
        if q == self.adv_id:
            node.receive(blocks, chain, self.now)
            self._adversary_react()
            return
        old_best = node.best
        upd = node.receive(blocks, chain, self.now)
        for b in upd.relocated:
            self.created.append((q, self.now, b))
            self._log("relocate", q, b, node.height)
            self._broadcast(q, [b], node.view)
        if upd.view_changed:
            if self.cfg.relay:
                self._broadcast(q, list(blocks), node.view)
            self._schedule(q, self.now)
        if node.best != old_best:
            self._on_tip_change(q)

    def _adversary_react(self) -> None:
        adv = self.adversary
        released, carrier = adv.adversary_step()
        if released:
            adv.receive(released, carrier, self.now)
            adv._public_len = adv.view.block_length(self.cfg.k)
            for b in released:
                self._log("release", self.adv_id, b, carrier.height)
            self._broadcast(self.adv_id, released, carrier)
        self._schedule(self.adv_id, self.now)

    def _on_tx(self) -> None:
        cfg = self.cfg
        rng = self.workload
        if not self.stopped:
            sender = int(rng.integers(cfg.accounts))
            receiver = int(rng.integers(cfg.accounts - 1))
            receiver += receiver >= sender
            amount = int(rng.integers(1, 1000))
            fee = int(rng.integers(0, cfg.fee_max + 1))
            tx = transfer(self.next_tx_id, ACCOUNT_BASE + sender, ACCOUNT_BASE + receiver, amount, fee)
            self.next_tx_id += 1
            self.txs[tx.id] = TxRecord(tx, self.now)
            for t, q in deliver(cfg, self.latency, -1, self.now):
                self._push(t, P_TX, q, ("tx", tx))
            self._push(self.now + float(rng.exponential(1 / cfg.tx_rate)), P_TX, -1, ("txgen",))

    # -- per-view bookkeeping --------------------------------------------------------------

    def _on_tip_change(self, q: int) -> None:
        node = self.nodes[q]
        self.adopted_series.add(node.best)
        self._log("adopt", q, node.rounds[node.best].series, node.height)
        if self.cfg.check_invariants:
            self._check_public_lengths(q)
        self._evaluate_acceptance(q)
        if node.height >= self.cfg.rounds or self.now >= self.cfg.horizon:
            self.stopped = True

    def _check_public_lengths(self, q: int) -> None:
        """Two honest selections each party knows about must have equal length."""
        node = self.nodes[q]
        for other in self.nodes:
            if other is node:
                continue
            if other.knows(node.best) and node.knows(other.best) and other.height != node.height:
                raise InvariantError(
                    "public fork length equality",
                    f"parties {q} and {other.party} select heights {node.height} and {other.height}",
                )

    def _evaluate_acceptance(self, q: int) -> None:
        node = self.nodes[q]
        tip = node.rounds[node.best]
        H = tip.height
        leaves = list(node.leaves.values())
        for kap in self.kappas:
            done_rounds = self.accepted_rounds[kap]
            times = self.accept_time[kap]
            j = H - kap
            if j < 1:
                continue
            r = tip.ancestor(j)
            while r.parent is not None and r.series.hash not in done_rounds:
                anchor_h = r.height - 1
                c_prime = {b.key: anchor_h for b in r.kset}
                c_prime[r.series.key] = anchor_h
                for leaf in leaves:
                    if leaf.height <= anchor_h:
                        continue
                    x = leaf.ancestor(r.height)
                    if x.parent is not r.parent:
                        for key in c_prime:
                            if leaf.height > c_prime[key]:
                                c_prime[key] = leaf.height
                        continue
                    keep = {b.key for b in x.kset}
                    if x is r:
                        keep.add(r.series.key)
                    for key in c_prime:
                        if key not in keep and leaf.height > c_prime[key]:
                            c_prime[key] = leaf.height
                all_ok = True
                for b in r.kset + (r.series,):
                    if H - c_prime[b.key] > kap:
                        if b.key not in times:
                            times[b.key] = self.now
                            acc = self.tx_accept[kap]
                            for tx in b.txs:
                                acc.setdefault(tx.id, self.now)
                    else:
                        all_ok = False
                if all_ok:
                    done_rounds.add(r.series.hash)
                r = r.parent

    # -- main loop ----------------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.cfg
        for p in range(cfg.n):
            self._schedule(p, 0.0)
        if self.adversary is not None:
            self._schedule(self.adv_id, 0.0)
        if cfg.tx_rate > 0:
            self._push(float(self.workload.exponential(1 / cfg.tx_rate)), P_TX, -1, ("txgen",))
        last = 0.0
        while self.queue:
            t, prio, party, _, payload = heapq.heappop(self.queue)
            if self.stopped and payload[0] == "mine":
                continue  # stale puzzles past the stop would only stretch the clock
            if cfg.check_invariants and t < last:
                raise InvariantError("event causality", f"event at {t} after {last}")
            last = t
            self.now = t
            if not self.stopped and t >= cfg.horizon:
                self.stopped = True
            kind = payload[0]
            if kind == "blocks":
                self._on_blocks(party, payload[1], payload[2])
            elif kind == "mine":
                self._on_mine(party, payload[1], payload[2])
            elif kind == "tx":
                self.txs[payload[1].id].receipts[party] = t
                self.nodes[party].add_transaction(payload[1])
            elif kind == "txgen":
                self._on_tx()
        finals = [nd.view for nd in self.nodes]
        if cfg.check_invariants:
            heights = {v.height for v in finals}
            if len(heights) != 1:
                raise InvariantError("public fork length equality at quiescence", f"heights {sorted(heights)}")
        return SimResult(
            config=cfg,
            params=self.params,
            nodes=self.nodes,
            adversary=self.adversary,
            final_views=finals,
            end_time=self.now,
            pow_records=self.pow_records,
            created=self.created,
            txs=self.txs,
            accept_time=self.accept_time,
            tx_accept=self.tx_accept,
            adopted_series=self.adopted_series,
            series_mined=self.series_mined,
            bytes_by_bucket=dict(self.bytes_by_bucket),
            deliveries_by_bucket=dict(self.deliveries_by_bucket),
            mined_by_bucket={b: tuple(v) for b, v in self.mined_by_bucket.items()},
            dropped_invalid=sum(nd.dropped_invalid for nd in self.nodes),
            trace=self.trace,
        )


def simulate(cfg: SimConfig) -> SimResult:
    return Simulation(cfg).run()
