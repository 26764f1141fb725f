"""Run summaries: throughput, inclusion, confirmation delay, forks,
frontrunning, reversals and per-block utility."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ..analysis.formulas import FairnessParams, frontrunning_bound, throughput_best_case, time_to_finality
from ..chain import PARALLEL, SERIES, ForkClass
from .config import SimConfig
from .engine import SimResult, _stream, simulate

CSV_VERSION = 1
CSV_MAGIC = f"# interlude-metrics-csv v{CSV_VERSION}"
CSV_HEADER = (
    "bucket",
    "t_start",
    "t_end",
    "parallel_mined",
    "series_mined",
    "block_deliveries",
    "block_bytes",
    "tx_bytes",
    "total_bytes",
)

_S_UTILITY = 17


def _mean_se(xs) -> tuple[float, float, int]:
    a = np.asarray(xs, dtype=float)
    n = a.size
    if n == 0:
        return math.nan, math.nan, 0
    se = float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return float(a.mean()), se, n


@dataclass
class DelayStats:
    kappa: int
    accepted_txs: int
    mean_from_inclusion: float
    mean_from_submission: float
    accepted_blocks: int
    mean_block_delay: float
    late_txs: int


@dataclass
class PfEstimate:
    value: float
    se: float  # clustered by block: txs sharing a block rise or fall together
    se_binomial: float
    transactions: int
    grabbed: int
    grab_share: float
    fast_power: float
    bound: float | None


@dataclass
class UtilityEstimate:
    gamma: float
    honest_mean: float
    honest_se: float
    honest_blocks: int
    deviant_mean: float
    deviant_se: float
    deviant_blocks: int


@dataclass
class MetricsReport:
    seed: int
    k: int
    n: int
    m: int
    adversary_power: float
    height: int
    sim_time: float
    blocks_mined: dict[str, int]
    blocks_accepted: dict[str, int]
    inclusion_rate: float
    contested_inclusion_rate: float
    contested_blocks: int
    block_throughput: float
    block_throughput_formula: float
    tx_throughput: float
    mean_round_s: float
    finality_formula_s: float
    txs_submitted: int
    txs_included: int
    delays: list[DelayStats]
    reversals: dict[int, int]
    accepted_txs: dict[int, int]
    forks: dict[str, int]
    relocations: int
    abandoned: int
    dropped_invalid: int
    pf: PfEstimate | None
    utility: UtilityEstimate
    warnings: list[str]
    buckets: list[tuple] = field(repr=False, default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("buckets")
        d["reversals"] = {str(k): v for k, v in self.reversals.items()}
        d["accepted_txs"] = {str(k): v for k, v in self.accepted_txs.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(finite_json(self.summary()), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_MAGIC + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.buckets:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()

    def delay(self, kappa: int) -> DelayStats:
        return next(d for d in self.delays if d.kappa == kappa)


def finite_json(x):
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: finite_json(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [finite_json(v) for v in x]
    return x


# ---------------------------------------------------------------------------
# individual measurements


def final_tx_ids(result: SimResult) -> list[set[int]]:
    return [{t.id for b in view.blocks() for t in b.txs} for view in result.final_views]


def pow_times(result: SimResult) -> dict[int, float]:
    """Earliest proof-of-work time per block hash."""
    out: dict[int, float] = {}
    for rec in result.pow_records:
        out.setdefault(rec.hash, rec.time)
    return out


def measure_reversals(result: SimResult) -> tuple[dict[int, int], dict[int, int]]:
    """Per kappa: (accepted tx count, accepted txs absent from every honest
    final view)."""
    present = set.union(*final_tx_ids(result))
    accepted = {kap: len(acc) for kap, acc in result.tx_accept.items()}
    reversed_ = {kap: sum(1 for t in acc if t not in present) for kap, acc in result.tx_accept.items()}
    return accepted, reversed_


def measure_delays(result: SimResult) -> list[DelayStats]:
    cfg = result.config
    chain = result.final_chain
    pt = pow_times(result)
    placed: dict[int, tuple] = {}
    for r in chain.rounds()[1:]:
        for b in r.kset + (r.series,):
            for t in b.txs:
                placed[t.id] = b
    limit = time_to_finality(cfg.kappa, cfg.beta, cfg.delta) + 5 * cfg.delta
    out = []
    for kap in cfg.all_kappas:
        times = result.accept_time[kap]
        from_inc, from_sub = [], []
        late = 0
        for tid, b in placed.items():
            at = times.get(b.key)
            if at is None:
                continue
            from_inc.append(at - pt.get(b.hash, b.minted_at))
            if tid in result.txs:
                d = at - result.txs[tid].submitted
                from_sub.append(d)
                late += kap == cfg.kappa and d > limit
        blocks = [times[b.key] - pt.get(b.hash, b.minted_at) for r in chain.rounds()[1:] for b in r.kset + (r.series,) if b.key in times]
        out.append(
            DelayStats(
                kappa=kap,
                accepted_txs=len(from_inc),
                mean_from_inclusion=float(np.mean(from_inc)) if from_inc else math.nan,
                mean_from_submission=float(np.mean(from_sub)) if from_sub else math.nan,
                accepted_blocks=len(blocks),
                mean_block_delay=float(np.mean(blocks)) if blocks else math.nan,
                late_txs=int(late),
            )
        )
    return out


def _ratio_se(clusters: list[tuple[int, int]], value: float, total: int) -> float:
    """Standard error of sum(g)/sum(n) treating each (g, n) cluster as one draw."""
    c = len(clusters)
    if c < 2 or not total:
        return math.nan
    ss = sum((g - value * n) ** 2 for g, n in clusters)
    return math.sqrt(c / (c - 1) * ss) / total


def measure_pf(result: SimResult, m_pct: float = 0.5) -> PfEstimate:
    """Fraction of final-chain transactions placed by a fast party in a block
    whose proof of work predates the last slow party's receipt."""
    cfg = result.config
    fast = cfg.fast_parties if cfg.latency == "fairness" else frozenset()
    slow = [q for q in range(cfg.n) if q not in fast]
    pt = pow_times(result)
    grabbed = 0
    by_fast = 0
    total = 0
    per_block: list[tuple[int, int]] = []
    for b in result.final_chain.blocks():
        if not b.txs:
            continue
        t_b = pt.get(b.hash, b.minted_at)
        g_b = n_b = 0
        for tx in b.txs:
            rec = result.txs.get(tx.id)
            if rec is None or any(q not in rec.receipts for q in slow):
                continue
            n_b += 1
            if b.miner in fast:
                by_fast += 1
                if t_b < max(rec.receipts[q] for q in slow):
                    g_b += 1
        if n_b:
            per_block.append((g_b, n_b))
            grabbed += g_b
            total += n_b
    value = grabbed / total if total else math.nan
    se_bin = math.sqrt(value * (1 - value) / total) if total else math.nan
    se = _ratio_se(per_block, value, total)
    sh = cfg.party_shares
    fast_power = sum(sh[p] for p in fast)
    bound = None
    if fast and cfg.beta * cfg.delta < 1:
        d = cfg.slow_latency - cfg.d_fast
        bound = frontrunning_bound(FairnessParams(fast_power, m_pct, d, cfg.beta, cfg.delta))
    return PfEstimate(value, se, se_bin, total, grabbed, by_fast / total if total else math.nan, fast_power, bound)


def measure_utility(result: SimResult) -> UtilityEstimate:
    """Realized per-block utility: the block's fee, drawn uniformly from
    [0, fee_max], if the block ends in the final chain, else nothing."""
    cfg = result.config
    gamma = float(cfg.fee_max)
    final = {b.hash for b in result.final_chain.blocks()}
    rng = _stream(cfg.seed, _S_UTILITY)
    honest, deviant = [], []
    adv = cfg.n
    for rec in result.pow_records:
        u = float(rng.uniform(0.0, gamma)) * (rec.hash in final)
        (deviant if rec.party == adv else honest).append(u)
    hm, hs, hn = _mean_se(honest)
    dm, ds, dn = _mean_se(deviant)
    return UtilityEstimate(gamma, hm, hs, hn, dm, ds, dn)


def count_forks(result: SimResult) -> dict[str, int]:
    """Series blocks off the final chain, public if some honest party ever
    selected them and private otherwise."""
    on_chain = {r.series.hash for r in result.final_chain.rounds()}
    out = {ForkClass.PUBLIC.value: 0, ForkClass.PRIVATE.value: 0}
    for h in result.series_mined:
        if h in on_chain:
            continue
        cls = ForkClass.PUBLIC if h in result.adopted_series else ForkClass.PRIVATE
        out[cls.value] += 1
    return out


def contested_inclusion(result: SimResult) -> tuple[float, int]:
    """Inclusion rate among honest parallel blocks mined on the same anchor
    within delta of another honest parallel block."""
    cfg = result.config
    final = {b.hash for b in result.final_chain.blocks()}
    by_anchor: dict[int, list[tuple[float, int]]] = defaultdict(list)
    seen = set()
    for _, _, b in result.created:
        if b.kind != PARALLEL or b.hash in seen:
            continue
        seen.add(b.hash)
        by_anchor[b.top[0]].append((b.minted_at, b.hash))
    hits = total = 0
    for items in by_anchor.values():
        items.sort()
        for j, (t, h) in enumerate(items):
            near = (j > 0 and t - items[j - 1][0] <= cfg.delta) or (j + 1 < len(items) and items[j + 1][0] - t <= cfg.delta)
            if near:
                total += 1
                hits += h in final
    return (hits / total if total else math.nan), total


def bucket_rows(result: SimResult) -> list[tuple]:
    cfg = result.config
    w = cfg.bucket_seconds
    last = int(result.end_time // w)
    rows = []
    for b in range(last + 1):
        par, ser = result.mined_by_bucket.get(b, (0, 0))
        dl = result.deliveries_by_bucket.get(b, 0)
        by = result.bytes_by_bucket.get(b, 0)
        rows.append((b, b * w, (b + 1) * w, par, ser, dl, by, by, 2 * by))
    return rows


# ---------------------------------------------------------------------------


def build_report(result: SimResult, with_pf: bool | None = None) -> MetricsReport:
    cfg = result.config
    chain = result.final_chain
    rounds = chain.rounds()
    H = chain.height
    final_hashes = {b.hash for b in chain.blocks()}

    mined = {PARALLEL: 0, SERIES: 0}
    accepted = {PARALLEL: 0, SERIES: 0}
    honest_parallel = set()
    for rec in result.pow_records:
        mined[rec.kind] += 1
        accepted[rec.kind] += rec.hash in final_hashes
        if rec.kind == PARALLEL and rec.party < cfg.n:
            honest_parallel.add(rec.hash)
    inclusion = sum(h in final_hashes for h in honest_parallel) / len(honest_parallel) if honest_parallel else math.nan
    contested, n_contested = contested_inclusion(result)

    t_last = rounds[-1].series.minted_at if H else 0.0
    block_tp = H * (cfg.k + 1) / t_last if t_last > 0 else 0.0
    n_tx_chain = sum(len(b.txs) for r in rounds for b in r.kset + (r.series,))
    tx_tp = n_tx_chain / t_last if t_last > 0 else 0.0
    round_s = t_last / H if H else math.nan

    acc_counts, revs = measure_reversals(result)
    if with_pf is None:
        with_pf = cfg.latency == "fairness"
    nodes = result.nodes
    return MetricsReport(
        seed=cfg.seed,
        k=cfg.k,
        n=cfg.n,
        m=cfg.m,
        adversary_power=cfg.adversary_power,
        height=H,
        sim_time=result.end_time,
        blocks_mined=mined,
        blocks_accepted=accepted,
        inclusion_rate=inclusion,
        contested_inclusion_rate=contested,
        contested_blocks=n_contested,
        block_throughput=block_tp,
        block_throughput_formula=throughput_best_case(cfg.beta, cfg.delta, cfg.k),
        tx_throughput=tx_tp,
        mean_round_s=round_s,
        finality_formula_s=time_to_finality(cfg.kappa, cfg.beta, cfg.delta),
        txs_submitted=len(result.txs),
        txs_included=n_tx_chain,
        delays=measure_delays(result),
        reversals=revs,
        accepted_txs=acc_counts,
        forks=count_forks(result),
        relocations=sum(nd.relocations for nd in nodes),
        abandoned=sum(nd.abandoned for nd in nodes),
        dropped_invalid=result.dropped_invalid,
        pf=measure_pf(result) if with_pf else None,
        utility=measure_utility(result),
        warnings=cfg.warnings(),
        buckets=bucket_rows(result),
    )


def run_simulation(cfg: SimConfig) -> tuple[MetricsReport, SimResult]:
    result = simulate(cfg)
    return build_report(result), result


@dataclass
class SafetyPoint:
    adversary_power: float
    kappa: int
    accepted: int
    reversals: int

    @property
    def frequency(self) -> float:
        return self.reversals / self.accepted if self.accepted else math.nan


def measure_safety(base: SimConfig, powers, kappa: int | None = None) -> list[SafetyPoint]:
    """Reversal counts at each adversary power; power 0 runs honest-only."""
    kap = base.kappa if kappa is None else kappa
    out = []
    for a in powers:
        cfg = base.with_(adversary_power=a, m=max(base.m, 1) if a > 0 else 0, kappa=kap, shares=None)
        result = simulate(cfg)
        acc, rev = measure_reversals(result)
        out.append(SafetyPoint(a, kap, acc[kap], rev[kap]))
    return out
