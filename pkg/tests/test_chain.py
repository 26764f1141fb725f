from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import full_kset, grow, make_params
from interlude.chain import (
    Chain,
    ForkClass,
    Round,
    build_chain,
    chain_violation,
    classify_fork,
    dump_chain,
    genesis_chain,
    load_chain,
    max_valid,
    mine_parallel,
    mine_series,
    parallel_template,
    publish_parallel,
    selection_key,
    solve_parallel,
    transaction_order,
    validate_chain,
    validate_kset,
)
from interlude.ledger import transfer


def rebuild(chain: Chain, height: int, kset=None, series=None) -> Chain:
    """Copy ``chain`` with round ``height`` replaced, reusing every block above it."""
    rounds = chain.rounds()
    r = rounds[0]
    for old in rounds[1:]:
        if old.height == height:
            r = Round(r, tuple(kset if kset is not None else old.kset), series or old.series)
        else:
            r = Round(r, old.kset, old.series)
    return Chain(r, chain.partial)


# -- k-sets ---------------------------------------------------------------------


def test_empty_partial_kset_is_valid(params):
    assert validate_kset([], params)
    assert not validate_kset([], params, complete=True)


def test_distinct_subchains_and_roots_form_a_valid_kset(params, rng):
    ks = full_kset(params, genesis_chain(params), rng)
    assert validate_kset(ks, params, complete=True)


def test_same_solution_on_two_subchains_is_rejected(params, rng):
    g = genesis_chain(params)
    tpl = parallel_template(params, g.tip.hash, [()] * params.k)
    nonce, h = solve_parallel(params, tpl, rng)
    a = publish_parallel(tpl, nonce, h, 1, 0, 0.0)
    b = publish_parallel(tpl, nonce, h, 2, 0, 0.0)
    assert validate_kset([a], params) and validate_kset([b], params)
    assert not validate_kset([a, b], params)


def test_relocated_block_is_valid_in_its_new_slot(params, rng):
    g = genesis_chain(params)
    sets = [(), (transfer(1, 1, 0, 3),), (), (transfer(2, 3, 0, 4),)]
    tpl = parallel_template(params, g.tip.hash, sets)
    nonce, h = solve_parallel(params, tpl, rng)
    first = publish_parallel(tpl, nonce, h, 1, 0, 0.0)
    moved = publish_parallel(tpl, nonce, h, 3, 0, 5.0)
    assert (moved.hash, moved.nonce, moved.merkle_root) == (first.hash, first.nonce, first.merkle_root)
    assert moved.txs == sets[3]
    rival = mine_parallel(params, g.tip.hash, 1, rng)
    assert validate_kset([rival, moved], params)
    assert validate_chain(g.extend(rival).extend(moved), params)


def test_tampered_branch_is_rejected(params, rng):
    g = genesis_chain(params)
    b = mine_parallel(params, g.tip.hash, 1, rng)
    assert not validate_kset([replace(b, subchain=2)], params)


# -- chain validation -------------------------------------------------------------


def test_genesis_chain_is_valid(params):
    assert validate_chain(genesis_chain(params), params)


def test_built_chain_is_valid_and_prefix_closed(params, chain3):
    assert validate_chain(chain3, params)
    for h in range(chain3.height + 1):
        assert validate_chain(chain3.prefix(h), params)


def test_rule_i_duplicated_subchain(params, chain3):
    r = chain3.round
    ks = list(r.kset)
    ks[1] = replace(ks[1], subchain=ks[0].subchain)
    v = chain_violation(rebuild(chain3, r.height, kset=ks), params)
    assert v.rule == "i"


def test_rule_i_incomplete_kset(params, chain3):
    r = chain3.round
    v = chain_violation(rebuild(chain3, r.height, kset=r.kset[:-1]), params)
    assert v.rule == "i"


def test_rule_ii_series_nonce(params, chain3):
    r = chain3.round
    v = chain_violation(rebuild(chain3, r.height, series=replace(r.series, nonce=r.series.nonce ^ 1)), params)
    assert v.rule == "ii"


def test_rule_iii_kset_on_wrong_series_block(params, chain3, rng):
    r = chain3.round
    stale = full_kset(params, Chain(r.parent.parent), rng)
    series = mine_series(params, stale, rng)
    v = chain_violation(rebuild(chain3, r.height, kset=stale, series=series), params)
    assert v.rule == "iii"


def test_rule_iv_parallel_nonce(params, chain3):
    r = chain3.round
    ks = list(r.kset)
    ks[2] = replace(ks[2], nonce=ks[2].nonce ^ 1)
    v = chain_violation(rebuild(chain3, r.height, kset=ks), params)
    assert v.rule == "iv"


@pytest.mark.parametrize("inner", ["i", "ii", "iv"])
def test_rule_v_invalid_prefix(params, chain3, inner):
    r1 = chain3.rounds()[1]
    ks = list(r1.kset)
    if inner == "i":
        ks[1] = replace(ks[1], subchain=ks[0].subchain)
        bad = rebuild(chain3, 1, kset=ks)
    elif inner == "ii":
        bad = rebuild(chain3, 1, series=replace(r1.series, nonce=r1.series.nonce ^ 1))
    else:
        ks[0] = replace(ks[0], nonce=ks[0].nonce ^ 1)
        bad = rebuild(chain3, 1, kset=ks)
    v = chain_violation(bad, params)
    assert v.rule == "v" and v.cause.rule == inner and v.cause.height == 1
    assert not validate_chain(bad, params)


def test_conflicting_transactions_are_rejected(params, rng):
    g = genesis_chain(params)
    c = grow(params, g, rng, 1, {0: [transfer(1, 0, 1, 600)]})
    c = grow(params, c, rng, 1, {0: [transfer(2, 0, 1, 600)]})
    v = chain_violation(c, params)
    assert v.rule == "ledger"


def test_parallel_block_must_route_by_sender(params, rng):
    g = genesis_chain(params)
    wrong = [(), (transfer(1, 0, 1, 5),), (), ()]
    b = mine_parallel(params, g.tip.hash, 1, rng, wrong)
    assert not validate_kset([b], params)


# -- fork choice ------------------------------------------------------------------


def test_more_series_blocks_win(params, rng):
    g = genesis_chain(params)
    c5, c4 = grow(params, g, rng, 5), grow(params, g, rng, 4)
    assert max_valid([c4, c5], params) is c5


def test_larger_partial_kset_wins(params, rng):
    c = grow(params, genesis_chain(params), rng, 1)
    ks = full_kset(params, c, rng)
    three = c.extend(ks[0]).extend(ks[1]).extend(ks[2])
    two = c.extend(ks[0]).extend(ks[3])
    assert max_valid([two, three], params) is three


def test_lower_last_series_hash_wins(params, rng):
    g = genesis_chain(params)
    a, b = grow(params, g, rng, 2), grow(params, g, rng, 2)
    low = a if a.tip.hash < b.tip.hash else b
    assert max_valid([a, b], params) is low
    assert max_valid([b, a], params) is low


def test_kset_with_least_hash_wins(params, rng):
    c = grow(params, genesis_chain(params), rng, 1)
    x, y = (mine_parallel(params, c.tip.hash, 0, rng) for _ in range(2))
    cx, cy = c.extend(x), c.extend(y)
    winner = cx if x.hash < y.hash else cy
    assert max_valid([cx, cy], params) is winner


def test_invalid_candidates_are_skipped(params, chain3):
    r = chain3.round
    bad = rebuild(chain3, r.height, series=replace(r.series, nonce=r.series.nonce ^ 1))
    assert max_valid([bad, chain3.prefix(1)], params) == chain3.prefix(1)
    with pytest.raises(ValueError):
        max_valid([bad], params)


def _forest(seed: int) -> tuple:
    params = make_params(seed=seed)
    rng = np.random.default_rng(seed)
    g = genesis_chain(params)
    base = grow(params, g, rng, 1)
    out = [g, base]
    for _ in range(3):
        c = grow(params, base, rng, 1)
        ks = full_kset(params, c, rng)
        out += [c, c.extend(ks[0]), c.extend(ks[1]).extend(ks[2])]
    return params, out


FOREST = _forest(3)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(11)), st.permutations(range(11)))
def test_selection_is_order_independent(p1, p2):
    params, chains = FOREST
    a = max_valid([chains[i] for i in p1], params)
    b = max_valid([chains[i] for i in p2], params)
    assert a is b


def test_selection_key_is_total(params):
    _, chains = FOREST
    keys = [selection_key(c) for c in chains]
    assert len(set(keys)) == len(keys)


# -- forks, ordering, dump -------------------------------------------------------


def test_fork_classification(params, rng):
    g = genesis_chain(params)
    honest = grow(params, g, rng, 2)
    private = grow(params, g, rng, 1)
    assert classify_fork(honest.prefix(1), [honest]) is ForkClass.PUBLIC
    assert classify_fork(private, [honest]) is ForkClass.PRIVATE
    assert classify_fork(private, [honest, private]) is ForkClass.PUBLIC


def test_transaction_order_single_round_by_subchain():
    params = make_params(k=2)
    rng = np.random.default_rng(0)
    c = grow(params, genesis_chain(params), rng, 1, {1: [transfer(1, 1, 0, 1)], 0: [transfer(2, 0, 1, 1)]})
    assert transaction_order(c) == [2, 1]


def test_transaction_order_round_major(params, rng):
    c = grow(params, genesis_chain(params), rng, 1, {3: [transfer(9, 3, 0, 1)]})
    c = grow(params, c, rng, 1, {0: [transfer(1, 0, 1, 1)]})
    assert transaction_order(c) == [9, 1]


def test_transaction_order_is_a_permutation(chain3):
    order = transaction_order(chain3)
    ids = [t.id for b in chain3.blocks() for t in b.txs]
    assert len(order) == len(set(order)) and sorted(order) == sorted(ids) == [1, 2, 3, 4]


def test_dump_round_trip(params, chain3, rng):
    ks = full_kset(params, chain3, rng)
    c = chain3.extend(ks[0]).extend(ks[2])
    lines = list(dump_chain(c))
    back = load_chain(lines, params)
    assert back == c and list(dump_chain(back)) == lines
    assert validate_chain(back, params)
    assert build_chain(params, list(c.blocks())) == c
