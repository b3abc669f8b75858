import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import FIXTURES
from mudtools import canonical as cn
from mudtools import mud
from mudtools.canonical import Box, GroupKey, Rule

G = GroupKey(cn.FROM_DEVICE, cn.DEVICE, "server.example.com")
TCP = (6, 6)


def tcp(sport, dport, group=G):
    return Rule(group, Box(TCP, sport, dport))


SPLIT_A = [tcp((0, 9), (0, 19)), tcp((5, 14), (10, 29)), tcp((0, 9), (5, 15)), tcp((5, 14), (20, 29))]
SPLIT_B = [tcp((0, 4), (0, 19)), tcp((5, 9), (0, 9)), tcp((5, 9), (10, 29)), tcp((10, 14), (10, 19)), tcp((10, 14), (20, 29))]


def grid(rules, n=32):
    """Accepted (sport, dport) cells for the TCP slice of group G."""
    return {
        (s, d) for s in range(n) for d in range(n)
        if any(r.group == G and r.box.contains(6, s, d) for r in rules)
    }


# --------------------------------------------------------------------------- canonicalize


def test_two_decompositions_agree():
    assert grid(SPLIT_A) == grid(SPLIT_B)
    assert cn.canonicalize(SPLIT_A) == cn.canonicalize(SPLIT_B)
    assert grid(cn.canonicalize(SPLIT_A).rules()) == grid(SPLIT_A)


def test_split_profiles_agree():
    a = mud.parse((FIXTURES / "split_a.json").read_text())
    b = mud.parse((FIXTURES / "split_b.json").read_text())
    assert cn.equivalent(cn.policy_of(a), cn.policy_of(b))


def test_split_canonical_boxes():
    # sport slabs 0-4, 5-9, 10-14 with their merged dport intervals
    assert cn.canonicalize(SPLIT_A).boxes(G) == (
        Box(TCP, (0, 4), (0, 19)),
        Box(TCP, (5, 9), (0, 29)),
        Box(TCP, (10, 14), (10, 29)),
    )


def test_single_rule_is_its_own_canonical_form():
    r = tcp((3, 7), (100, 200))
    assert cn.canonicalize([r]).rules() == [r]


def test_duplicates_collapse():
    r = tcp((3, 7), (100, 200))
    assert cn.canonicalize([r, r]).rules() == [r]


def test_adjacent_boxes_coalesce():
    assert cn.canonicalize([tcp((0, 4), (0, 9)), tcp((5, 9), (0, 9))]).rules() == [tcp((0, 9), (0, 9))]


def test_drop_rules_rejected():
    with pytest.raises(cn.OverlappingActionConflict):
        cn.canonicalize([Rule(G, Box(), "drop")])


def test_canonical_json_dump():
    dump = cn.canonicalize([tcp((0, 0), (53, 53))]).to_json()
    assert dump == {"from-device/device/server.example.com/0x0800": [{"proto": [6, 6], "sport": [0, 0], "dport": [53, 53]}]}


def test_group_key_direction_consistency():
    with pytest.raises(ValueError):
        GroupKey(cn.FROM_DEVICE, "x.example", cn.DEVICE)


def test_box_bounds():
    with pytest.raises(ValueError):
        Box((0, 256))
    with pytest.raises(ValueError):
        Box(TCP, (5, 4))


# --------------------------------------------------------------------------- equivalence


def test_equivalent_reflexive():
    assert cn.equivalent(SPLIT_A, SPLIT_A)


def test_dropping_a_needed_rule_breaks_equivalence():
    smaller = SPLIT_B[:-1]
    witness = grid(SPLIT_B) - grid(smaller)
    assert witness  # e.g. (10, 20)
    assert not cn.equivalent(SPLIT_B, smaller)


# --------------------------------------------------------------------------- inclusion


DNS = Rule(G, Box((17, 17), cn.PORT_RANGE, (53, 53)))


def test_subset_included():
    x = [tcp(cn.PORT_RANGE, (8777, 8777))]
    assert cn.includes(x, x + [DNS])
    assert not cn.includes(x + [DNS], x)


def test_udp_any_not_included_in_dns_only():
    udp_any = [Rule(G, Box((17, 17)))]
    assert not cn.includes(udp_any, [DNS])
    assert cn.accept_set_member(udp_any, (G, 17, 1000, 80))
    assert not cn.accept_set_member([DNS], (G, 17, 1000, 80))


def test_covering_relation_only_when_requested():
    any_internet = GroupKey(cn.FROM_DEVICE, cn.DEVICE, cn.INTERNET_ANY)
    named = [tcp(cn.PORT_RANGE, (443, 443))]
    wide = [Rule(any_internet, Box(TCP))]
    assert not cn.includes(named, wide)
    assert cn.includes(named, wide, covering=True)
    assert not cn.includes(wide, named, covering=True)


def test_local_network_covers_controller():
    ctl = GroupKey(cn.TO_DEVICE, cn.CONTROLLER, cn.DEVICE)
    local = GroupKey(cn.TO_DEVICE, cn.LOCAL_NETWORK, cn.DEVICE)
    assert cn.group_covers(local, ctl)
    assert not cn.group_covers(ctl, local)
    assert not cn.group_covers(local, ctl, covering=False)


def test_internet_any_does_not_cover_constructs():
    assert not cn.entity_covers(cn.INTERNET_ANY, cn.CONTROLLER)
    assert not cn.entity_covers(cn.INTERNET_ANY, mud.GATEWAY_URN)
    assert cn.entity_covers(cn.ANY, cn.CONTROLLER)


# --------------------------------------------------------------------------- box difference


def cells(boxes, n=10):
    return {(s, d) for s in range(n) for d in range(n) if any(b.contains(6, s, d) for b in boxes)}


def test_difference_with_self_is_empty():
    a = Box(TCP, (0, 9), (0, 9))
    assert cn.box_difference(a, [a]) == []


def test_difference_with_nothing():
    a = Box(TCP, (0, 9), (0, 9))
    assert cn.box_difference(a, []) == [a]


def test_difference_strip():
    a = Box(TCP, (0, 9), (0, 9))
    got = cn.box_difference(a, [Box(TCP, (0, 9), (0, 4))])
    assert got == [Box(TCP, (0, 9), (5, 9))]
    assert cells(got) == cells([a]) - cells([Box(TCP, (0, 9), (0, 4))])


@given(oracles.small_boxes(), st.lists(oracles.small_boxes(), max_size=4))
def test_difference_matches_pointwise(a, cover):
    got = cn.box_difference(a, cover)
    for x, y in itertools.combinations(got, 2):
        assert not x.intersects(y)
    for p in oracles.PROTOS:
        for s in range(oracles.PORT_MAX + 1):
            for d in range(oracles.PORT_MAX + 1):
                want = a.contains(p, s, d) and not any(c.contains(p, s, d) for c in cover)
                assert want == any(b.contains(p, s, d) for b in got)


# --------------------------------------------------------------------------- accept-set oracle


def table1_policy():
    to_cloud = GroupKey(cn.FROM_DEVICE, cn.DEVICE, "tech.carematix.com")
    return [Rule(to_cloud, Box(TCP, cn.PORT_RANGE, (8777, 8777)))], to_cloud


def test_membership_empty_policy():
    assert not cn.accept_set_member([], (G, 6, 1, 1))


def test_membership_table1_flow():
    policy, group = table1_policy()
    assert cn.accept_set_member(policy, (group, 6, 40000, 8777))
    assert not cn.accept_set_member(policy, (group, 6, 40000, 8778))


# --------------------------------------------------------------------------- properties


def canonical_invariants(cp):
    for _key, boxes in cp.groups:
        for x, y in itertools.combinations(boxes, 2):
            assert not x.intersects(y)
        assert list(boxes) == sorted(boxes, key=lambda b: (b.proto[0], b.sport[0], b.dport[0]))


@settings(max_examples=200)
@given(oracles.small_policies(), st.randoms(use_true_random=False))
def test_canonical_form_depends_only_on_accept_set(rules, rnd):
    cp = cn.canonicalize(rules)
    canonical_invariants(cp)
    shuffled = list(rules)
    rnd.shuffle(shuffled)
    duplicated = shuffled + shuffled[: len(shuffled) // 2]
    assert cn.canonicalize(shuffled) == cp
    assert cn.canonicalize(duplicated) == cp
    assert cn.canonicalize(cp.rules()) == cp
    assert oracles.accept_set(cp.rules()) == oracles.accept_set(rules)


@settings(max_examples=200)
@given(oracles.small_policies(4), oracles.small_policies(4))
def test_equivalence_matches_exhaustive(p1, p2):
    assert cn.equivalent(p1, p2) == (oracles.accept_set(p1) == oracles.accept_set(p2))


@settings(max_examples=200)
@given(oracles.small_policies(4), oracles.small_policies(4))
def test_inclusion_matches_exhaustive(p1, p2):
    assert cn.includes(p1, p2) == (oracles.accept_set(p1) <= oracles.accept_set(p2))


def test_equivalent_variants_are_equivalent():
    rng = random.Random(3)
    for _ in range(200):
        p = oracles.random_policy(rng)
        q = oracles.equivalent_variant(rng, p)
        assert oracles.accept_set(p) == oracles.accept_set(q)
        assert cn.equivalent(p, q)


@settings(max_examples=100)
@given(oracles.small_policies(3), oracles.small_policies(3), oracles.small_policies(3))
def test_inclusion_is_a_partial_order(a, b, c):
    assert cn.includes(a, a)
    if cn.includes(a, b) and cn.includes(b, a):
        assert cn.equivalent(a, b)
    if cn.includes(a, b) and cn.includes(b, c):
        assert cn.includes(a, c)
    # union is an upper bound, which exercises transitivity non-vacuously
    assert cn.includes(a, a + b) and cn.includes(a + b, a + b + c) and cn.includes(a, a + b + c)
