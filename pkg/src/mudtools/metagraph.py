"""Conditional metagraphs and the dominance algebra used to audit MUD policies.

A metagraph edge connects an invertex (set of elements) to an outvertex.
In a conditional metagraph the generating set is split into variables
(endpoints here) and propositions (protocol, port ranges, action). Each ACE
of a profile becomes one edge: the source endpoint plus the ACE's
propositions form the invertex, the destination endpoint the outvertex.

Metapaths are grounded: every edge of a metapath must be enabled by the
source set or by outputs of edges fired before it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import canonical as cn

MAX_EDGES = 20


class SearchSpaceTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class Edge:
    invertex: frozenset
    outvertex: frozenset
    label: str = ""
    rule: Optional[cn.Rule] = field(default=None, compare=False)

    @property
    def action(self) -> Optional[str]:
        return self.rule.action if self.rule is not None else None


@dataclass(frozen=True)
class Metagraph:
    generating_set: frozenset
    edges: tuple[Edge, ...] = ()


@dataclass(frozen=True)
class ConditionalMetagraph:
    variables: frozenset
    propositions: frozenset
    edges: tuple[Edge, ...] = ()

    @property
    def generating_set(self) -> frozenset:
        return self.variables | self.propositions

    def edge_index(self, label: str) -> int:
        for i, e in enumerate(self.edges):
            if e.label == label:
                return i
        raise KeyError(label)


@dataclass(frozen=True)
class Metapath:
    source: frozenset
    target: frozenset
    edges: frozenset  # indices into the metagraph's edge tuple


@dataclass(frozen=True)
class DefectReport:
    condition: str
    edge: Optional[int]
    message: str


@dataclass(frozen=True)
class Redundancy:
    ace: str
    witness: tuple[str, ...]


def validate(graph: ConditionalMetagraph | Metagraph) -> list[DefectReport]:
    """Check the structural conditions of a (conditional) metagraph.

    Condition1: some vertex of every edge is non-empty. Condition2: variables
    and propositions are disjoint and each edge's invertex and outvertex are
    disjoint. Condition3: an outvertex holding a proposition holds nothing
    else.
    """
    props = getattr(graph, "propositions", frozenset())
    out: list[DefectReport] = []
    if isinstance(graph, ConditionalMetagraph):
        shared = graph.variables & graph.propositions
        if shared:
            out.append(DefectReport("Condition2", None, f"elements both variable and proposition: {sorted(shared)}"))
    for i, e in enumerate(graph.edges):
        if not (e.invertex | e.outvertex):
            out.append(DefectReport("Condition1", i, "invertex and outvertex are both empty"))
        if e.invertex & e.outvertex:
            out.append(DefectReport("Condition2", i, f"invertex and outvertex share {sorted(e.invertex & e.outvertex)}"))
        if e.outvertex & props and len(e.outvertex) > 1:
            out.append(DefectReport("Condition3", i, "outvertex mixes a proposition with other elements"))
    return out


# --------------------------------------------------------------------------- metapaths


def _fire(graph, source: frozenset, allowed: Iterable[int]) -> tuple[set[int], set]:
    """Least fixpoint: edges from ``allowed`` enabled from ``source``; returns (fired, produced)."""
    reached = set(source)
    produced: set = set()
    pending = set(allowed)
    fired: set[int] = set()
    progress = True
    while progress:
        progress = False
        for i in sorted(pending):
            e = graph.edges[i]
            if e.invertex <= reached:
                pending.discard(i)
                fired.add(i)
                reached |= e.outvertex
                produced |= e.outvertex
                progress = True
    return fired, produced


def is_metapath(graph, source: Iterable, target: Iterable, edges: Iterable[int]) -> bool:
    source, target, edges = frozenset(source), frozenset(target), frozenset(edges)
    if not edges:
        return False
    fired, produced = _fire(graph, source, edges)
    return fired == edges and target <= produced


def metapath_exists(graph, source: Iterable, target: Iterable) -> bool:
    fired, produced = _fire(graph, frozenset(source), range(len(graph.edges)))
    return bool(fired) and frozenset(target) <= produced


def find_metapaths(graph, source: Iterable, target: Iterable, bound: Optional[int] = None) -> list[Metapath]:
    """Every edge set of size <= bound forming a metapath from source to target."""
    n = len(graph.edges)
    if n > MAX_EDGES:
        raise SearchSpaceTooLarge(f"{n} edges exceeds exhaustive limit {MAX_EDGES}")
    source, target = frozenset(source), frozenset(target)
    bound = n if bound is None else min(bound, n)
    found = []
    for size in range(1, bound + 1):
        for combo in itertools.combinations(range(n), size):
            if is_metapath(graph, source, target, combo):
                found.append(Metapath(source, target, frozenset(combo)))
    return found


def is_edge_dominant(graph, mp: Metapath) -> bool:
    edges = sorted(mp.edges)
    if len(edges) > MAX_EDGES:
        raise SearchSpaceTooLarge(f"metapath of {len(edges)} edges")
    for size in range(1, len(edges)):
        for sub in itertools.combinations(edges, size):
            if is_metapath(graph, mp.source, mp.target, sub):
                return False
    return True


def is_input_dominant(graph, mp: Metapath) -> bool:
    # metapath existence is monotone in the source set, so maximal proper subsets suffice
    for x in mp.source:
        if metapath_exists(graph, mp.source - {x}, mp.target):
            return False
    return True


def is_dominant(graph, mp: Metapath) -> bool:
    return is_edge_dominant(graph, mp) and is_input_dominant(graph, mp)


def conflict_set(graph, mp: Metapath) -> frozenset:
    inputs = frozenset().union(*(graph.edges[i].invertex for i in mp.edges)) if mp.edges else frozenset()
    return inputs & graph.propositions


# --------------------------------------------------------------------------- MUD modeling


def _interval(lo: int, hi: int) -> str:
    return str(lo) if lo == hi else f"{lo}-{hi}"


def rule_propositions(rule: cn.Rule) -> frozenset[str]:
    box = rule.box
    props = {f"action={rule.action}"}
    if rule.group.ethertype != cn.ETH_IPV4:
        eth = "*" if rule.group.ethertype == cn.ANY_ETHERTYPE else f"0x{rule.group.ethertype:04x}"
        props.add(f"ethertype={eth}")
        return frozenset(props)
    props.add(f"protocol={_interval(*box.proto)}")
    if box.proto[0] == box.proto[1] and box.proto[0] in (6, 17):
        layer = "TCP" if box.proto[0] == 6 else "UDP"
        props.add(f"{layer}.sport={_interval(*box.sport)}")
        props.add(f"{layer}.dport={_interval(*box.dport)}")
    return frozenset(props)


def endpoint_atoms(entity: str) -> frozenset[str]:
    """Element set for an endpoint; the local network includes the gateway."""
    if entity == cn.LOCAL_NETWORK:
        return frozenset({cn.CONTROLLER, cn.LOCAL_NETWORK})
    return frozenset({entity})


def rule_edge(rule: cn.Rule, label: str) -> Edge:
    props = rule_propositions(rule)
    return Edge(endpoint_atoms(rule.group.src) | props, endpoint_atoms(rule.group.dst), label, rule)


def from_rules(labelled: Iterable[tuple[str, cn.Rule]]) -> ConditionalMetagraph:
    edges = []
    variables = {cn.DEVICE, cn.CONTROLLER, cn.LOCAL_NETWORK, cn.INTERNET_ANY}
    props: set = set()
    for label, rule in labelled:
        rule_props = rule_propositions(rule)
        edge = rule_edge(rule, label)
        variables |= (edge.invertex | edge.outvertex) - rule_props
        props |= rule_props
        edges.append(edge)
    return ConditionalMetagraph(frozenset(variables), frozenset(props), tuple(edges))


def from_mud(profile) -> ConditionalMetagraph:
    """One edge per ACE, labelled with the ACE name."""
    labelled = []
    for direction, acl, ace in profile.directed_aces():
        labelled.append((ace.name, cn.ace_rule(direction, acl, ace)))
    return from_rules(labelled)


# --------------------------------------------------------------------------- consistency


def _overlaps(a: cn.Rule, b: cn.Rule) -> bool:
    related = cn.group_covers(a.group, b.group) or cn.group_covers(b.group, a.group)
    return related and a.box.intersects(b.box)


def find_redundancies(graph: ConditionalMetagraph, bound: int = MAX_EDGES) -> list[Redundancy]:
    """ACEs whose removal leaves the accepted packet set unchanged.

    Edges are examined from last to first against the edges still kept, so
    of two identical ACEs only the later one is reported. An edge is reported
    when the metapath formed with the edges covering it is non-dominant and
    those edges cover its whole match region. Edges are only compared with
    edges of the same action.
    """
    found: dict[int, Redundancy] = {}
    by_action: dict[str, list[int]] = {}
    for i, e in enumerate(graph.edges):
        if e.rule is not None:
            by_action.setdefault(e.rule.action, []).append(i)
    for indices in by_action.values():
        active = set(indices)
        for i in reversed(indices):
            e = graph.edges[i]
            cover = [
                j for j in sorted(active)
                if j != i and cn.group_covers(graph.edges[j].rule.group, e.rule.group)
                and graph.edges[j].rule.box.intersects(e.rule.box)
            ]
            if not cover:
                continue
            if cn.box_difference(e.rule.box, [graph.edges[j].rule.box for j in cover]):
                continue
            members = frozenset([i, *cover])
            if len(members) > bound:
                raise SearchSpaceTooLarge(f"covering set of {len(members)} edges for {e.label!r}")
            source = frozenset().union(*(graph.edges[j].invertex for j in members))
            mp = Metapath(source, e.outvertex, members)
            if is_metapath(graph, mp.source, mp.target, mp.edges) and not is_dominant(graph, mp):
                found[i] = Redundancy(e.label, tuple(graph.edges[j].label for j in cover))
                active.discard(i)
    return [found[i] for i in sorted(found)]


def find_ambiguities(graph: ConditionalMetagraph) -> list[tuple[str, str]]:
    """Pairs of overlapping edges whose joint conflict set holds opposite actions."""
    pairs = []
    for i, j in itertools.combinations(range(len(graph.edges)), 2):
        a, b = graph.edges[i], graph.edges[j]
        if a.rule is None or b.rule is None or a.action == b.action:
            continue
        if not _overlaps(a.rule, b.rule):
            continue
        conflict = conflict_set(graph, Metapath(a.invertex | b.invertex, a.outvertex | b.outvertex, frozenset({i, j})))
        if {f"action={a.action}", f"action={b.action}"} <= conflict:
            pairs.append((a.label, b.label))
    return pairs


# --------------------------------------------------------------------------- export


def to_dot(graph: ConditionalMetagraph, name: str = "metagraph") -> str:
    """Graphviz rendering: one node per distinct variable set, edges labelled with propositions."""
    nodes: dict[frozenset, str] = {}

    def node(elements: frozenset) -> str:
        if elements not in nodes:
            nodes[elements] = f"n{len(nodes)}"
        return nodes[elements]

    lines = []
    for e in graph.edges:
        src = node(e.invertex & graph.variables)
        dst = node(e.outvertex & graph.variables)
        props = ", ".join(sorted(e.invertex & graph.propositions))
        label = f"{e.label}: {{{props}}}" if e.label else f"{{{props}}}"
        lines.append(f'  {src} -> {dst} [label="{_dot_escape(label)}"];')
    header = [f'digraph "{_dot_escape(name)}" {{', "  node [shape=box];"]
    decl = [f'  {nid} [label="{_dot_escape("{" + ", ".join(sorted(els)) + "}")}"];' for els, nid in nodes.items()]
    return "\n".join(header + decl + lines + ["}"]) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')
