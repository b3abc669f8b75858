"""Canonical form of whitelist policies.

A policy is a list of accept rules, each a :class:`GroupKey` (direction and
endpoints) plus a :class:`Box` over (protocol, source port, destination
port). Within a group the union of boxes is sliced along the protocol axis,
then the source-port axis, with destination ports merged into maximal
intervals. Adjacent slices with identical cross-sections are coalesced, so
the result depends only on the set of accepted packets. Two policies are
equivalent exactly when their canonical forms are equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

Interval = tuple[int, int]

DEVICE = "device"
CONTROLLER = "controller"
LOCAL_NETWORK = "local-network"
INTERNET_ANY = "internet-any"
SAME_MANUFACTURER = "same-manufacturer"
ANY = "*"
RESERVED_ENTITIES = {DEVICE, CONTROLLER, LOCAL_NETWORK, INTERNET_ANY, SAME_MANUFACTURER, ANY}

FROM_DEVICE = "from-device"
TO_DEVICE = "to-device"

ETH_IPV4 = 0x0800
ANY_ETHERTYPE = -1

PROTO_RANGE: Interval = (0, 255)
PORT_RANGE: Interval = (0, 0xFFFF)


class OverlappingActionConflict(ValueError):
    """A drop rule was handed to the whitelist canonicalizer."""


@dataclass(frozen=True, order=True)
class GroupKey:
    direction: str
    src: str
    dst: str
    ethertype: int = ETH_IPV4

    def __post_init__(self):
        if self.direction == FROM_DEVICE and self.src != DEVICE:
            raise ValueError("from-device group must have the device as source")
        if self.direction == TO_DEVICE and self.dst != DEVICE:
            raise ValueError("to-device group must have the device as destination")

    @property
    def peer(self) -> str:
        return self.dst if self.direction == FROM_DEVICE else self.src

    def label(self) -> str:
        eth = "*" if self.ethertype == ANY_ETHERTYPE else f"0x{self.ethertype:04x}"
        return f"{self.direction}/{self.src}/{self.dst}/{eth}"


@dataclass(frozen=True, order=True)
class Box:
    proto: Interval = PROTO_RANGE
    sport: Interval = PORT_RANGE
    dport: Interval = PORT_RANGE

    def __post_init__(self):
        for (lo, hi), (low, high) in zip(self.axes, (PROTO_RANGE, PORT_RANGE, PORT_RANGE)):
            if not low <= lo <= hi <= high:
                raise ValueError(f"invalid box interval {lo}..{hi}")

    @property
    def axes(self) -> tuple[Interval, Interval, Interval]:
        return (self.proto, self.sport, self.dport)

    def contains(self, proto: int, sport: int, dport: int) -> bool:
        return all(lo <= v <= hi for (lo, hi), v in zip(self.axes, (proto, sport, dport)))

    def intersects(self, other: "Box") -> bool:
        return all(a[0] <= b[1] and b[0] <= a[1] for a, b in zip(self.axes, other.axes))

    def as_dict(self) -> dict:
        return {"proto": list(self.proto), "sport": list(self.sport), "dport": list(self.dport)}


class Rule(NamedTuple):
    group: GroupKey
    box: Box
    action: str = "accept"


PolicyLike = Union["CanonicalPolicy", Iterable[Sequence]]


@dataclass(frozen=True)
class CanonicalPolicy:
    groups: tuple[tuple[GroupKey, tuple[Box, ...]], ...] = ()

    def boxes(self, group: GroupKey) -> tuple[Box, ...]:
        for key, boxes in self.groups:
            if key == group:
                return boxes
        return ()

    def rules(self) -> list[Rule]:
        return [Rule(key, box) for key, boxes in self.groups for box in boxes]

    def to_json(self) -> dict:
        return {key.label(): [b.as_dict() for b in boxes] for key, boxes in self.groups}

    def __len__(self) -> int:
        return sum(len(b) for _, b in self.groups)


# --------------------------------------------------------------------------- slabs


def _merge(intervals: Iterable[Interval]) -> tuple[Interval, ...]:
    """Union of integer intervals as a sorted tuple of maximal disjoint intervals."""
    out: list[list[int]] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1] + 1:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


def _slabs(items: Sequence, axis, cross_section):
    """Cut ``axis`` at every item endpoint, compute each slab's cross-section
    and coalesce touching slabs whose cross-sections are equal.

    Returns a list of (interval, cross_section) with empty slabs dropped.
    """
    cuts = sorted({axis(i)[0] for i in items} | {axis(i)[1] + 1 for i in items})
    out: list[tuple[list[int], object]] = []
    for lo, nxt in zip(cuts, cuts[1:]):
        hi = nxt - 1
        inside = [i for i in items if axis(i)[0] <= lo and axis(i)[1] >= hi]
        if not inside:
            continue
        section = cross_section(inside)
        if out and out[-1][0][1] + 1 == lo and out[-1][1] == section:
            out[-1][0][1] = hi
        else:
            out.append(([lo, hi], section))
    return [((lo, hi), section) for (lo, hi), section in out]


def _canonical_boxes(boxes: Sequence[Box]) -> tuple[Box, ...]:
    def sport_section(inside):
        return tuple(
            _slabs(inside, lambda b: b.sport, lambda bs: _merge(b.dport for b in bs))
        )

    result = []
    for proto, section in _slabs(boxes, lambda b: b.proto, sport_section):
        for sport, dports in section:
            for dport in dports:
                result.append(Box(proto, sport, dport))
    return tuple(result)


def _as_rules(policy: PolicyLike) -> list[Rule]:
    if isinstance(policy, CanonicalPolicy):
        return policy.rules()
    return [r if isinstance(r, Rule) else Rule(*r) for r in policy]


def canonicalize(policy: PolicyLike) -> CanonicalPolicy:
    """Map a whitelist rule list to its unique ordered set of disjoint boxes."""
    if isinstance(policy, CanonicalPolicy):
        return policy
    grouped: dict[GroupKey, list[Box]] = {}
    for rule in _as_rules(policy):
        if rule.action != "accept":
            raise OverlappingActionConflict(f"non-accept rule in whitelist policy: {rule.action}")
        grouped.setdefault(rule.group, []).append(rule.box)
    return CanonicalPolicy(
        tuple((key, _canonical_boxes(grouped[key])) for key in sorted(grouped))
    )


def equivalent(p1: PolicyLike, p2: PolicyLike) -> bool:
    return canonicalize(p1) == canonicalize(p2)


# --------------------------------------------------------------------------- difference / inclusion


def _subtract(box: Box, cut: Box) -> list[Box]:
    if not box.intersects(cut):
        return [box]
    pieces = []
    axes = list(box.axes)
    for k in range(3):
        lo, hi = axes[k]
        clo, chi = cut.axes[k]
        if lo < clo:
            below = list(axes)
            below[k] = (lo, clo - 1)
            pieces.append(Box(*below))
        if hi > chi:
            above = list(axes)
            above[k] = (chi + 1, hi)
            pieces.append(Box(*above))
        axes[k] = (max(lo, clo), min(hi, chi))
    return pieces


def box_difference(a: Box, cover: Iterable[Box]) -> list[Box]:
    """Disjoint boxes covering exactly ``a`` minus the union of ``cover``, in canonical order."""
    pieces = [a]
    for c in cover:
        pieces = [p for piece in pieces for p in _subtract(piece, c)]
        if not pieces:
            return []
    return list(_canonical_boxes(pieces))


def is_domain(entity: str) -> bool:
    return entity not in RESERVED_ENTITIES and not entity.startswith("urn:")


def entity_covers(general: str, specific: str, covering: bool = True) -> bool:
    """Whether endpoint ``general`` denotes a superset of ``specific``.

    ``*`` matches anything. With ``covering``: internet-any covers every
    domain name and local-network covers the controller.
    """
    if general == specific or general == ANY:
        return True
    if not covering:
        return False
    if general == INTERNET_ANY:
        return is_domain(specific)
    if general == LOCAL_NETWORK:
        return specific == CONTROLLER
    return False


def group_covers(general: GroupKey, specific: GroupKey, covering: bool = True) -> bool:
    return (
        general.direction in (specific.direction, ANY)
        and general.ethertype in (specific.ethertype, ANY_ETHERTYPE)
        and entity_covers(general.src, specific.src, covering)
        and entity_covers(general.dst, specific.dst, covering)
    )


def uncovered(group: GroupKey, box: Box, against: PolicyLike, *, covering: bool = False) -> list[Box]:
    """Part of ``box`` (in ``group``) that no rule of ``against`` accepts."""
    cover = [r.box for r in _as_rules(against) if group_covers(r.group, group, covering)]
    return box_difference(box, cover)


def includes(px: PolicyLike, py: PolicyLike, *, covering: bool = False) -> bool:
    """True iff every packet accepted by ``px`` is accepted by ``py``.

    Groups are compared as opaque keys unless ``covering`` is set, in which
    case the endpoint covering order of :func:`entity_covers` applies.
    """
    cx = canonicalize(px)
    cy = canonicalize(py).rules()
    for key, boxes in cx.groups:
        cover = [r.box for r in cy if group_covers(r.group, key, covering)]
        for box in boxes:
            if box_difference(box, cover):
                return False
    return True


def accept_set_member(policy: PolicyLike, packet: tuple, *, covering: bool = False) -> bool:
    """Brute-force membership: does any rule accept (group, proto, sport, dport)?"""
    group, proto, sport, dport = packet
    return any(
        group_covers(r.group, group, covering) and r.box.contains(proto, sport, dport)
        for r in _as_rules(policy)
        if r.action == "accept"
    )


# --------------------------------------------------------------------------- MUD bridge


def ace_peer(direction: str, acl, ace) -> str:
    """Endpoint entity on the far side of an ACE."""
    from . import mud

    m = ace.matches
    if acl.type == mud.ETH_ACL:
        return LOCAL_NETWORK
    if m.mud is not None:
        if m.mud.kind == mud.CONTROLLER:
            return CONTROLLER if m.mud.urn == mud.GATEWAY_URN else m.mud.urn
        if m.mud.kind == mud.LOCAL_NETWORKS:
            return LOCAL_NETWORK
        return SAME_MANUFACTURER
    name = m.dst_dnsname if direction == FROM_DEVICE else m.src_dnsname
    name = name or m.dst_dnsname or m.src_dnsname
    return name if name else INTERNET_ANY


def ace_rule(direction: str, acl, ace) -> Rule:
    from . import mud

    m = ace.matches
    peer = ace_peer(direction, acl, ace)
    if acl.type == mud.ETH_ACL:
        ethertype = m.ethertype if m.ethertype is not None else ANY_ETHERTYPE
    else:
        ethertype = ETH_IPV4
    if direction == FROM_DEVICE:
        group = GroupKey(FROM_DEVICE, DEVICE, peer, ethertype)
    else:
        group = GroupKey(TO_DEVICE, peer, DEVICE, ethertype)
    proto = (m.ip_proto, m.ip_proto) if m.ip_proto is not None else PROTO_RANGE
    sport = (m.src_port.lo, m.src_port.hi) if m.src_port else PORT_RANGE
    dport = (m.dst_port.lo, m.dst_port.hi) if m.dst_port else PORT_RANGE
    return Rule(group, Box(proto, sport, dport), ace.action)


def policy_of(profile) -> list[Rule]:
    """Accept/drop rules of a profile, one per ACE, in document order."""
    return [ace_rule(direction, acl, ace) for direction, acl, ace in profile.directed_aces()]
