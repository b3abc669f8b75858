"""Translate captured reactive flow rules into a MUD profile.

Address endpoints never reach the profile: Internet addresses are reverse
resolved through the DNS cache, the gateway becomes the MUD controller
construct, local peers become ``local-networks`` and anything left over is
widened to "any address" on its fixed port. Every emitted ACE accepts.
"""

from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass
from ipaddress import IPv4Address
from typing import Iterable, Optional

from . import mud
from .capture import CaptureConfig, DnsCache, ReactiveGroup, SwitchRule
from .ingest import ETH_ARP, ETH_IPV4, PROTO_ICMP, PROTO_TCP, PROTO_UDP, is_group_mac

DEFAULT_LAST_UPDATE = "1970-01-01T00:00:00+00:00"
DEFAULT_WILDCARD_THRESHOLD = 3

_FROM_GROUPS = {ReactiveGroup.TO_INTERNET, ReactiveGroup.TO_LOCAL, ReactiveGroup.LOCAL_BROADCAST}
_PROTO_LABEL = {PROTO_ICMP: "icmp", PROTO_TCP: "tcp", PROTO_UDP: "udp"}


class UnresolvedEndpoint(UserWarning):
    """An Internet address had no DNS binding and was widened to any address."""

    def __init__(self, addr):
        super().__init__(f"no DNS name for {addr}; emitted as any address")
        self.addr = addr


class DeviceCategory(str, enum.Enum):
    STATIC = "Static"
    LOOSELY_STATIC = "LooselyStatic"
    DYNAMIC = "Dynamic"


@dataclass(frozen=True)
class ProfileMeta:
    name: str = "device"
    mud_url: str = "https://example.com/device.json"
    cache_validity: int = 48
    last_update: str = DEFAULT_LAST_UPDATE

    @classmethod
    def from_json(cls, obj: dict, last_update: Optional[str] = None) -> "ProfileMeta":
        return cls(
            name=obj.get("name", "device"),
            mud_url=obj.get("mud_url", f"https://example.com/{obj.get('name', 'device')}.json"),
            cache_validity=int(obj.get("cache_validity", 48)),
            last_update=last_update or DEFAULT_LAST_UPDATE,
        )


@dataclass(frozen=True)
class _Flow:
    """One reactive rule after endpoint abstraction."""

    direction: str
    ip_proto: Optional[int]
    peer: tuple  # ("controller",) | ("local",) | ("dns", name) | ("any",) | ("addr", ip)
    remote_port: Optional[int]
    device_port: Optional[int]
    ethertype: int = ETH_IPV4


def _direction(rule: SwitchRule, cfg: CaptureConfig) -> str:
    if rule.group in _FROM_GROUPS:
        return mud.FROM_DEVICE
    if rule.group is ReactiveGroup.DNS_NTP:
        return mud.FROM_DEVICE if rule.match.src_mac == cfg.device_mac else mud.TO_DEVICE
    return mud.TO_DEVICE


def _abstract(rule: SwitchRule, cache: DnsCache, cfg: CaptureConfig) -> _Flow:
    m = rule.match
    direction = _direction(rule, cfg)
    outbound = direction == mud.FROM_DEVICE
    remote = m.dst_ep if outbound else m.src_ep
    remote_port = m.dst_port if outbound else m.src_port
    device_port = m.src_port if outbound else m.dst_port

    if m.ethertype not in (None, ETH_IPV4):
        return _Flow(direction, None, ("local",), None, None, m.ethertype)

    if remote is None:
        if rule.group is ReactiveGroup.LOCAL_BROADCAST or (m.dst_mac and is_group_mac(m.dst_mac)):
            peer = ("local",)
        else:
            peer = ("any",)
    elif isinstance(remote, str):
        peer = ("dns", remote)
    elif remote == cfg.gateway_ip:
        peer = ("controller",)
    elif remote.is_multicast or remote == IPv4Address("255.255.255.255") or cfg.is_local(remote):
        peer = ("local",)
    else:
        name = cache.lookup(remote)
        peer = ("dns", name) if name else ("addr", remote)
    return _Flow(direction, m.ip_proto, peer, remote_port, device_port)


def _matches(flow: _Flow) -> mud.MatchSet:
    if flow.ethertype != ETH_IPV4:
        return mud.MatchSet(ethertype=flow.ethertype)
    outbound = flow.direction == mud.FROM_DEVICE
    kind = flow.peer[0]
    fields: dict = {"ip_proto": flow.ip_proto}
    if kind == "controller":
        fields["mud"] = mud.MudConstruct.gateway()
    elif kind == "local":
        fields["mud"] = mud.MudConstruct(mud.LOCAL_NETWORKS)
    elif kind == "dns":
        fields["dst_dnsname" if outbound else "src_dnsname"] = flow.peer[1]
    remote = mud.PortMatch.eq(flow.remote_port) if flow.remote_port is not None else None
    local = mud.PortMatch.eq(flow.device_port) if flow.device_port is not None else None
    if outbound:
        fields["src_port"], fields["dst_port"] = local, remote
    else:
        fields["src_port"], fields["dst_port"] = remote, local
    return mud.MatchSet(**fields)


def _ace_name(direction: str, flow: _Flow, index: int) -> str:
    d = "from" if direction == mud.FROM_DEVICE else "to"
    if flow.ethertype != ETH_IPV4:
        proto = f"eth{flow.ethertype:04x}"
    elif flow.ip_proto is None:
        proto = "ip"
    else:
        proto = _PROTO_LABEL.get(flow.ip_proto, f"ip{flow.ip_proto}")
    kind = flow.peer[0]
    peer = flow.peer[1] if kind == "dns" else kind
    port = flow.remote_port if flow.remote_port is not None else flow.device_port
    return f"{d}-{proto}-{peer}-{'any' if port is None else port}-{index}"


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "device"


def _arp_seen(rules: Iterable[SwitchRule]) -> bool:
    return any(r.proactive and r.match.ethertype == ETH_ARP and r.packet_count for r in rules)


def flows_to_mud(
    rules: Iterable[SwitchRule],
    cache: DnsCache,
    meta: ProfileMeta,
    cfg: CaptureConfig,
    *,
    include_arp: bool = True,
    wildcard_threshold: int = DEFAULT_WILDCARD_THRESHOLD,
) -> mud.MudProfile:
    """Build a whitelist MUD profile from capture output.

    ``rules`` may mix proactive and reactive rules; proactive ARP rules with
    a non-zero hit count add an ARP pair to the eth ACLs (unless
    ``include_arp`` is false). Unresolved Internet addresses that cannot be
    folded into a shared-port wildcard raise an :class:`UnresolvedEndpoint`
    warning.
    """
    rules = list(rules)
    reactive = [r for r in rules if not r.proactive]
    flows = [(_abstract(r, cache, cfg), r.stun) for r in reactive]

    # STUN: one udp-any pair to/from the Internet replaces all Internet UDP flows
    if any(stun for _, stun in flows):
        internet = ("dns", "addr", "any")
        kept = [f for f, _ in flows if not (f.ip_proto == PROTO_UDP and f.peer[0] in internet)]
        stun_pair = [
            _Flow(mud.FROM_DEVICE, PROTO_UDP, ("any",), None, None),
            _Flow(mud.TO_DEVICE, PROTO_UDP, ("any",), None, None),
        ]
        flows_only = kept + stun_pair
    else:
        flows_only = [f for f, _ in flows]

    # unresolved Internet addresses: widen to any address on the same port
    sharing: dict[tuple, set] = {}
    for f in flows_only:
        if f.peer[0] == "addr":
            sharing.setdefault((f.direction, f.ip_proto, f.remote_port), set()).add(f.peer[1])
    widened = []
    reported = set()
    for f in flows_only:
        if f.peer[0] == "addr":
            addrs = sharing[(f.direction, f.ip_proto, f.remote_port)]
            if len(addrs) < wildcard_threshold and f.peer[1] not in reported:
                reported.add(f.peer[1])
                warnings.warn(UnresolvedEndpoint(f.peer[1]), stacklevel=2)
            f = _Flow(f.direction, f.ip_proto, ("any",), f.remote_port, f.device_port, f.ethertype)
        widened.append(f)

    if include_arp and _arp_seen(rules):
        widened.append(_Flow(mud.FROM_DEVICE, None, ("local",), None, None, ETH_ARP))
        widened.append(_Flow(mud.TO_DEVICE, None, ("local",), None, None, ETH_ARP))

    slug = _slug(meta.name)
    buckets: dict[tuple[str, str], list[mud.Ace]] = {}
    seen: set[tuple] = set()
    for f in widened:
        acl_type = mud.IPV4_ACL if f.ethertype == ETH_IPV4 else mud.ETH_ACL
        matches = _matches(f)
        key = (f.direction, acl_type, matches)
        if key in seen:
            continue
        seen.add(key)
        bucket = buckets.setdefault((f.direction, acl_type), [])
        bucket.append(mud.Ace(_ace_name(f.direction, f, len(bucket)), matches, mud.ACCEPT))

    acls, from_names, to_names = [], [], []
    for direction, names in ((mud.FROM_DEVICE, from_names), (mud.TO_DEVICE, to_names)):
        for acl_type, tag in ((mud.IPV4_ACL, "ipv4"), (mud.ETH_ACL, "eth")):
            aces = buckets.get((direction, acl_type))
            if not aces:
                continue
            name = f"{'from' if direction == mud.FROM_DEVICE else 'to'}-{tag}-{slug}"
            names.append(name)
            acls.append(mud.Acl(name, acl_type, tuple(aces)))

    return mud.MudProfile(
        mud_url=meta.mud_url,
        last_update=meta.last_update,
        systeminfo=meta.name,
        cache_validity=meta.cache_validity,
        from_device_acls=tuple(from_names),
        to_device_acls=tuple(to_names),
        acls=tuple(acls),
    )


def classify_profile(profile: mud.MudProfile) -> DeviceCategory:
    """Heuristic device category from the profile's wildcard-address ACEs.

    Any-address ACEs that still pin a port, or are plain UDP (the STUN
    shape), make a device loosely static; any other any-address ACE makes it
    dynamic.
    """
    loose = False
    for _direction, acl, ace in profile.directed_aces():
        m = ace.matches
        if acl.type != mud.IPV4_ACL or m.mud is not None or m.src_dnsname or m.dst_dnsname:
            continue
        if m.src_port or m.dst_port or m.ip_proto == PROTO_UDP:
            loose = True
        else:
            return DeviceCategory.DYNAMIC
    return DeviceCategory.LOOSELY_STATIC if loose else DeviceCategory.STATIC
