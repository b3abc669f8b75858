"""Virtual-switch simulation that turns a device trace into reactive flow rules.

The switch starts with a fixed table of proactive rules. Packets hitting a
``mirror`` rule are handed to :func:`inspect`, which learns DNS bindings and
installs prioritized reactive rules describing each observed flow. Once a
flow has a reactive rule, later packets of that flow are forwarded without
inspection.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from ipaddress import IPv4Address, IPv4Network, ip_network
from typing import Iterable, Optional, Union

from .ingest import (
    ETH_ARP,
    ETH_EAPOL,
    ETH_IPV4,
    ETH_IPV6,
    PROTO_ICMP,
    PROTO_ICMPV6,
    PROTO_TCP,
    PROTO_UDP,
    PacketRecord,
    is_group_mac,
    normalize_mac,
)

Endpoint = Union[IPv4Address, str, None]

DEFAULT_LOCAL_PREFIXES = ("192.168.0.0/16", "10.0.0.0/8", "172.16.0.0/12")
LIMITED_BROADCAST = IPv4Address("255.255.255.255")


class CaptureError(Exception):
    pass


class InvalidConfig(CaptureError, ValueError):
    pass


class NoMatch(CaptureError):
    pass


class OutOfOrderTimestamp(CaptureError, ValueError):
    pass


class Action(str, enum.Enum):
    FORWARD = "forward"
    MIRROR = "mirror"


class ReactiveGroup(enum.IntEnum):
    """Reactive rule groups; the value is the group's switch priority."""

    LOCAL_BROADCAST = 102
    DNS_NTP = 101
    TO_INTERNET = 32
    FROM_INTERNET = 21
    TO_LOCAL = 12
    FROM_LOCAL = 11

    @property
    def priority(self) -> int:
        return int(self)


@dataclass(frozen=True)
class MatchKey:
    src_mac: Optional[str] = None
    dst_mac: Optional[str] = None
    ethertype: Optional[int] = None
    src_ep: Endpoint = None
    dst_ep: Endpoint = None
    ip_proto: Optional[int] = None
    src_port: Optional[int] = None
    dst_port: Optional[int] = None

    def __post_init__(self):
        if self.ip_proto not in (PROTO_TCP, PROTO_UDP) and (
            self.src_port is not None or self.dst_port is not None
        ):
            raise ValueError("port match requires TCP or UDP")

    def matches(self, pkt: PacketRecord, cache: Optional["DnsCache"] = None) -> bool:
        if self.src_mac is not None and pkt.src_mac != self.src_mac:
            return False
        if self.dst_mac is not None and pkt.dst_mac != self.dst_mac:
            return False
        if self.ethertype is not None and pkt.ethertype != self.ethertype:
            return False
        if self.ip_proto is not None and pkt.ip_proto != self.ip_proto:
            return False
        if self.src_port is not None and pkt.src_port != self.src_port:
            return False
        if self.dst_port is not None and pkt.dst_port != self.dst_port:
            return False
        return _endpoint_matches(self.src_ep, pkt.src_ip, cache) and _endpoint_matches(
            self.dst_ep, pkt.dst_ip, cache
        )

    def describe(self) -> dict:
        """JSON-friendly view; wildcards render as ``"*"``."""

        def show(v):
            if v is None:
                return "*"
            if isinstance(v, int) and not isinstance(v, bool):
                return v
            return str(v)

        return {
            "sEth": show(self.src_mac),
            "dEth": show(self.dst_mac),
            "typeEth": "*" if self.ethertype is None else f"0x{self.ethertype:04x}",
            "source": show(self.src_ep),
            "destination": show(self.dst_ep),
            "proto": show(self.ip_proto),
            "sPort": show(self.src_port),
            "dPort": show(self.dst_port),
        }


def _endpoint_matches(ep: Endpoint, addr: Optional[IPv4Address], cache: Optional["DnsCache"]) -> bool:
    if ep is None:
        return True
    if addr is None:
        return False
    if isinstance(ep, IPv4Address):
        return addr == ep
    return cache is not None and cache.lookup(addr) == ep


@dataclass
class SwitchRule:
    id: str
    match: MatchKey
    priority: int
    action: Action
    group: Optional[ReactiveGroup] = None
    packet_count: int = 0
    stun: bool = False

    @property
    def proactive(self) -> bool:
        return self.group is None


class DnsCache:
    """Address to domain-name bindings learned from DNS replies."""

    def __init__(self):
        self._entries: dict[IPv4Address, tuple[str, float]] = {}

    def bind(self, addr: IPv4Address, name: str, ts: float) -> None:
        self._entries[addr] = (name, ts)

    def lookup(self, addr: IPv4Address) -> Optional[str]:
        entry = self._entries.get(addr)
        return entry[0] if entry else None

    def items(self):
        return sorted(self._entries.items())

    def snapshot(self) -> dict[IPv4Address, tuple[str, float]]:
        return dict(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, addr) -> bool:
        return addr in self._entries


@dataclass(frozen=True)
class CaptureConfig:
    device_mac: str
    gateway_mac: str
    gateway_ip: IPv4Address
    local_prefixes: tuple[IPv4Network, ...] = tuple(ip_network(p) for p in DEFAULT_LOCAL_PREFIXES)

    def __post_init__(self):
        try:
            object.__setattr__(self, "device_mac", normalize_mac(self.device_mac))
            object.__setattr__(self, "gateway_mac", normalize_mac(self.gateway_mac))
            object.__setattr__(self, "gateway_ip", IPv4Address(self.gateway_ip))
            object.__setattr__(
                self, "local_prefixes", tuple(ip_network(p) for p in self.local_prefixes)
            )
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
        if self.device_mac == self.gateway_mac:
            raise InvalidConfig("device and gateway MAC must differ")

    def is_local(self, addr: IPv4Address) -> bool:
        return addr == self.gateway_ip or any(addr in net for net in self.local_prefixes)


def proactive_rules(cfg: CaptureConfig) -> list[SwitchRule]:
    """The fixed rule table installed before any packet is played."""
    if cfg.device_mac == cfg.gateway_mac:
        raise InvalidConfig("device and gateway MAC must differ")
    dev, gw, gwip = cfg.device_mac, cfg.gateway_mac, cfg.gateway_ip
    fwd, mir = Action.FORWARD, Action.MIRROR
    table = [
        ("a", MatchKey(gw, dev, ETH_IPV4, ip_proto=PROTO_ICMP), 100, fwd),
        ("b.1", MatchKey(dev, gw, ETH_IPV4, ip_proto=PROTO_ICMP), 100, mir),
        ("b.2", MatchKey(dev, gw, ETH_IPV6, ip_proto=PROTO_ICMPV6), 100, mir),
        ("c", MatchKey(gw, dev, ETH_IPV4, ip_proto=PROTO_UDP, src_port=123), 100, fwd),
        ("d.1", MatchKey(gw, dev, ip_proto=PROTO_UDP, src_port=53), 100, mir),
        ("d.2", MatchKey(dev, gw, ip_proto=PROTO_UDP, dst_port=53), 100, mir),
        ("e.1", MatchKey(None, dev, ETH_ARP), 100, fwd),
        ("e.2", MatchKey(dev, None, ETH_ARP), 100, fwd),
        ("f", MatchKey(gw, dev, src_ep=gwip), 90, fwd),
        ("g", MatchKey(dev, gw, dst_ep=gwip), 90, fwd),
        ("h", MatchKey(dev, None, ETH_EAPOL), 3, fwd),
        ("i", MatchKey(dev, None), 2, mir),
        ("j", MatchKey(None, dev), 2, mir),
    ]
    return [SwitchRule(rid, key, prio, action) for rid, key, prio, action in table]


def classify_packet(
    rules: Iterable[SwitchRule], pkt: PacketRecord, cache: Optional[DnsCache] = None
) -> SwitchRule:
    """Return the highest-priority matching rule (earliest wins ties) and count the hit."""
    best: Optional[SwitchRule] = None
    for rule in rules:
        if (best is None or rule.priority > best.priority) and rule.match.matches(pkt, cache):
            best = rule
    if best is None:
        raise NoMatch(f"no rule matches packet at ts={pkt.ts}")
    best.packet_count += 1
    return best


_FlowKey = tuple


class CaptureSession:
    """Mutable switch state for one trace replay."""

    def __init__(self, cfg: CaptureConfig):
        self.cfg = cfg
        self.rules: list[SwitchRule] = proactive_rules(cfg)
        self.cache = DnsCache()
        self.skipped: list[dict] = []
        self._reactive: dict[tuple[MatchKey, ReactiveGroup], SwitchRule] = {}
        self._initiators: dict[_FlowKey, IPv4Address] = {}
        self._ids = itertools.count(1)
        self._last_ts: Optional[float] = None

    @property
    def reactive_rules(self) -> list[SwitchRule]:
        ordered = sorted(enumerate(self._reactive.values()), key=lambda p: (-p[1].priority, p[0]))
        return [r for _, r in ordered]

    def skip(self, pkt: PacketRecord, reason: str) -> None:
        self.skipped.append({"ts": pkt.ts, "reason": reason})

    def install(self, key: MatchKey, group: ReactiveGroup, action: Action = Action.FORWARD,
                stun: bool = False) -> Optional[SwitchRule]:
        existing = self._reactive.get((key, group))
        if existing is not None:
            existing.stun = existing.stun or stun
            return None
        rule = SwitchRule(f"r{next(self._ids)}", key, group.priority, action, group, stun=stun)
        self._reactive[(key, group)] = rule
        self.rules.append(rule)
        return rule

    def endpoint(self, addr: IPv4Address) -> Endpoint:
        return self.cache.lookup(addr) or addr

    def initiator(self, pkt: PacketRecord) -> IPv4Address:
        flow = (pkt.ip_proto, frozenset({(pkt.src_ip, pkt.src_port), (pkt.dst_ip, pkt.dst_port)}))
        if pkt.ip_proto == PROTO_TCP and pkt.is_syn:
            self._initiators[flow] = pkt.src_ip
        elif pkt.ip_proto == PROTO_TCP and pkt.is_synack:
            self._initiators[flow] = pkt.dst_ip
        return self._initiators.setdefault(flow, pkt.src_ip)

    def process(self, pkt: PacketRecord) -> list[SwitchRule]:
        if self._last_ts is not None and pkt.ts < self._last_ts:
            raise OutOfOrderTimestamp(f"timestamp {pkt.ts} precedes {self._last_ts}")
        self._last_ts = pkt.ts
        dev = self.cfg.device_mac
        if dev not in (pkt.src_mac, pkt.dst_mac):
            self.skip(pkt, "foreign traffic")
            return []
        rule = classify_packet(self.rules, pkt, self.cache)
        if rule.action is Action.MIRROR:
            return inspect(pkt, self)
        return []


def inspect(pkt: PacketRecord, state: CaptureSession) -> list[SwitchRule]:
    """Header-inspection step for one mirrored packet; returns the rules it inserted."""
    cfg = state.cfg
    dev = cfg.device_mac
    outbound = pkt.src_mac == dev
    peer_mac = pkt.dst_mac if outbound else pkt.src_mac
    inserted: list[SwitchRule] = []

    def add(key, group, action=Action.FORWARD):
        rule = state.install(key, group, action, stun=pkt.stun)
        if rule is not None:
            inserted.append(rule)

    if pkt.dns is not None and pkt.dns.is_response:
        for name, addr in pkt.dns.answers:
            state.cache.bind(addr, name, pkt.ts)

    if pkt.ethertype == ETH_IPV6:
        state.skip(pkt, "ipv6 not modeled")
        return inserted

    # DNS and NTP towards a resolver/server, from either direction of the exchange
    if pkt.ip_proto == PROTO_UDP:
        server_port = None
        if outbound and pkt.dst_port in (53, 123):
            server_port, server = pkt.dst_port, pkt.dst_ip
        elif not outbound and pkt.src_port in (53, 123):
            server_port, server = pkt.src_port, pkt.src_ip
        if server_port is not None:
            ep = state.endpoint(server)
            # DNS rules keep mirroring so later replies still feed the cache
            action = Action.MIRROR if server_port == 53 else Action.FORWARD
            add(MatchKey(dev, peer_mac, ETH_IPV4, None, ep, PROTO_UDP, None, server_port),
                ReactiveGroup.DNS_NTP, action)
            add(MatchKey(peer_mac, dev, ETH_IPV4, ep, None, PROTO_UDP, server_port, None),
                ReactiveGroup.DNS_NTP, action)
            return inserted

    if outbound and (
        is_group_mac(pkt.dst_mac)
        or pkt.dst_ip == LIMITED_BROADCAST
        or (pkt.dst_ip is not None and pkt.dst_ip.is_multicast)
        or (pkt.ip_proto == PROTO_UDP and pkt.dst_port == 67)
    ):
        fixed_dport = pkt.dst_port if pkt.ip_proto in (PROTO_TCP, PROTO_UDP) else None
        add(MatchKey(dev, pkt.dst_mac, pkt.ethertype, None, pkt.dst_ip, pkt.ip_proto, None, fixed_dport),
            ReactiveGroup.LOCAL_BROADCAST)
        return inserted

    if pkt.ethertype != ETH_IPV4 or pkt.src_ip is None or pkt.ip_proto is None:
        state.skip(pkt, f"unsupported frame ethertype=0x{pkt.ethertype:04x}")
        return inserted

    peer_ip = pkt.dst_ip if outbound else pkt.src_ip
    dev_ip = pkt.src_ip if outbound else pkt.dst_ip
    local = cfg.is_local(peer_ip)
    to_group = ReactiveGroup.TO_LOCAL if local else ReactiveGroup.TO_INTERNET
    from_group = ReactiveGroup.FROM_LOCAL if local else ReactiveGroup.FROM_INTERNET
    ep = state.endpoint(peer_ip)

    dev_port = peer_port = None
    if pkt.ip_proto in (PROTO_TCP, PROTO_UDP):
        dev_port = pkt.src_port if outbound else pkt.dst_port
        peer_port = pkt.dst_port if outbound else pkt.src_port
        if state.initiator(pkt) == dev_ip:
            dev_port = None
        else:
            peer_port = None

    add(MatchKey(dev, peer_mac, ETH_IPV4, None, ep, pkt.ip_proto, dev_port, peer_port), to_group)
    add(MatchKey(peer_mac, dev, ETH_IPV4, ep, None, pkt.ip_proto, peer_port, dev_port), from_group)
    return inserted


@dataclass
class CaptureResult:
    rules: list[SwitchRule]
    cache: DnsCache
    skipped: list[dict] = field(default_factory=list)
    proactive: list[SwitchRule] = field(default_factory=list)

    def __iter__(self):
        return iter((self.rules, self.cache, self.skipped))


def run_capture(records: Iterable[PacketRecord], cfg: CaptureConfig) -> CaptureResult:
    """Replay a time-ordered trace through the switch.

    The returned reactive rules are ordered by priority (descending), then
    insertion order. Proactive rules are returned separately with their hit
    counters, which profile generation uses to tell whether ARP was seen.
    """
    session = CaptureSession(cfg)
    for pkt in records:
        session.process(pkt)
    proactive = [r for r in session.rules if r.proactive]
    return CaptureResult(session.reactive_rules, session.cache, session.skipped, proactive)
