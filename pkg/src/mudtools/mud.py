"""MUD profile model, JSON codec and syntax checks.

Only two top-level containers are accepted: ``ietf-mud:mud`` and
``ietf-access-control-list:access-lists``. Anything else, including keys
carrying an unknown YANG module prefix, is a syntax error. Serialization is
deterministic (fixed key order, two-space indent, trailing newline) so that
generated profiles can be compared byte for byte.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from typing import Iterator, Optional

GATEWAY_URN = "urn:ietf:params:mud:gateway"

MUD_KEY = "ietf-mud:mud"
ACL_KEY = "ietf-access-control-list:access-lists"
DNS_SRC = "ietf-acldns:src-dnsname"
DNS_DST = "ietf-acldns:dst-dnsname"

KNOWN_MODULES = {"ietf-mud", "ietf-access-control-list", "ietf-acldns"}

IPV4_ACL = "ipv4-acl-type"
ETH_ACL = "eth-acl-type"

ACCEPT = "accept"
DROP = "drop"

FROM_DEVICE = "from-device"
TO_DEVICE = "to-device"

CONTROLLER = "controller"
LOCAL_NETWORKS = "local-networks"
SAME_MANUFACTURER = "same-manufacturer"

_PROTO_NAMES = {6: "tcp", 17: "udp"}


class MudSyntaxError(ValueError):
    """Raised when a document falls outside the accepted MUD subset.

    ``kind`` names the offense (``UnknownModule``, ``AddressLiteral``,
    ``BadAction``, ``DanglingAclRef``, ``DuplicateName``, ``Malformed``).
    """

    def __init__(self, path: str, reason: str, kind: str = "Malformed"):
        super().__init__(f"{kind} at {path or '/'}: {reason}")
        self.path = path
        self.reason = reason
        self.kind = kind


@dataclass(frozen=True)
class PortMatch:
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi <= 0xFFFF:
            raise ValueError(f"bad port range {self.lo}..{self.hi}")

    @classmethod
    def eq(cls, port: int) -> "PortMatch":
        return cls(port, port)


@dataclass(frozen=True)
class MudConstruct:
    kind: str  # controller | local-networks | same-manufacturer
    urn: Optional[str] = None

    @classmethod
    def gateway(cls) -> "MudConstruct":
        return cls(CONTROLLER, GATEWAY_URN)


@dataclass(frozen=True)
class MatchSet:
    ethertype: Optional[int] = None
    ip_proto: Optional[int] = None
    src_dnsname: Optional[str] = None
    dst_dnsname: Optional[str] = None
    src_port: Optional[PortMatch] = None
    dst_port: Optional[PortMatch] = None
    mud: Optional[MudConstruct] = None


@dataclass(frozen=True)
class Ace:
    name: str
    matches: MatchSet
    action: str = ACCEPT


@dataclass(frozen=True)
class Acl:
    name: str
    type: str
    aces: tuple[Ace, ...] = ()


@dataclass(frozen=True)
class MudProfile:
    mud_url: str
    last_update: str
    systeminfo: str = ""
    mud_version: int = 1
    cache_validity: int = 48
    is_supported: bool = True
    from_device_acls: tuple[str, ...] = ()
    to_device_acls: tuple[str, ...] = ()
    acls: tuple[Acl, ...] = ()

    def acl(self, name: str) -> Optional[Acl]:
        for acl in self.acls:
            if acl.name == name:
                return acl
        return None

    def directed_aces(self) -> Iterator[tuple[str, Acl, Ace]]:
        """(direction, acl, ace) for every ACE reachable from a device policy."""
        for direction, names in ((FROM_DEVICE, self.from_device_acls), (TO_DEVICE, self.to_device_acls)):
            for name in names:
                acl = self.acl(name)
                if acl is None:
                    continue
                for ace in acl.aces:
                    yield direction, acl, ace

    @property
    def ace_count(self) -> int:
        return sum(len(a.aces) for a in self.acls)


@dataclass(frozen=True)
class Violation:
    kind: str
    path: str
    message: str
    severity: str = "error"

    def as_dict(self) -> dict:
        return {"kind": self.kind, "path": self.path, "message": self.message, "severity": self.severity}


# --------------------------------------------------------------------------- parse


def _module_of(key: str) -> Optional[str]:
    return key.split(":", 1)[0] if ":" in key else None


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key in allowed:
            continue
        module = _module_of(key)
        if module is not None and module not in KNOWN_MODULES:
            raise MudSyntaxError(f"{path}/{key}", f"module {module!r} is not permitted", "UnknownModule")
        raise MudSyntaxError(f"{path}/{key}", "unknown field")


def _expect(obj, typ, path: str):
    if not isinstance(obj, typ) or (typ is int and isinstance(obj, bool)):
        raise MudSyntaxError(path, f"expected {typ.__name__}")
    return obj


def _parse_port(obj, path: str) -> PortMatch:
    _expect(obj, dict, path)
    try:
        if "operator" in obj:
            _check_keys(obj, {"operator", "port"}, path)
            if obj["operator"] != "eq":
                raise MudSyntaxError(path, f"unsupported operator {obj['operator']!r}")
            return PortMatch.eq(_expect(obj["port"], int, path + "/port"))
        _check_keys(obj, {"lower-port", "upper-port"}, path)
        return PortMatch(_expect(obj["lower-port"], int, path), _expect(obj["upper-port"], int, path))
    except KeyError as exc:
        raise MudSyntaxError(path, f"missing {exc}") from None
    except ValueError as exc:
        if isinstance(exc, MudSyntaxError):
            raise
        raise MudSyntaxError(path, str(exc)) from None


def _parse_matches(obj, path: str) -> MatchSet:
    _expect(obj, dict, path)
    _check_keys(obj, {"eth", "ipv4", "tcp", "udp", "icmp", MUD_KEY}, path)
    fields: dict = {}
    if "eth" in obj:
        eth = _expect(obj["eth"], dict, path + "/eth")
        _check_keys(eth, {"ethertype"}, path + "/eth")
        if "ethertype" in eth:
            value = _expect(eth["ethertype"], int, path + "/eth/ethertype")
            if not 0 <= value <= 0xFFFF:
                raise MudSyntaxError(path + "/eth/ethertype", "ethertype out of range")
            fields["ethertype"] = value
    if "ipv4" in obj:
        p = path + "/ipv4"
        ipv4 = _expect(obj["ipv4"], dict, p)
        for key in ipv4:
            if key.endswith("-ipv4-network"):
                raise MudSyntaxError(f"{p}/{key}", "address literals are not permitted", "AddressLiteral")
        _check_keys(ipv4, {"protocol", DNS_SRC, DNS_DST}, p)
        if "protocol" in ipv4:
            proto = _expect(ipv4["protocol"], int, p + "/protocol")
            if not 0 <= proto <= 255:
                raise MudSyntaxError(p + "/protocol", "protocol out of range")
            fields["ip_proto"] = proto
        if DNS_SRC in ipv4:
            fields["src_dnsname"] = _expect(ipv4[DNS_SRC], str, f"{p}/{DNS_SRC}")
        if DNS_DST in ipv4:
            fields["dst_dnsname"] = _expect(ipv4[DNS_DST], str, f"{p}/{DNS_DST}")
    for l4 in ("tcp", "udp"):
        if l4 not in obj:
            continue
        p = f"{path}/{l4}"
        body = _expect(obj[l4], dict, p)
        _check_keys(body, {"source-port", "destination-port"}, p)
        expected = 6 if l4 == "tcp" else 17
        if fields.get("ip_proto", expected) != expected:
            raise MudSyntaxError(p, f"{l4} match contradicts protocol {fields['ip_proto']}")
        fields["ip_proto"] = expected
        if "source-port" in body:
            fields["src_port"] = _parse_port(body["source-port"], p + "/source-port")
        if "destination-port" in body:
            fields["dst_port"] = _parse_port(body["destination-port"], p + "/destination-port")
    if "icmp" in obj:
        _expect(obj["icmp"], dict, path + "/icmp")
        if fields.get("ip_proto", 1) != 1:
            raise MudSyntaxError(path + "/icmp", "icmp match contradicts protocol")
        fields["ip_proto"] = 1
    if MUD_KEY in obj:
        p = f"{path}/{MUD_KEY}"
        body = _expect(obj[MUD_KEY], dict, p)
        _check_keys(body, {CONTROLLER, LOCAL_NETWORKS, SAME_MANUFACTURER}, p)
        if len(body) != 1:
            raise MudSyntaxError(p, "exactly one MUD construct expected")
        (kind, value), = body.items()
        if kind == CONTROLLER:
            fields["mud"] = MudConstruct(CONTROLLER, _expect(value, str, f"{p}/{kind}"))
        else:
            fields["mud"] = MudConstruct(kind)
    return MatchSet(**fields)


def _parse_policy(obj, path: str) -> tuple[str, ...]:
    _expect(obj, dict, path)
    _check_keys(obj, {"access-lists"}, path)
    lists = _expect(obj.get("access-lists", {}), dict, path + "/access-lists")
    _check_keys(lists, {"access-list"}, path + "/access-lists")
    names = []
    for i, entry in enumerate(_expect(lists.get("access-list", []), list, path + "/access-lists/access-list")):
        p = f"{path}/access-lists/access-list[{i}]"
        _expect(entry, dict, p)
        _check_keys(entry, {"name"}, p)
        names.append(_expect(entry.get("name"), str, p + "/name"))
    return tuple(names)


def parse(text: str | bytes | dict, *, lenient: bool = False, allow_public_addresses: bool = False) -> MudProfile:
    """Build a :class:`MudProfile` from JSON text.

    Strict mode (the default) raises :class:`MudSyntaxError` on the first
    offense. Lenient mode keeps unknown actions, address-like DNS names,
    dangling references and duplicate names so :func:`validate_syntax` can
    report them.
    """
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MudSyntaxError("", f"invalid JSON: {exc}") from None
    _expect(doc, dict, "")
    _check_keys(doc, {MUD_KEY, ACL_KEY}, "")
    for key in (MUD_KEY, ACL_KEY):
        if key not in doc:
            raise MudSyntaxError("/" + key, "mandatory container missing")

    mud = _expect(doc[MUD_KEY], dict, "/" + MUD_KEY)
    mp = "/" + MUD_KEY
    _check_keys(
        mud,
        {"mud-version", "mud-url", "last-update", "cache-validity", "is-supported", "systeminfo",
         "from-device-policy", "to-device-policy"},
        mp,
    )
    try:
        mud_version = _expect(mud["mud-version"], int, mp + "/mud-version")
        mud_url = _expect(mud["mud-url"], str, mp + "/mud-url")
        last_update = _expect(mud["last-update"], str, mp + "/last-update")
    except KeyError as exc:
        raise MudSyntaxError(mp, f"missing {exc}") from None
    cache_validity = _expect(mud.get("cache-validity", 48), int, mp + "/cache-validity")
    is_supported = _expect(mud.get("is-supported", True), bool, mp + "/is-supported")
    systeminfo = _expect(mud.get("systeminfo", ""), str, mp + "/systeminfo")
    from_acls = _parse_policy(mud.get("from-device-policy", {}), mp + "/from-device-policy")
    to_acls = _parse_policy(mud.get("to-device-policy", {}), mp + "/to-device-policy")

    ap = "/" + ACL_KEY
    lists = _expect(doc[ACL_KEY], dict, ap)
    _check_keys(lists, {"acl"}, ap)
    acls = []
    for i, acl_obj in enumerate(_expect(lists.get("acl", []), list, ap + "/acl")):
        p = f"{ap}/acl[{i}]"
        _expect(acl_obj, dict, p)
        _check_keys(acl_obj, {"name", "type", "aces"}, p)
        name = _expect(acl_obj.get("name"), str, p + "/name")
        acl_type = _expect(acl_obj.get("type", IPV4_ACL), str, p + "/type")
        if acl_type not in (IPV4_ACL, ETH_ACL):
            raise MudSyntaxError(p + "/type", f"unsupported ACL type {acl_type!r}")
        aces_obj = _expect(acl_obj.get("aces", {}), dict, p + "/aces")
        _check_keys(aces_obj, {"ace"}, p + "/aces")
        aces = []
        for j, ace_obj in enumerate(_expect(aces_obj.get("ace", []), list, p + "/aces/ace")):
            q = f"{p}/aces/ace[{j}]"
            _expect(ace_obj, dict, q)
            _check_keys(ace_obj, {"name", "matches", "actions"}, q)
            ace_name = _expect(ace_obj.get("name"), str, q + "/name")
            matches = _parse_matches(ace_obj.get("matches", {}), q + "/matches")
            actions = _expect(ace_obj.get("actions", {}), dict, q + "/actions")
            _check_keys(actions, {"forwarding"}, q + "/actions")
            action = _expect(actions.get("forwarding"), str, q + "/actions/forwarding")
            aces.append(Ace(ace_name, matches, action))
        acls.append(Acl(name, acl_type, tuple(aces)))

    profile = MudProfile(
        mud_url=mud_url,
        last_update=last_update,
        systeminfo=systeminfo,
        mud_version=mud_version,
        cache_validity=cache_validity,
        is_supported=is_supported,
        from_device_acls=from_acls,
        to_device_acls=to_acls,
        acls=tuple(acls),
    )
    if not lenient:
        for v in validate_syntax(profile, allow_public_addresses=allow_public_addresses):
            if v.severity == "error":
                raise MudSyntaxError(v.path, v.message, v.kind)
    return profile


# --------------------------------------------------------------------------- serialize


def _port_obj(pm: PortMatch) -> dict:
    if pm.lo == pm.hi:
        return {"operator": "eq", "port": pm.lo}
    return {"lower-port": pm.lo, "upper-port": pm.hi}


def _matches_obj(m: MatchSet) -> dict:
    out: dict = {}
    if m.ethertype is not None:
        out["eth"] = {"ethertype": m.ethertype}
    ipv4: dict = {}
    if m.ip_proto is not None:
        ipv4["protocol"] = m.ip_proto
    if m.src_dnsname is not None:
        ipv4[DNS_SRC] = m.src_dnsname
    if m.dst_dnsname is not None:
        ipv4[DNS_DST] = m.dst_dnsname
    if ipv4:
        out["ipv4"] = ipv4
    l4 = _PROTO_NAMES.get(m.ip_proto)
    if l4 and (m.src_port or m.dst_port):
        ports: dict = {}
        if m.src_port:
            ports["source-port"] = _port_obj(m.src_port)
        if m.dst_port:
            ports["destination-port"] = _port_obj(m.dst_port)
        out[l4] = ports
    if m.mud is not None:
        if m.mud.kind == CONTROLLER:
            out[MUD_KEY] = {CONTROLLER: m.mud.urn}
        else:
            out[MUD_KEY] = {m.mud.kind: [None]}
    return out


def to_document(profile: MudProfile) -> dict:
    def policy(names):
        return {"access-lists": {"access-list": [{"name": n} for n in names]}}

    return {
        MUD_KEY: {
            "mud-version": profile.mud_version,
            "mud-url": profile.mud_url,
            "last-update": profile.last_update,
            "cache-validity": profile.cache_validity,
            "is-supported": profile.is_supported,
            "systeminfo": profile.systeminfo,
            "from-device-policy": policy(profile.from_device_acls),
            "to-device-policy": policy(profile.to_device_acls),
        },
        ACL_KEY: {
            "acl": [
                {
                    "name": acl.name,
                    "type": acl.type,
                    "aces": {
                        "ace": [
                            {
                                "name": ace.name,
                                "matches": _matches_obj(ace.matches),
                                "actions": {"forwarding": ace.action},
                            }
                            for ace in acl.aces
                        ]
                    },
                }
                for acl in profile.acls
            ]
        },
    }


def serialize(profile: MudProfile) -> str:
    return json.dumps(to_document(profile), indent=2) + "\n"


# --------------------------------------------------------------------------- validate


def _is_address_literal(text: str) -> Optional[ipaddress._BaseAddress]:
    candidate = text.strip().strip("[]")
    if "/" in candidate:
        candidate = candidate.split("/", 1)[0]
    try:
        return ipaddress.ip_address(candidate)
    except ValueError:
        return None


def validate_syntax(profile: MudProfile, *, allow_public_addresses: bool = False) -> list[Violation]:
    """Report every syntactic offense in document order; empty means valid.

    With ``allow_public_addresses`` a globally routable literal is reported
    as a warning instead of an error. Constructs outside the supported subset
    (``same-manufacturer``) are flagged ``Unsupported`` at warning level.
    """
    out: list[Violation] = []

    def check_literal(value: str, path: str) -> None:
        addr = _is_address_literal(value)
        if addr is None:
            return
        severity = "warning" if allow_public_addresses and addr.is_global else "error"
        out.append(Violation("AddressLiteral", path, f"address literal {value!r}", severity))

    mp = "/" + MUD_KEY
    known = [acl.name for acl in profile.acls]
    for key, names in (("from-device-policy", profile.from_device_acls), ("to-device-policy", profile.to_device_acls)):
        for i, name in enumerate(names):
            path = f"{mp}/{key}/access-lists/access-list[{i}]/name"
            check_literal(name, path)
            if name not in known:
                out.append(Violation("DanglingAclRef", path, f"ACL {name!r} is not defined"))

    seen_acls: set[str] = set()
    for i, acl in enumerate(profile.acls):
        p = f"/{ACL_KEY}/acl[{i}]"
        check_literal(acl.name, p + "/name")
        if acl.name in seen_acls:
            out.append(Violation("DuplicateName", p + "/name", f"duplicate ACL name {acl.name!r}"))
        seen_acls.add(acl.name)
        seen_aces: set[str] = set()
        for j, ace in enumerate(acl.aces):
            q = f"{p}/aces/ace[{j}]"
            check_literal(ace.name, q + "/name")
            if ace.name in seen_aces:
                out.append(Violation("DuplicateName", q + "/name", f"duplicate ACE name {ace.name!r}"))
            seen_aces.add(ace.name)
            m = ace.matches
            for attr, key in (("src_dnsname", DNS_SRC), ("dst_dnsname", DNS_DST)):
                value = getattr(m, attr)
                if value is not None:
                    check_literal(value, f"{q}/matches/ipv4/{key}")
            if m.mud is not None:
                mpath = f"{q}/matches/{MUD_KEY}"
                if m.mud.kind == SAME_MANUFACTURER:
                    out.append(Violation("Unsupported", mpath, "same-manufacturer is not supported", "warning"))
                if m.src_dnsname is not None or m.dst_dnsname is not None:
                    out.append(Violation("ConstructConflict", mpath, "MUD construct combined with a DNS name"))
            if (m.src_port or m.dst_port) and m.ip_proto not in (6, 17):
                out.append(Violation("PortWithoutProtocol", f"{q}/matches", "port match needs tcp or udp"))
            if acl.type == ETH_ACL and (m.ip_proto is not None or m.src_dnsname or m.dst_dnsname):
                out.append(Violation("Malformed", f"{q}/matches", "IP match inside an eth ACL"))
            if ace.action not in (ACCEPT, DROP):
                out.append(Violation("BadAction", f"{q}/actions/forwarding", f"action {ace.action!r} is not accept/drop"))
    return out


def is_valid(violations: list[Violation]) -> bool:
    return not any(v.severity == "error" for v in violations)
