"""Packet trace decoding.

Two input formats are understood: classic libpcap files with Ethernet
framing, and a line-oriented JSON packet log. Both produce a flat stream of
:class:`PacketRecord` values carrying only the header fields the capture
engine needs (MACs, ethertype, IPv4 five-tuple, TCP flags, DNS A answers).
"""

from __future__ import annotations

import ipaddress
import json
import re
import struct
from dataclasses import dataclass
from ipaddress import IPv4Address
from typing import Iterable, Iterator, Optional

ETH_IPV4 = 0x0800
ETH_ARP = 0x0806
ETH_IPV6 = 0x86DD
ETH_VLAN = 0x8100
ETH_EAPOL = 0x888E

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMPV6 = 58

TCP_FLAG_BITS = {"FIN": 0x01, "SYN": 0x02, "RST": 0x04, "ACK": 0x10}
_FLAG_LETTERS = {"S": "SYN", "A": "ACK", "F": "FIN", "R": "RST"}
_LETTER_ORDER = "SAFR"

STUN_MAGIC_COOKIE = 0x2112A442

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")


class IngestError(ValueError):
    """Base class for trace decoding failures."""


class BadMagic(IngestError):
    pass


class UnsupportedLinkType(IngestError):
    pass


class TruncatedRecord(IngestError):
    pass


class TruncatedMessage(IngestError):
    pass


class CompressionLoop(IngestError):
    pass


class MalformedLine(IngestError):
    def __init__(self, lineno: int, reason: str = "malformed line"):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class FieldOutOfRange(IngestError):
    def __init__(self, lineno: int, field_name: str):
        super().__init__(f"line {lineno}: field {field_name!r} out of range")
        self.lineno = lineno
        self.field = field_name


def normalize_mac(value: str) -> str:
    mac = value.strip().lower().replace("-", ":")
    if not _MAC_RE.match(mac):
        raise ValueError(f"invalid MAC address: {value!r}")
    return mac


def mac_to_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


def is_group_mac(mac: str) -> bool:
    """True for broadcast and multicast MACs (I/G bit set)."""
    return bool(int(mac[:2], 16) & 0x01)


@dataclass(frozen=True)
class DnsMessage:
    is_response: bool
    query_name: str
    answers: tuple[tuple[str, IPv4Address], ...] = ()

    def __post_init__(self):
        if self.answers and not self.is_response:
            raise ValueError("DNS query cannot carry answers")


@dataclass(frozen=True)
class PacketRecord:
    """One decoded frame.

    ``stun`` marks UDP datagrams whose payload carries the STUN magic cookie;
    it is derived from the payload, which is otherwise not retained.
    """

    ts: float
    src_mac: str
    dst_mac: str
    ethertype: int
    src_ip: Optional[IPv4Address] = None
    dst_ip: Optional[IPv4Address] = None
    ip_proto: Optional[int] = None
    src_port: Optional[int] = None
    dst_port: Optional[int] = None
    tcp_flags: Optional[frozenset[str]] = None
    dns: Optional[DnsMessage] = None
    stun: bool = False

    def __post_init__(self):
        has_ports = self.src_port is not None or self.dst_port is not None
        if self.ip_proto in (PROTO_TCP, PROTO_UDP):
            if self.src_port is None or self.dst_port is None:
                raise ValueError("TCP/UDP record requires both ports")
        elif has_ports:
            raise ValueError("ports are only valid for TCP/UDP")
        for port in (self.src_port, self.dst_port):
            if port is not None and not 0 <= port <= 0xFFFF:
                raise ValueError(f"port out of range: {port}")
        if self.tcp_flags is not None and self.ip_proto != PROTO_TCP:
            raise ValueError("tcp_flags only valid for TCP")
        if self.dns is not None and not (
            self.ip_proto == PROTO_UDP and 53 in (self.src_port, self.dst_port)
        ):
            raise ValueError("dns only valid on UDP port 53")
        if self.stun and self.ip_proto != PROTO_UDP:
            raise ValueError("stun only valid for UDP")
        if self.ethertype != ETH_IPV4:
            if self.src_ip is not None or self.dst_ip is not None:
                raise ValueError("IPv4 addresses require ethertype 0x0800")
            if self.ethertype == ETH_IPV6:
                if self.ip_proto not in (None, PROTO_ICMPV6):
                    raise ValueError("IPv6 records carry ip_proto only for ICMPv6")
            elif self.ip_proto is not None:
                raise ValueError("non-IP frame cannot carry ip_proto")

    @property
    def is_syn(self) -> bool:
        return bool(self.tcp_flags) and "SYN" in self.tcp_flags and "ACK" not in self.tcp_flags

    @property
    def is_synack(self) -> bool:
        return bool(self.tcp_flags) and {"SYN", "ACK"} <= self.tcp_flags


# --------------------------------------------------------------------------- DNS


def _read_name(msg: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly compressed name; return (name, offset after it)."""
    labels: list[str] = []
    end: Optional[int] = None
    jumps = 0
    pos = offset
    while True:
        if pos >= len(msg):
            raise TruncatedMessage("name runs past end of message")
        length = msg[pos]
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(msg):
                raise TruncatedMessage("truncated compression pointer")
            if end is None:
                end = pos + 2
            jumps += 1
            if jumps > len(msg):
                raise CompressionLoop("compression pointer chain too long")
            pos = ((length & 0x3F) << 8) | msg[pos + 1]
            continue
        if length & 0xC0:
            raise TruncatedMessage(f"unsupported label type 0x{length:02x}")
        pos += 1
        if length == 0:
            break
        if pos + length > len(msg):
            raise TruncatedMessage("label runs past end of message")
        labels.append(msg[pos:pos + length].decode("ascii", errors="replace"))
        pos += length
    return ".".join(labels).lower().rstrip("."), (end if end is not None else pos)


def parse_dns(payload: bytes) -> DnsMessage:
    """Extract QR, the first question name and A-record answers."""
    if len(payload) < 12:
        raise TruncatedMessage("DNS header shorter than 12 bytes")
    _ident, flags, qdcount, ancount, _ns, _ar = struct.unpack("!6H", payload[:12])
    is_response = bool(flags & 0x8000)
    pos = 12
    query_name = ""
    for i in range(qdcount):
        name, pos = _read_name(payload, pos)
        if pos + 4 > len(payload):
            raise TruncatedMessage("truncated question")
        pos += 4
        if i == 0:
            query_name = name
    answers: list[tuple[str, IPv4Address]] = []
    for _ in range(ancount):
        name, pos = _read_name(payload, pos)
        if pos + 10 > len(payload):
            raise TruncatedMessage("truncated resource record")
        rtype, rclass, _ttl, rdlen = struct.unpack("!HHIH", payload[pos:pos + 10])
        pos += 10
        if pos + rdlen > len(payload):
            raise TruncatedMessage("truncated rdata")
        if rtype == 1 and rclass == 1 and rdlen == 4:
            answers.append((name, IPv4Address(payload[pos:pos + 4])))
        pos += rdlen
    if not is_response:
        answers = []
    return DnsMessage(is_response, query_name, tuple(answers))


# --------------------------------------------------------------------------- PCAP

_PCAP_MAGIC = 0xA1B2C3D4


def _decode_frame(ts: float, frame: bytes) -> PacketRecord:
    if len(frame) < 14:
        raise TruncatedRecord("frame shorter than Ethernet header")
    dst_mac = mac_to_str(frame[0:6])
    src_mac = mac_to_str(frame[6:12])
    (ethertype,) = struct.unpack("!H", frame[12:14])
    if ethertype == ETH_VLAN:
        raise UnsupportedLinkType("802.1Q tagged frames are not supported")
    base = dict(ts=ts, src_mac=src_mac, dst_mac=dst_mac, ethertype=ethertype)
    body = frame[14:]

    if ethertype == ETH_IPV6:
        if len(body) >= 40 and body[6] == PROTO_ICMPV6:
            return PacketRecord(**base, ip_proto=PROTO_ICMPV6)
        return PacketRecord(**base)
    if ethertype != ETH_IPV4 or len(body) < 20:
        return PacketRecord(**base)

    ihl = (body[0] & 0x0F) * 4
    proto = body[9]
    frag_offset = struct.unpack("!H", body[6:8])[0] & 0x1FFF
    src_ip = IPv4Address(body[12:16])
    dst_ip = IPv4Address(body[16:20])
    ip = dict(base, src_ip=src_ip, dst_ip=dst_ip)
    l4 = body[ihl:]

    if proto == PROTO_TCP:
        if frag_offset or len(l4) < 14:
            return PacketRecord(**ip)
        sport, dport = struct.unpack("!HH", l4[:4])
        bits = l4[13]
        flags = frozenset(n for n, b in TCP_FLAG_BITS.items() if bits & b)
        return PacketRecord(**ip, ip_proto=proto, src_port=sport, dst_port=dport, tcp_flags=flags)
    if proto == PROTO_UDP:
        if frag_offset or len(l4) < 8:
            return PacketRecord(**ip)
        sport, dport = struct.unpack("!HH", l4[:4])
        payload = l4[8:]
        dns = parse_dns(payload) if 53 in (sport, dport) else None
        stun = len(payload) >= 8 and payload[0] & 0xC0 == 0 and (
            struct.unpack("!I", payload[4:8])[0] == STUN_MAGIC_COOKIE
        )
        return PacketRecord(**ip, ip_proto=proto, src_port=sport, dst_port=dport, dns=dns, stun=stun)
    return PacketRecord(**ip, ip_proto=proto)


def parse_pcap(data: bytes) -> Iterator[PacketRecord]:
    """Yield one record per captured frame of a classic PCAP file.

    Records are yielded lazily, so a truncated tail raises
    :class:`TruncatedRecord` only after every complete frame was produced.
    """
    if len(data) < 4:
        raise BadMagic("file shorter than magic number")
    if struct.unpack("<I", data[:4])[0] == _PCAP_MAGIC:
        endian = "<"
    elif struct.unpack(">I", data[:4])[0] == _PCAP_MAGIC:
        endian = ">"
    else:
        raise BadMagic(f"unrecognized magic {data[:4].hex()}")
    if len(data) < 24:
        raise TruncatedRecord("truncated global header")
    network = struct.unpack(endian + "I", data[20:24])[0]
    if network != 1:
        raise UnsupportedLinkType(f"link type {network} is not Ethernet")

    pos = 24
    while pos < len(data):
        if pos + 16 > len(data):
            raise TruncatedRecord(f"truncated record header at offset {pos}")
        ts_sec, ts_usec, incl_len, _orig = struct.unpack(endian + "IIII", data[pos:pos + 16])
        pos += 16
        if pos + incl_len > len(data):
            raise TruncatedRecord(f"truncated record data at offset {pos}")
        frame = data[pos:pos + incl_len]
        pos += incl_len
        yield _decode_frame(ts_sec + ts_usec / 1e6, frame)


# --------------------------------------------------------------------------- JSONL


def _flags_from_letters(letters: str) -> frozenset[str]:
    if any(c not in _FLAG_LETTERS for c in letters):
        raise ValueError(f"bad tcp flag letters {letters!r}")
    return frozenset(_FLAG_LETTERS[c] for c in letters)


def _record_from_obj(obj: dict, lineno: int) -> PacketRecord:
    def int_field(name: str, hi: int) -> Optional[int]:
        value = obj.get(name)
        if value is None:
            return None
        if not isinstance(value, int) or isinstance(value, bool):
            raise MalformedLine(lineno, f"field {name!r} must be an integer")
        if not 0 <= value <= hi:
            raise FieldOutOfRange(lineno, name)
        return value

    def ip_field(name: str) -> Optional[IPv4Address]:
        value = obj.get(name)
        if value is None:
            return None
        try:
            return IPv4Address(value)
        except (ipaddress.AddressValueError, ValueError, TypeError):
            raise MalformedLine(lineno, f"field {name!r} is not a dotted quad") from None

    try:
        ts = float(obj["ts"])
        src_mac = normalize_mac(obj["smac"])
        dst_mac = normalize_mac(obj["dmac"])
        eth_text = obj["eth"]
        ethertype = int(eth_text, 16)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedLine(lineno, f"bad link-layer fields: {exc}") from None
    if not 0 <= ethertype <= 0xFFFF:
        raise FieldOutOfRange(lineno, "eth")

    proto = int_field("proto", 0xFF)
    sport = int_field("sport", 0xFFFF)
    dport = int_field("dport", 0xFFFF)
    flags = None
    if "tcpflags" in obj:
        try:
            flags = _flags_from_letters(obj["tcpflags"])
        except (TypeError, ValueError):
            raise MalformedLine(lineno, "bad tcpflags") from None
    dns = None
    if "dns" in obj:
        try:
            d = obj["dns"]
            answers = tuple(
                (a["name"].lower().rstrip("."), IPv4Address(a["a"])) for a in d.get("answers", [])
            )
            dns = DnsMessage(bool(d["qr"]), d["qname"].lower().rstrip("."), answers)
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise MalformedLine(lineno, f"bad dns object: {exc}") from None
    try:
        return PacketRecord(
            ts=ts,
            src_mac=src_mac,
            dst_mac=dst_mac,
            ethertype=ethertype,
            src_ip=ip_field("sip"),
            dst_ip=ip_field("dip"),
            ip_proto=proto,
            src_port=sport,
            dst_port=dport,
            tcp_flags=flags,
            dns=dns,
            stun=bool(obj.get("stun", False)),
        )
    except ValueError as exc:
        raise MalformedLine(lineno, str(exc)) from None


def parse_jsonl(lines: Iterable[str] | str) -> list[PacketRecord]:
    if isinstance(lines, str):
        lines = lines.splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedLine(lineno, "invalid JSON") from None
        if not isinstance(obj, dict):
            raise MalformedLine(lineno, "expected a JSON object")
        records.append(_record_from_obj(obj, lineno))
    return records


def record_to_obj(rec: PacketRecord) -> dict:
    obj: dict = {"ts": rec.ts, "smac": rec.src_mac, "dmac": rec.dst_mac, "eth": f"0x{rec.ethertype:04x}"}
    if rec.src_ip is not None:
        obj["sip"] = str(rec.src_ip)
    if rec.dst_ip is not None:
        obj["dip"] = str(rec.dst_ip)
    if rec.ip_proto is not None:
        obj["proto"] = rec.ip_proto
    if rec.src_port is not None:
        obj["sport"] = rec.src_port
        obj["dport"] = rec.dst_port
    if rec.tcp_flags is not None:
        obj["tcpflags"] = "".join(c for c in _LETTER_ORDER if _FLAG_LETTERS[c] in rec.tcp_flags)
    if rec.dns is not None:
        obj["dns"] = {
            "qr": int(rec.dns.is_response),
            "qname": rec.dns.query_name,
            "answers": [{"name": n, "a": str(a)} for n, a in rec.dns.answers],
        }
    if rec.stun:
        obj["stun"] = True
    return obj


def serialize_jsonl(records: Iterable[PacketRecord]) -> str:
    return "".join(json.dumps(record_to_obj(r)) + "\n" for r in records)


def read_trace(path, data: Optional[bytes] = None) -> list[PacketRecord]:
    """Load a trace file, sniffing PCAP magic before falling back to JSONL."""
    if data is None:
        with open(path, "rb") as fh:
            data = fh.read()
    if data[:4] in (b"\xd4\xc3\xb2\xa1", b"\xa1\xb2\xc3\xd4"):
        return list(parse_pcap(data))
    return parse_jsonl(data.decode("utf-8").splitlines())
