"""Byte-level builders for PCAP test fixtures.

Layouts follow the libpcap file format, RFC 791 (IPv4), RFC 793 (TCP),
RFC 768 (UDP) and RFC 1035 (DNS). Checksums are left zero; the decoder
does not validate them.
"""

from __future__ import annotations

import ipaddress
import struct


def mac(text: str) -> bytes:
    return bytes(int(x, 16) for x in text.split(":"))


def ip4(text: str) -> bytes:
    return ipaddress.IPv4Address(text).packed


def ethernet(dst: str, src: str, ethertype: int, payload: bytes) -> bytes:
    return mac(dst) + mac(src) + struct.pack("!H", ethertype) + payload


def ipv4(src: str, dst: str, proto: int, payload: bytes, ttl: int = 64) -> bytes:
    header = struct.pack(
        "!BBHHHBBH4s4s",
        0x45,  # version 4, IHL 5
        0,
        20 + len(payload),
        0,
        0,
        ttl,
        proto,
        0,
        ip4(src),
        ip4(dst),
    )
    return header + payload


def udp(sport: int, dport: int, payload: bytes = b"") -> bytes:
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


TCP_FLAGS = {"F": 0x01, "S": 0x02, "R": 0x04, "A": 0x10}


def tcp(sport: int, dport: int, flags: str = "", payload: bytes = b"") -> bytes:
    bits = 0
    for c in flags:
        bits |= TCP_FLAGS[c]
    return struct.pack("!HHIIBBHHH", sport, dport, 0, 0, 5 << 4, bits, 65535, 0, 0) + payload


def icmp_echo() -> bytes:
    return struct.pack("!BBHHH", 8, 0, 0, 1, 1)


def dns_name(name: str) -> bytes:
    out = b""
    for label in name.split("."):
        out += bytes([len(label)]) + label.encode()
    return out + b"\x00"


def dns_message(qname: str, response: bool, answers=(), ident: int = 0x1234) -> bytes:
    """answers: iterable of (rtype, rdata bytes); names use a pointer to the question."""
    answers = list(answers)
    flags = 0x8180 if response else 0x0100
    header = struct.pack("!6H", ident, flags, 1, len(answers), 0, 0)
    body = dns_name(qname) + struct.pack("!HH", 1, 1)
    for rtype, rdata in answers:
        body += b"\xc0\x0c" + struct.pack("!HHIH", rtype, 1, 300, len(rdata)) + rdata
    return header + body


def pcap_file(frames, big_endian: bool = False) -> bytes:
    """frames: iterable of (ts_seconds, frame_bytes)."""
    e = ">" if big_endian else "<"
    out = struct.pack(e + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    for ts, frame in frames:
        sec = int(ts)
        usec = int(round((ts - sec) * 1e6))
        out += struct.pack(e + "IIII", sec, usec, len(frame), len(frame)) + frame
    return out


def frame_from_obj(obj: dict) -> bytes:
    """Assemble an Ethernet frame from a JSONL packet-log object."""
    eth = int(obj["eth"], 16)
    if eth != 0x0800:
        payload = bytes(max(eth, 6)) if eth < 0x0600 else bytes(28)
        return ethernet(obj["dmac"], obj["smac"], eth, payload[:46])
    proto = obj["proto"]
    if proto == 17:
        payload = b""
        if "dns" in obj:
            d = obj["dns"]
            answers = [(1, ip4(a["a"])) for a in d.get("answers", [])]
            payload = dns_message(d["qname"], bool(d["qr"]), answers)
        elif obj.get("stun"):
            payload = struct.pack("!HHI", 0x0001, 0, 0x2112A442) + bytes(12)
        l4 = udp(obj["sport"], obj["dport"], payload)
    elif proto == 6:
        l4 = tcp(obj["sport"], obj["dport"], obj.get("tcpflags", ""))
    elif proto == 1:
        l4 = icmp_echo()
    else:
        l4 = b""
    return ethernet(obj["dmac"], obj["smac"], 0x0800, ipv4(obj["sip"], obj["dip"], proto, l4))
