"""Regenerate the synthetic trace fixtures.

    python tests/fixtures/make_fixtures.py

Writes blipcare.jsonl, awair.jsonl / awair.pcap and stun_camera.jsonl next
to this script. The golden profile is produced separately by
``mudtools generate`` and reviewed by hand.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from pcapbuild import frame_from_obj, pcap_file  # noqa: E402

DEV = "70:ee:50:00:00:01"
GW = "14:cc:20:00:00:fe"
BCAST = "ff:ff:ff:ff:ff:ff"
DEV_IP = "192.168.1.50"
GW_IP = "192.168.1.1"


class Trace:
    def __init__(self):
        self.ts = 1_500_000_000.0
        self.lines: list[dict] = []

    def add(self, **obj):
        self.ts += 0.25
        obj = {"ts": round(self.ts, 6), **obj}
        self.lines.append(obj)

    def out(self, **kw):
        self.add(smac=DEV, dmac=GW, eth="0x0800", sip=DEV_IP, **kw)

    def inn(self, **kw):
        self.add(smac=GW, dmac=DEV, eth="0x0800", dip=DEV_IP, **kw)

    def dns(self, resolver: str, qname: str, addr: str, sport: int):
        self.out(dip=resolver, proto=17, sport=sport, dport=53, dns={"qr": 0, "qname": qname, "answers": []})
        self.inn(sip=resolver, proto=17, sport=53, dport=sport,
                 dns={"qr": 1, "qname": qname, "answers": [{"name": qname, "a": addr}]})

    def tls(self, addr: str, port: int, sport: int):
        self.out(dip=addr, proto=6, sport=sport, dport=port, tcpflags="S")
        self.inn(sip=addr, proto=6, sport=port, dport=sport, tcpflags="SA")
        self.out(dip=addr, proto=6, sport=sport, dport=port, tcpflags="A")
        self.out(dip=addr, proto=6, sport=sport, dport=port, tcpflags="A")
        self.inn(sip=addr, proto=6, sport=port, dport=sport, tcpflags="A")
        self.out(dip=addr, proto=6, sport=sport, dport=port, tcpflags="FA")

    def write(self, path: Path):
        path.write_text("".join(json.dumps(o) + "\n" for o in self.lines))


def blipcare() -> Trace:
    t = Trace()
    t.add(smac=DEV, dmac=BCAST, eth="0x0806")
    t.add(smac=GW, dmac=DEV, eth="0x0806")
    t.dns(GW_IP, "tech.carematix.com", "203.0.113.7", 40001)
    t.tls("203.0.113.7", 8777, 50000)
    # second reading: same flows, new ephemeral ports
    t.dns(GW_IP, "tech.carematix.com", "203.0.113.7", 40002)
    t.tls("203.0.113.7", 8777, 50001)
    return t


def awair() -> Trace:
    t = Trace()
    t.add(smac=DEV, dmac=BCAST, eth="0x0006")
    t.add(smac=DEV, dmac=BCAST, eth="0x0800", sip="0.0.0.0", dip="255.255.255.255", proto=17, sport=68, dport=67)
    t.dns(GW_IP, "api.awair.is", "198.51.100.10", 41000)
    t.dns(GW_IP, "ota.awair.is", "198.51.100.11", 41001)
    t.dns("8.8.8.8", "timeserver.awair.is", "198.51.100.12", 41002)
    t.dns("8.8.8.8", "messaging.awair.is", "198.51.100.13", 41003)
    t.dns("8.8.8.8", "pool.ntp.org", "203.0.113.123", 41004)
    t.out(dip="203.0.113.123", proto=17, sport=123, dport=123)
    t.inn(sip="203.0.113.123", proto=17, sport=123, dport=123)
    t.tls("198.51.100.10", 443, 52000)
    t.tls("198.51.100.11", 443, 52001)
    t.tls("198.51.100.12", 443, 52002)
    t.tls("198.51.100.13", 8883, 52003)
    t.tls("198.51.100.10", 443, 52004)
    return t


def stun_camera() -> Trace:
    t = Trace()
    t.dns(GW_IP, "cam.example.net", "198.51.100.40", 42000)
    t.tls("198.51.100.40", 443, 53000)
    t.out(dip="203.0.113.200", proto=17, sport=60000, dport=3478, stun=True)
    t.inn(sip="203.0.113.200", proto=17, sport=3478, dport=60000, stun=True)
    t.out(dip="203.0.113.201", proto=17, sport=60000, dport=19302, stun=True)
    return t


def main():
    blipcare().write(HERE / "blipcare.jsonl")
    aw = awair()
    aw.write(HERE / "awair.jsonl")
    (HERE / "awair.pcap").write_bytes(pcap_file((o["ts"], frame_from_obj(o)) for o in aw.lines))
    stun_camera().write(HERE / "stun_camera.jsonl")


if __name__ == "__main__":
    main()
