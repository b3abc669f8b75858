"""Regenerate the hand-designed MUD profile fixtures.

    python tests/fixtures/make_profiles.py

belkin_redundant.json: ICMP to/from the local network duplicated for the
gateway, and gateway DNS duplicated by an any-port UDP local rule, giving
three redundant ACEs. split_a.json / split_b.json: two decompositions of the
same TCP port region, one overlapping (4 rules) and one disjoint (5 rules).
The bad_*.json files each carry exactly one syntax offense.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from mudtools import mud

HERE = Path(__file__).resolve().parent
LAST_UPDATE = "1970-01-01T00:00:00+00:00"


def profile(name, from_aces, to_aces):
    acls = [mud.Acl(f"from-ipv4-{name}", mud.IPV4_ACL, tuple(from_aces))]
    if to_aces:
        acls.append(mud.Acl(f"to-ipv4-{name}", mud.IPV4_ACL, tuple(to_aces)))
    return mud.MudProfile(
        mud_url=f"https://example.com/{name}.json",
        last_update=LAST_UPDATE,
        systeminfo=name,
        from_device_acls=(acls[0].name,),
        to_device_acls=tuple(a.name for a in acls[1:]),
        acls=tuple(acls),
    )


def ace(name, **fields):
    return mud.Ace(name, mud.MatchSet(**fields))


GW = mud.MudConstruct.gateway()
LOCAL = mud.MudConstruct(mud.LOCAL_NETWORKS)
P = mud.PortMatch


def belkin():
    return profile(
        "belkin-camera",
        [
            ace("from-icmp-local", ip_proto=1, mud=LOCAL),
            ace("from-icmp-controller", ip_proto=1, mud=GW),
            ace("from-udp-local-any", ip_proto=17, mud=LOCAL),
            ace("from-udp-controller-53", ip_proto=17, dst_port=P.eq(53), mud=GW),
            ace("from-tcp-cloud-443", ip_proto=6, dst_dnsname="cloud.example.com", dst_port=P.eq(443)),
        ],
        [
            ace("to-icmp-local", ip_proto=1, mud=LOCAL),
            ace("to-icmp-controller", ip_proto=1, mud=GW),
            ace("to-udp-controller-53", ip_proto=17, src_port=P.eq(53), mud=GW),
            ace("to-tcp-cloud-443", ip_proto=6, src_dnsname="cloud.example.com", src_port=P.eq(443)),
        ],
    )


def split_profile(boxes, name):
    aces = [
        ace(f"from-tcp-{i}", ip_proto=6, dst_dnsname="server.example.com", src_port=P(*s), dst_port=P(*d))
        for i, (s, d) in enumerate(boxes)
    ]
    return profile(name, aces, [])


SPLIT_A = [((0, 9), (0, 19)), ((5, 14), (10, 29)), ((0, 9), (5, 15)), ((5, 14), (20, 29))]
SPLIT_B = [((0, 4), (0, 19)), ((5, 9), (0, 9)), ((5, 9), (10, 29)), ((10, 14), (10, 19)), ((10, 14), (20, 29))]


def negatives(base: dict):
    def first_ace(doc):
        return doc[mud.ACL_KEY]["acl"][0]["aces"]["ace"][0]

    literal = copy.deepcopy(base)
    first_ace(literal)["matches"]["ipv4"]["destination-ipv4-network"] = "203.0.113.7/32"
    reject = copy.deepcopy(base)
    first_ace(reject)["actions"]["forwarding"] = "reject"
    unknown = copy.deepcopy(base)
    first_ace(unknown)["matches"]["acme-extensions:vlan"] = {"id": 7}
    return {"bad_ip_literal.json": literal, "bad_action.json": reject, "bad_unknown_module.json": unknown}


def main():
    (HERE / "belkin_redundant.json").write_text(mud.serialize(belkin()))
    (HERE / "split_a.json").write_text(mud.serialize(split_profile(SPLIT_A, "split-a")))
    (HERE / "split_b.json").write_text(mud.serialize(split_profile(SPLIT_B, "split-b")))
    base = json.loads((HERE / "blipcare_golden.json").read_text())
    for name, doc in negatives(base).items():
        (HERE / name).write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
