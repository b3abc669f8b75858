"""Command-line front end: generate, validate, compare, comply, export.

Human-readable progress and verdicts go to stderr; profiles, reports and
exports go to stdout or ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, canonical, capture, compliance, ingest, mud, profile_gen
from . import metagraph as mg

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_LIMIT = 4


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_profile(path: str, *, lenient: bool = False) -> mud.MudProfile:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise _Exit(EXIT_PARSE, f"cannot read {path}: {exc.strerror}") from None
    try:
        return mud.parse(data, lenient=lenient)
    except mud.MudSyntaxError as exc:
        raise _Exit(EXIT_PARSE, f"{path}: {exc}") from None


# --------------------------------------------------------------------------- generate


def _generate(args) -> int:
    try:
        cfg = capture.CaptureConfig(
            args.device_mac,
            args.gateway_mac,
            args.gateway_ip,
            tuple(args.local_prefix) if args.local_prefix else capture.DEFAULT_LOCAL_PREFIXES,
        )
    except capture.InvalidConfig as exc:
        raise _Exit(EXIT_CONFIG, f"invalid configuration: {exc}") from None

    last_update = profile_gen.DEFAULT_LAST_UPDATE
    if args.now:
        try:
            last_update = datetime.fromisoformat(args.now).isoformat()
        except ValueError:
            raise _Exit(EXIT_CONFIG, f"--now is not an ISO 8601 timestamp: {args.now}") from None
    meta_obj = {}
    if args.meta:
        try:
            meta_obj = json.loads(Path(args.meta).read_text())
            if not isinstance(meta_obj, dict):
                raise ValueError("expected a JSON object")
        except (OSError, ValueError) as exc:
            raise _Exit(EXIT_CONFIG, f"bad metadata file {args.meta}: {exc}") from None
    meta = profile_gen.ProfileMeta.from_json(meta_obj, last_update)

    try:
        records = ingest.read_trace(args.input)
        result = capture.run_capture(records, cfg)
    except OSError as exc:
        raise _Exit(EXIT_PARSE, f"cannot read {args.input}: {exc.strerror}") from None
    except (ingest.IngestError, capture.OutOfOrderTimestamp, UnicodeDecodeError) as exc:
        raise _Exit(EXIT_PARSE, f"{args.input}: {exc}") from None

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", profile_gen.UnresolvedEndpoint)
        profile = profile_gen.flows_to_mud(
            list(result.proactive) + list(result.rules),
            result.cache,
            meta,
            cfg,
            include_arp=not args.no_arp,
            wildcard_threshold=args.wildcard_threshold,
        )
    for w in caught:
        _say(f"warning: {w.message}")

    _emit(mud.serialize(profile), args.out)
    category = profile_gen.classify_profile(profile)
    _say(f"{len(records)} packets, {len(result.skipped)} skipped")
    _say(f"{len(result.rules)} reactive rules")
    _say(f"{profile.ace_count} ACEs, category {category.value}")
    return EXIT_OK


# --------------------------------------------------------------------------- validate


def _validate(args) -> int:
    profile = _load_profile(args.profile, lenient=args.lenient)
    violations = mud.validate_syntax(profile)
    graph = mg.from_mud(profile)
    try:
        redundancies = mg.find_redundancies(graph)
    except mg.SearchSpaceTooLarge as exc:
        raise _Exit(EXIT_LIMIT, f"redundancy search aborted: {exc}") from None
    ambiguities = mg.find_ambiguities(graph)
    errors = [v for v in violations if v.severity == "error"]

    for v in violations:
        _say(f"{v.severity}: {v.kind} at {v.path}: {v.message}")
    for r in redundancies:
        _say(f"redundant: {r.ace} (covered by {', '.join(r.witness)})")
    for a, b in ambiguities:
        _say(f"ambiguous: {a} / {b}")
    _say(f"{len(errors)} violations, {len(redundancies)} redundancies, {len(ambiguities)} ambiguities")

    report = {
        "violations": [v.as_dict() for v in violations],
        "redundancies": [{"ace": r.ace, "witness": list(r.witness)} for r in redundancies],
        "ambiguities": [list(pair) for pair in ambiguities],
    }
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK if not (errors or redundancies or ambiguities) else EXIT_FAIL


# --------------------------------------------------------------------------- compare


def _compare(args) -> int:
    a = _load_profile(args.a)
    b = _load_profile(args.b)
    try:
        pa, pb = canonical.policy_of(a), canonical.policy_of(b)
        if args.mode == "equiv":
            holds = canonical.equivalent(pa, pb)
        else:
            holds = canonical.includes(pa, pb, covering=True)
    except canonical.OverlappingActionConflict as exc:
        raise _Exit(EXIT_PARSE, f"cannot compare non-whitelist profiles: {exc}") from None
    relation = "equivalent to" if args.mode == "equiv" else "included in"
    _say(f"{args.a} is {'' if holds else 'not '}{relation} {args.b}")
    _emit(json.dumps({"mode": args.mode, "holds": holds}) + "\n", args.out)
    return EXIT_OK if holds else EXIT_FAIL


# --------------------------------------------------------------------------- comply


def _comply(args) -> int:
    profile = _load_profile(args.profile)
    try:
        zones = compliance.load_zones(Path(args.zones)) if args.zones else compliance.bundled_zones()
    except (OSError, compliance.ZoneFileError) as exc:
        raise _Exit(EXIT_PARSE, f"bad zone file: {exc}") from None
    try:
        selected = [compliance.select_zone(zones, n) for n in args.zone] if args.zone else zones
    except compliance.UnknownZone as exc:
        raise _Exit(EXIT_CONFIG, str(exc)) from None

    reports = [compliance.comply(profile, z) for z in zones]
    for r in reports:
        for name, _boxes in r.violating_aces:
            _say(f"{r.zone}: {name} not permitted")
    if args.format == "json":
        text = compliance.reports_json(reports)
    else:
        text = compliance.reports_table(reports, device=profile.systeminfo or "")
    _emit(text, args.out)
    chosen = {z.name for z in selected}
    return EXIT_OK if all(r.safe for r in reports if r.zone in chosen) else EXIT_FAIL


# --------------------------------------------------------------------------- export


def _flow_label(rule: canonical.Rule) -> str:
    if rule.group.ethertype != canonical.ETH_IPV4:
        eth = "*" if rule.group.ethertype == canonical.ANY_ETHERTYPE else f"0x{rule.group.ethertype:04x}"
        return f"eth/{eth}"
    lo, hi = rule.box.proto
    if (lo, hi) == canonical.PROTO_RANGE:
        return "ip"
    proto = {1: "icmp", 6: "tcp", 17: "udp"}.get(lo, f"ip{lo}") if lo == hi else f"ip{lo}-{hi}"
    outbound = rule.group.direction == canonical.FROM_DEVICE
    remote, local = (rule.box.dport, rule.box.sport) if outbound else (rule.box.sport, rule.box.dport)
    port = remote if remote != canonical.PORT_RANGE else local
    if port == canonical.PORT_RANGE:
        return proto
    return f"{proto}/{port[0]}" if port[0] == port[1] else f"{proto}/{port[0]}-{port[1]}"


def sankey(profile: mud.MudProfile) -> dict:
    """Flow diagram data: endpoint nodes and ACE-count weighted links."""
    nodes = [canonical.DEVICE]
    links: dict[tuple[str, str, str], int] = {}
    for direction, acl, ace in profile.directed_aces():
        rule = canonical.ace_rule(direction, acl, ace)
        src, dst = rule.group.src, rule.group.dst
        for n in (src, dst):
            if n not in nodes:
                nodes.append(n)
        key = (src, dst, _flow_label(rule))
        links[key] = links.get(key, 0) + 1
    return {
        "nodes": [{"id": n} for n in nodes],
        "links": [{"source": s, "target": t, "value": v, "label": lab} for (s, t, lab), v in links.items()],
    }


def _export(args) -> int:
    profile = _load_profile(args.profile)
    if args.format == "dot":
        text = mg.to_dot(mg.from_mud(profile), name=profile.systeminfo or "mud")
    else:
        text = json.dumps(sankey(profile), indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mudtools", description="Generate and audit MUD profiles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a MUD profile from a packet trace")
    g.add_argument("--input", required=True, help="PCAP or JSONL packet log")
    g.add_argument("--device-mac", required=True)
    g.add_argument("--gateway-mac", required=True)
    g.add_argument("--gateway-ip", required=True)
    g.add_argument("--local-prefix", action="append", help="local subnet (repeatable)")
    g.add_argument("--meta", help="JSON with name, mud_url, cache_validity")
    g.add_argument("--now", help="ISO 8601 timestamp for last-update")
    g.add_argument("--no-arp", action="store_true", help="omit ARP permissions")
    g.add_argument("--wildcard-threshold", type=int, default=profile_gen.DEFAULT_WILDCARD_THRESHOLD)
    g.add_argument("--out")
    g.set_defaults(func=_generate)

    v = sub.add_parser("validate", help="report syntax violations, redundancies and ambiguities")
    v.add_argument("profile")
    v.add_argument("--lenient", action="store_true")
    v.add_argument("--out")
    v.set_defaults(func=_validate)

    c = sub.add_parser("compare", help="test equivalence or inclusion of two profiles")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--mode", choices=("equiv", "includes"), default="equiv")
    c.add_argument("--out")
    c.set_defaults(func=_compare)

    z = sub.add_parser("comply", help="check a profile against zone policies")
    z.add_argument("profile")
    z.add_argument("--zones", help="zone file (defaults to the bundled sample)")
    z.add_argument("--zone", action="append", help="zone that must be safe (repeatable)")
    z.add_argument("--format", choices=("table", "json"), default="table")
    z.add_argument("--out")
    z.set_defaults(func=_comply)

    e = sub.add_parser("export", help="export the policy as DOT or Sankey JSON")
    e.add_argument("profile")
    e.add_argument("--format", choices=("dot", "sankey"), required=True)
    e.add_argument("--out")
    e.set_defaults(func=_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Exit as exc:
        _say(f"error: {exc}")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
