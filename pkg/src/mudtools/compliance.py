"""Check MUD profiles against organisational zone policies.

A zone is a whitelist of permitted (group pattern, box) rules. An ACE
complies with a zone when every packet it accepts is also permitted there;
otherwise the uncovered boxes are reported as witnesses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, Union

from . import canonical as cn
from . import mud


class UnknownZone(LookupError):
    def __init__(self, name: str):
        super().__init__(f"unknown zone: {name}")
        self.name = name


class ZoneFileError(ValueError):
    pass


@dataclass(frozen=True)
class ZonePolicy:
    name: str
    permitted: tuple[cn.Rule, ...]
    notes: str = ""


@dataclass(frozen=True)
class ComplianceReport:
    zone: str
    total_aces: int
    violating_aces: tuple[tuple[str, tuple[cn.Box, ...]], ...] = field(default=())

    @property
    def violation_pct(self) -> int:
        if not self.total_aces:
            return 0
        # round half up: 1/8 -> 13, not banker's 12
        return (200 * len(self.violating_aces) + self.total_aces) // (2 * self.total_aces)

    @property
    def safe(self) -> bool:
        return not self.violating_aces

    def to_json(self) -> dict:
        return {
            "zone": self.zone,
            "total_aces": self.total_aces,
            "violation_pct": self.violation_pct,
            "safe": self.safe,
            "violating_aces": [
                {"ace": name, "uncovered": [b.as_dict() for b in boxes]}
                for name, boxes in self.violating_aces
            ],
        }


# --------------------------------------------------------------------------- zone files


def _interval(value, full: cn.Interval, what: str) -> cn.Interval:
    if value is None or value == "*":
        return full
    if isinstance(value, int) and not isinstance(value, bool):
        return (value, value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value):
        return (value[0], value[1])
    raise ZoneFileError(f"bad {what}: {value!r}")


def _ethertype(value) -> int:
    if value is None:
        return cn.ETH_IPV4
    if value == "*":
        return cn.ANY_ETHERTYPE
    if isinstance(value, str):
        return int(value, 16)
    if isinstance(value, int):
        return value
    raise ZoneFileError(f"bad ethertype: {value!r}")


def _pattern(obj: dict) -> cn.Rule:
    direction = obj.get("direction")
    if direction == cn.FROM_DEVICE:
        src, dst = obj.get("src", cn.DEVICE), obj.get("dst", cn.ANY)
    elif direction == cn.TO_DEVICE:
        src, dst = obj.get("src", cn.ANY), obj.get("dst", cn.DEVICE)
    else:
        raise ZoneFileError(f"bad direction: {direction!r}")
    try:
        group = cn.GroupKey(direction, src, dst, _ethertype(obj.get("ethertype")))
        box = cn.Box(
            _interval(obj.get("proto"), cn.PROTO_RANGE, "proto"),
            _interval(obj.get("sport"), cn.PORT_RANGE, "sport"),
            _interval(obj.get("dport"), cn.PORT_RANGE, "dport"),
        )
    except ValueError as exc:
        raise ZoneFileError(str(exc)) from exc
    return cn.Rule(group, box)


def load_zones(source: Union[str, bytes, dict, Path]) -> list[ZonePolicy]:
    """Parse a zone file (path, JSON text or decoded object), keeping file order."""
    if isinstance(source, Path):
        source = source.read_text()
    if isinstance(source, (str, bytes)):
        try:
            source = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ZoneFileError(f"invalid JSON: {exc}") from exc
    if not isinstance(source, dict) or not isinstance(source.get("zones"), list):
        raise ZoneFileError('zone file must be an object with a "zones" list')
    zones = []
    for z in source["zones"]:
        if not isinstance(z, dict) or not isinstance(z.get("name"), str):
            raise ZoneFileError("every zone needs a name")
        rules = tuple(_pattern(p) for p in z.get("permitted", []))
        zones.append(ZonePolicy(z["name"], rules, z.get("notes", "")))
    return zones


def bundled_zones() -> list[ZonePolicy]:
    """The sample SCADA / DMZ / Corp Zone triple shipped with the package."""
    return load_zones(resources.files("mudtools.data").joinpath("zones.json").read_text())


def select_zone(zones: Sequence[ZonePolicy], name: str) -> ZonePolicy:
    for z in zones:
        if z.name == name:
            return z
    raise UnknownZone(name)


# --------------------------------------------------------------------------- checks


def comply(profile: mud.MudProfile, zone: ZonePolicy) -> ComplianceReport:
    """Per-ACE inclusion test of ``profile`` against ``zone``.

    Drop ACEs permit nothing and so never violate; they still count towards
    the total.
    """
    violating = []
    total = 0
    for direction, acl, ace in profile.directed_aces():
        total += 1
        rule = cn.ace_rule(direction, acl, ace)
        if rule.action != mud.ACCEPT:
            continue
        residue = cn.uncovered(rule.group, rule.box, zone.permitted, covering=True)
        if residue:
            violating.append((ace.name, tuple(residue)))
    return ComplianceReport(zone.name, total, tuple(violating))


def safe_zones(profile: mud.MudProfile, zones: Iterable[ZonePolicy]) -> list[str]:
    return [z.name for z in zones if comply(profile, z).safe]


def reports_json(reports: Sequence[ComplianceReport]) -> str:
    return json.dumps({"reports": [r.to_json() for r in reports]}, indent=2) + "\n"


def reports_table(reports: Sequence[ComplianceReport], device: str = "") -> str:
    """Aligned text table: one row per zone plus the safe-zone summary."""
    header = ("Zone", "ACEs", "Violating", "% Violating", "Safe")
    rows = [
        (r.zone, str(r.total_aces), str(len(r.violating_aces)), str(r.violation_pct), "yes" if r.safe else "no")
        for r in reports
    ]
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    lines = []
    if device:
        lines.append(f"Device: {device}")
    for row in (header, *rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    safe = [r.zone for r in reports if r.safe]
    lines.append(f"Safe to install: {', '.join(safe) if safe else 'none'}")
    return "\n".join(lines) + "\n"
