"""Bluetooth test-case identifiers.

Grammar::

    <spec>/<IUT role>/<seg>[/<seg> ... up to 5]/<BV|BI>-<nn>-<y>

e.g. ``AVRCP/CT/CON/BV-01-C``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

MAX_SEGMENTS = 5
BEHAVIORS = ("BV", "BI")

_PART = re.compile(r"^[A-Za-z0-9_]+$")
_TAIL = re.compile(r"^([A-Za-z]{2})-(\d{1,2})-([A-Za-z])$")


class BluetoothIdError(ValueError):
    pass


@dataclass(frozen=True)
class BluetoothTestCaseId:
    spec: str
    iut_role: str
    segments: tuple[str, ...]
    behavior: str
    nn: int
    y: str

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise BluetoothIdError(f"behavior must be BV or BI, got {self.behavior!r}")
        if not 0 <= self.nn <= 99:
            raise BluetoothIdError(f"nn out of range 00..99: {self.nn}")
        if not 1 <= len(self.segments) <= MAX_SEGMENTS:
            raise BluetoothIdError(f"expected 1..{MAX_SEGMENTS} segments, got {len(self.segments)}")
        for part in (self.spec, self.iut_role, *self.segments):
            if not _PART.match(part):
                raise BluetoothIdError(f"invalid id component {part!r}")
        if len(self.y) != 1 or not self.y.isalpha():
            raise BluetoothIdError(f"y must be a single letter, got {self.y!r}")

    def __str__(self) -> str:
        return format_bluetooth_id(self)


def parse_bluetooth_id(text: str) -> BluetoothTestCaseId:
    """Parse ``text`` into its components.

    Surrounding whitespace is ignored and a one-digit ``nn`` is accepted, so
    ``format_bluetooth_id(parse_bluetooth_id(s))`` is the normalized form of ``s``.
    """
    parts = text.strip().split("/")
    if len(parts) < 3:
        raise BluetoothIdError(f"fewer than 3 slash-delimited segments in {text!r}")
    tail = _TAIL.match(parts[-1])
    if tail is None:
        raise BluetoothIdError(f"missing <XX>-<nn>-<y> behavior tail in {text!r}")
    behavior, nn, y = tail.groups()
    if behavior not in BEHAVIORS:
        raise BluetoothIdError(f"behavior must be BV or BI in {text!r}")
    if len(parts) < 4:
        raise BluetoothIdError(f"no class/feature segment in {text!r}")
    return BluetoothTestCaseId(
        spec=parts[0],
        iut_role=parts[1],
        segments=tuple(parts[2:-1]),
        behavior=behavior,
        nn=int(nn),
        y=y,
    )


def format_bluetooth_id(tcid: BluetoothTestCaseId) -> str:
    head = "/".join((tcid.spec, tcid.iut_role, *tcid.segments))
    return f"{head}/{tcid.behavior}-{tcid.nn:02d}-{tcid.y}"


def is_bluetooth_id(text: str) -> bool:
    try:
        parse_bluetooth_id(text)
    except BluetoothIdError:
        return False
    return True
