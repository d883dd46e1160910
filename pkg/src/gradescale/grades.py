"""Grade systems as ordered numeric axes.

Every analysis system maps its tokens onto a real axis where one unit is one
grade increment of that system. Only increments matter to the model, so the
origin of each ladder is an arbitrary (documented) anchor:

* Ewbank: face value (``"23"`` -> 23.0).
* French: ladder index, anchored so ``"7a"`` -> 23.0. Above 6a this lines up
  with Ewbank row for row over the 23-39 correspondence range.
* UIAA: ladder index, anchored so ``"VII"`` -> 17.0.
* V-grade: face value (``"V5"`` -> 5.0).

YDS exists only as a reporting target for the Ewbank/French correspondence.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

LADDER_VERSION = "1"


class GradeError(ValueError):
    pass


class UnknownGrade(GradeError):
    pass


class SystemMismatch(GradeError):
    pass


class GradeSystem(str, enum.Enum):
    EWBANK = "ewbank"
    FRENCH = "french"
    UIAA = "uiaa"
    VGRADE = "vgrade"
    YDS = "yds"

    @property
    def is_analysis_system(self) -> bool:
        return self is not GradeSystem.YDS

    @classmethod
    def parse(cls, name: str) -> "GradeSystem":
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {"ewbanks": "ewbank", "v": "vgrade", "vscale": "vgrade", "sport": "french"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise GradeError(f"unknown grade system {name!r}") from None


# French below 6a has no "+" steps in common use; 9c+ closes the ladder.
_FRENCH_LADDER: tuple[str, ...] = (
    "1", "2", "3", "4a", "4b", "4c", "5a", "5b", "5c",
    "6a", "6a+", "6b", "6b+", "6c", "6c+",
    "7a", "7a+", "7b", "7b+", "7c", "7c+",
    "8a", "8a+", "8b", "8b+", "8c", "8c+",
    "9a", "9a+", "9b", "9b+", "9c", "9c+",
)
_FRENCH_ANCHOR = ("7a", 23.0)

_ROMAN = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII")
_UIAA_LADDER: tuple[str, ...] = tuple(
    numeral + mod for numeral in _ROMAN for mod in ("-", "", "+")
)
_UIAA_ANCHOR = ("VII", 17.0)

# Table 1 correspondence: Ewbank 23..39 <-> French 7a..9c <-> YDS 5.11d..5.15d.
_YDS_LADDER: tuple[str, ...] = (
    "5.11d",
    "5.12a", "5.12b", "5.12c", "5.12d",
    "5.13a", "5.13b", "5.13c", "5.13d",
    "5.14a", "5.14b", "5.14c", "5.14d",
    "5.15a", "5.15b", "5.15c", "5.15d",
)
TABLE_RANGE = (23, 39)
_REPORT_SYSTEMS = frozenset({GradeSystem.EWBANK, GradeSystem.FRENCH, GradeSystem.YDS})

_VGRADE_MAX = 17


def _indexed(ladder: tuple[str, ...], anchor: tuple[str, float]) -> dict[str, float]:
    offset = anchor[1] - ladder.index(anchor[0])
    return {token: float(i + offset) for i, token in enumerate(ladder)}


_FRENCH_VALUES = _indexed(_FRENCH_LADDER, _FRENCH_ANCHOR)
_UIAA_VALUES = _indexed(_UIAA_LADDER, _UIAA_ANCHOR)
_YDS_VALUES = {token: float(TABLE_RANGE[0] + i) for i, token in enumerate(_YDS_LADDER)}
_FRENCH_TOKENS = {v: k for k, v in _FRENCH_VALUES.items()}
_UIAA_TOKENS = {v: k for k, v in _UIAA_VALUES.items()}
_YDS_TOKENS = {v: k for k, v in _YDS_VALUES.items()}

_ROMAN_OF_ARABIC = {str(i + 1): numeral for i, numeral in enumerate(_ROMAN)}
_UIAA_RE = re.compile(r"^([IVX]+|\d{1,2})([+-]?)$")


@dataclass(frozen=True)
class GradeValue:
    """A position on one system's grade axis; may be fractional."""

    system: GradeSystem
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise GradeError(f"grade value must be finite, got {self.value}")

    @property
    def label(self) -> str:
        return format_grade(self)

    def __str__(self) -> str:
        try:
            return self.label
        except GradeError:
            return f"{self.value:g} ({self.system.value})"


def _parse_ewbank(token: str) -> float:
    if not token.isdigit() or int(token) < 1:
        raise UnknownGrade(f"{token!r} is not an Ewbank grade")
    return float(int(token))


def _parse_french(token: str) -> float:
    try:
        return _FRENCH_VALUES[token.lower()]
    except KeyError:
        raise UnknownGrade(f"{token!r} is not a French grade") from None


def _parse_uiaa(token: str) -> float:
    match = _UIAA_RE.match(token.upper())
    if match is None:
        raise UnknownGrade(f"{token!r} is not a UIAA grade")
    numeral, mod = match.groups()
    numeral = _ROMAN_OF_ARABIC.get(numeral, numeral)
    try:
        return _UIAA_VALUES[numeral + mod]
    except KeyError:
        raise UnknownGrade(f"{token!r} is not a UIAA grade") from None


def _parse_vgrade(token: str) -> float:
    upper = token.upper()
    if not (upper.startswith("V") and upper[1:].isdigit()):
        raise UnknownGrade(f"{token!r} is not a V-grade")
    n = int(upper[1:])
    if n > _VGRADE_MAX:
        raise UnknownGrade(f"{token!r} is above V{_VGRADE_MAX}")
    return float(n)


_PARSERS = {
    GradeSystem.EWBANK: _parse_ewbank,
    GradeSystem.FRENCH: _parse_french,
    GradeSystem.UIAA: _parse_uiaa,
    GradeSystem.VGRADE: _parse_vgrade,
}


def _normalise(text: str) -> str:
    # Unicode minus and stray whitespace show up in exported logbooks.
    return text.strip().replace("−", "-").replace("–", "-")


def parse_grade(text: str, system: GradeSystem) -> GradeValue:
    """Parse a grade token of ``system`` onto its numeric axis.

    Raises
    ------
    SystemMismatch
        The token is valid in another analysis system but not in ``system``.
    UnknownGrade
        The token is not on any ladder (slash grades such as ``"23/24"``
        included).
    """
    system = GradeSystem(system)
    if not system.is_analysis_system:
        raise GradeError("YDS is a reporting-only system and cannot be parsed")
    token = _normalise(str(text))
    try:
        return GradeValue(system, _PARSERS[system](token))
    except UnknownGrade:
        for other, parser in _PARSERS.items():
            if other is system:
                continue
            try:
                parser(token)
            except UnknownGrade:
                continue
            raise SystemMismatch(
                f"{text!r} is a {other.value} grade, not {system.value}"
            ) from None
        raise


def format_grade(grade: GradeValue) -> str:
    """Render a ladder value back to its canonical token."""
    v = grade.value
    system = grade.system
    if system is GradeSystem.EWBANK:
        if v == int(v) and v >= 1:
            return str(int(v))
    elif system is GradeSystem.VGRADE:
        if v == int(v) and 0 <= v <= _VGRADE_MAX:
            return f"V{int(v)}"
    else:
        tokens = {
            GradeSystem.FRENCH: _FRENCH_TOKENS,
            GradeSystem.UIAA: _UIAA_TOKENS,
            GradeSystem.YDS: _YDS_TOKENS,
        }[system]
        if v in tokens:
            return tokens[v]
    raise GradeError(f"{v:g} is not a ladder position of {system.value}")


def convert_for_report(grade: GradeValue, target: GradeSystem) -> GradeValue | None:
    """Map a grade to ``target`` using the Ewbank/French/YDS correspondence.

    Returns ``None`` (unavailable) outside the tabulated range, for
    fractional values, and for pairs with no published correspondence.
    """
    target = GradeSystem(target)
    if target is grade.system:
        return grade
    if grade.system not in _REPORT_SYSTEMS or target not in _REPORT_SYSTEMS:
        return None
    v = grade.value
    lo, hi = TABLE_RANGE
    if v != int(v) or not lo <= v <= hi:
        return None
    return GradeValue(target, v)


def ladder(system: GradeSystem) -> list[tuple[str, float]]:
    """Tokens and values of a system, in increasing order."""
    system = GradeSystem(system)
    if system is GradeSystem.EWBANK:
        return [(str(i), float(i)) for i in range(1, 40)]
    if system is GradeSystem.VGRADE:
        return [(f"V{i}", float(i)) for i in range(_VGRADE_MAX + 1)]
    values = {
        GradeSystem.FRENCH: _FRENCH_VALUES,
        GradeSystem.UIAA: _UIAA_VALUES,
        GradeSystem.YDS: _YDS_VALUES,
    }[system]
    return sorted(values.items(), key=lambda kv: kv[1])


def ladder_table() -> list[dict]:
    """Every ladder as flat rows, for dumping/auditing."""
    rows = []
    for system in GradeSystem:
        for token, value in ladder(system):
            rows.append(
                {"version": LADDER_VERSION, "system": system.value, "token": token, "value": value}
            )
    return rows
