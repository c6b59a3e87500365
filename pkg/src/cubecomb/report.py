"""Check reports and schema validation shared by the artifact formats."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction

from .rational import RationalFormatError, parse_rational


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    checked: int
    witness: object = None
    detail: str = ""


@dataclass(frozen=True)
class Report:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


class SchemaError(ValueError):
    """A malformed artifact; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def child(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def field(d, key: str, kind: str, path: str = ""):
    """Fetch ``d[key]`` and check its kind: int, bool, str, list, dict or rational."""
    where = child(path, key)
    if not isinstance(d, dict):
        raise SchemaError(path or "<root>", "expected an object")
    if key not in d:
        raise SchemaError(where, "missing field")
    value = d[key]
    if kind == "rational":
        if not isinstance(value, str):
            raise SchemaError(where, "rationals are stored as \"num/den\" strings")
        try:
            return parse_rational(value)
        except RationalFormatError as exc:
            raise SchemaError(where, str(exc)) from None
    expected = {"int": int, "bool": bool, "str": str, "list": list, "dict": dict}[kind]
    if kind == "int" and isinstance(value, bool) or not isinstance(value, expected):
        raise SchemaError(where, f"expected {kind}")
    return value


def check_version(d, expected: int, kind: str) -> None:
    if field(d, "version", "int") != expected:
        raise SchemaError("version", f"unsupported version {d['version']}")
    if d.get("kind", kind) != kind:
        raise SchemaError("kind", f"expected {kind!r}, got {d.get('kind')!r}")


def as_fraction_or_none(value) -> Fraction | None:
    return None if value is None else parse_rational(value)


def content_digest(d: dict) -> str:
    """sha256 of the canonical JSON of ``d`` without its ``digest`` field."""
    body = {k: v for k, v in d.items() if k != "digest"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def seal(d: dict) -> dict:
    out = dict(d)
    out.pop("digest", None)
    out["digest"] = content_digest(out)
    return out


def digest_check(d: dict) -> Check:
    stored = d.get("digest")
    expected = content_digest(d)
    return Check("digest", stored == expected, 1, stored, "" if stored == expected else "content was modified")
