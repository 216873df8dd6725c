"""Fixture programs with golden formats, plus generated programs.

Layout of ``fixtures/``: for an id ``x`` there is ``x.pp`` (program), an
optional ``x.fmt.txt`` (golden rendering of the lifted format, for reading),
``x.golden.json`` (the same golden in machine form, compared structurally),
an optional ``x.fmt.json`` (a hand-written format with no program) and
``x.meta.json`` (description, equivalence-check domain, provenance of the
golden, reconstructed parts, checksum variables).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

FIXTURE_DIR = resources.files(__name__) / "fixtures"


@dataclass(frozen=True)
class Fixture:
    id: str
    source: Optional[str]
    expected: Optional[str]
    format_json: Optional[str]
    golden_json: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def positions(self) -> Optional[list[list[int]]]:
        return self.meta.get("positions")

    @property
    def exact(self) -> bool:
        """Whether the golden format is expected to be equivalent to the program."""
        return bool(self.meta.get("exact", True))

    @property
    def lengths(self) -> range:
        lo, hi = self.meta.get("lengths", [0, 4])
        return range(lo, hi + 1)

    @property
    def values(self) -> list[int]:
        return list(self.meta.get("values", list(range(8))))

    @property
    def checksum_vars(self) -> set[str]:
        """Program variables holding a checksum the format cannot express."""
        return set(self.meta.get("checksum_vars", []))

    @property
    def has_loops(self) -> bool:
        return bool(self.meta.get("loops", False))


def _read(name: str) -> Optional[str]:
    p = FIXTURE_DIR / name
    return p.read_text() if p.is_file() else None


def fixture_ids() -> list[str]:
    return sorted(p.name[: -len(".meta.json")] for p in FIXTURE_DIR.iterdir() if p.name.endswith(".meta.json"))


def load_fixture(fid: str) -> Fixture:
    meta_text = _read(f"{fid}.meta.json")
    if meta_text is None:
        raise KeyError(f"no fixture named {fid!r}")
    return Fixture(
        fid,
        _read(f"{fid}.pp"),
        _read(f"{fid}.fmt.txt"),
        _read(f"{fid}.fmt.json"),
        _read(f"{fid}.golden.json"),
        json.loads(meta_text),
    )


def all_fixtures() -> list[Fixture]:
    return [load_fixture(i) for i in fixture_ids()]


def diamond_chain(n: int) -> str:
    """Program with ``n`` independent branches in sequence (2**n paths)."""
    lines = ["parse(pkt, len) {"]
    for i in range(n):
        lines += [
            f"    if (pkt[{i}] > 127) {{",
            f"        f{i} = pkt[{i}] - 128;",
            "    } else {",
            f"        f{i} = pkt[{i}] + 1;",
            "    }",
            f"    assert(f{i} != 0);",
        ]
    lines.append("}")
    return "\n".join(lines) + "\n"
