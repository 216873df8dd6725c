"""Command-line interface: ``protolift {lift,gen,dissect,check,bench}``.

Exit status is 0 on success, 1 when an analysis step fails (or a check finds
violations) and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import afg as afg_mod
from .absval import WIDTH
from .baseline import BaselineTimeout, enumerate_paths
from .emit import SchemaError, parse_json, render_json, render_text
from .interp import AnalysisConfig
from .lang import ParseError, ValidationError, parse_program
from .packets import (
    BudgetExceeded,
    DomainTooLarge,
    Unsatisfiable,
    check_equiv,
    dissect,
    field_report,
    generate,
    parse_hex_lines,
    to_hex_line,
)
from .pipeline import lift

log = logging.getLogger("protolift")

EMIT_TARGETS = ("bnf", "json", "dot-raw", "dot-unfolded", "dot-ordered")
_SUFFIX = {
    "bnf": ".fmt.txt",
    "json": ".fmt.json",
    "dot-raw": ".raw.dot",
    "dot-unfolded": ".unfolded.dot",
    "dot-ordered": ".ordered.dot",
}


def _int_list(text: str) -> list[int]:
    """``"0..7"``, ``"0,1,255"`` or a mix such as ``"0..3,255"``; hex allowed."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..", 1)
                out.extend(range(int(lo, 0), int(hi, 0) + 1))
            else:
                out.append(int(part, 0))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _emit_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in EMIT_TARGETS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown emit target(s) {bad}; choose from {', '.join(EMIT_TARGETS)}")
    return items


def _config(args) -> AnalysisConfig:
    return AnalysisConfig(unroll_bound=args.unroll, width=args.width, naming=not args.no_names, simplify=args.simplify)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _load_format(path: str):
    return parse_json(_read_text(path))


# ---------------------------------------------------------------------------
# subcommands


def cmd_lift(args) -> int:
    res = lift(_read_text(args.program), _config(args))
    for n in res.notices:
        log.warning("%s", n)
    artifacts = {
        "bnf": lambda: render_text(res.format),
        "json": lambda: render_json(res.format),
        "dot-raw": lambda: afg_mod.export(res.raw, "dot"),
        "dot-unfolded": lambda: afg_mod.export(res.unfolded, "dot"),
        "dot-ordered": lambda: afg_mod.export(res.ordered, "dot"),
    }
    targets = [t for t in EMIT_TARGETS if t in set(args.emit)]
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.program).stem if args.program != "-" else "stdin"
        for t in targets:
            p = out / f"{stem}{_SUFFIX[t]}"
            p.write_text(artifacts[t]())
            log.info("wrote %s", p)
    else:
        for t in targets:
            sys.stdout.write(artifacts[t]())
    if args.timings:
        for stage, secs in res.timings.items():
            print(f"{stage}\t{secs * 1000:.2f} ms", file=sys.stderr)
    return 0


def cmd_gen(args) -> int:
    fmt = _load_format(args.format)
    pkts = generate(fmt, count=args.count, seed=args.seed, width=args.width)
    if args.binary:
        out = Path(args.binary)
        out.mkdir(parents=True, exist_ok=True)
        for i, (pkt, _) in enumerate(pkts):
            (out / f"packet_{i:05d}.bin").write_bytes(pkt)
        return 0
    lines = []
    for pkt, der in pkts:
        line = to_hex_line(pkt)
        if args.annotate:
            line += f"  # {' '.join(der)}"
        lines.append(line)
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_dissect(args) -> int:
    fmt = _load_format(args.format)
    if args.binary:
        packets = [Path(p).read_bytes() for p in args.packets]
    else:
        packets = []
        for p in args.packets or ["-"]:
            packets.extend(parse_hex_lines(_read_text(p)))
    rows = []
    rejected = 0
    for i, pkt in enumerate(packets):
        res = dissect(fmt, pkt, width=args.width)
        if res.accepted:
            fields = field_report(res) or ["-\t-\t-"]
            rows.extend(f"{i}\taccept\t{row}" for row in fields)
        else:
            rejected += 1
            rows.append(f"{i}\treject\t{res.violated_rule or '-'}\t{res.violated or '-'}\t-")
    if rows:
        print("packet\tstatus\tspan\tname\tvalue")
        print("\n".join(rows))
    return 1 if args.strict and rejected else 0


def cmd_check(args) -> int:
    prog = parse_program(_read_text(args.program))
    fmt = _load_format(args.format)
    rep = check_equiv(prog, fmt, args.lengths, args.values, width=args.width, max_packets=args.max_packets)
    print(rep.summary())
    for kind, pkts in (("accepted by format only", rep.soundness), ("accepted by program only", rep.completeness)):
        for p in pkts:
            print(f"{kind}\t{to_hex_line(p)}")
    return 0 if rep.ok else 1


def _bench_cases(args) -> list[tuple[str, str]]:
    from .corpus import all_fixtures, diamond_chain

    cases: list[tuple[str, str]] = []
    for item in args.suite:
        if item == "stress":
            cases.append((f"diamond-{args.branches}", diamond_chain(args.branches)))
        elif item == "fixtures":
            cases.extend((fx.id, fx.source) for fx in all_fixtures() if fx.source is not None)
        else:
            cases.append((Path(item).stem, _read_text(item)))
    return cases


def cmd_bench(args) -> int:
    cfg = AnalysisConfig(width=args.width)
    print("case\tinterpret_ms\tunfold+reorder_ms\temit_ms\ttotal_ms\tbaseline")
    for name, source in _bench_cases(args):
        res = lift(source, cfg)
        t = res.timings
        interp_ms = t["interpret"] * 1000
        middle_ms = (t["unfold"] + t["reorder"]) * 1000
        emit_ms = t["emit"] * 1000
        total = sum(t.values()) * 1000
        if args.no_baseline:
            base = "skipped"
        else:
            start = time.perf_counter()
            try:
                r = enumerate_paths(res.program, budget_s=args.budget, width=args.width)
                base = f"{r.seconds * 1000:.1f} ms ({len(r.paths)} paths)"
            except BaselineTimeout as e:
                base = f"timeout after {time.perf_counter() - start:.1f} s ({e.paths} paths)"
        print(f"{name}\t{interp_ms:.2f}\t{middle_ms:.2f}\t{emit_ms:.2f}\t{total:.2f}\t{base}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="protolift", description="Lift packet parsers to message formats.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def width(sp):
        sp.add_argument("--width", type=int, default=WIDTH, choices=(8, 16, 32, 64), help="integer bit width")

    sp = sub.add_parser("lift", help="analyze a parser program and emit its format")
    sp.add_argument("program", help="program file, or - for stdin")
    sp.add_argument("--emit", type=_emit_list, default=["bnf"], help=f"comma list of {', '.join(EMIT_TARGETS)}")
    sp.add_argument("-o", "--output", help="directory for artifacts (default: stdout)")
    sp.add_argument("--unroll", type=int, default=3, help="iterations kept when unrolling irregular loops")
    sp.add_argument("--no-names", action="store_true", help="omit field-name assertions")
    sp.add_argument("--simplify", action="store_true", help="merge complementary branch pairs after unfolding")
    sp.add_argument("--timings", action="store_true", help="print stage timings to stderr")
    width(sp)
    sp.set_defaults(func=cmd_lift)

    sp = sub.add_parser("gen", help="generate packets accepted by a format")
    sp.add_argument("format", help="format JSON file")
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", help="hex output file (default: stdout)")
    sp.add_argument("--binary", metavar="DIR", help="write one raw .bin file per packet into DIR")
    sp.add_argument("--annotate", action="store_true", help="append the derivation as a comment")
    width(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("dissect", help="match packets against a format and report fields")
    sp.add_argument("format", help="format JSON file")
    sp.add_argument("packets", nargs="*", help="hex packet files (one packet per line), default stdin")
    sp.add_argument("--binary", action="store_true", help="each packet file holds one raw packet")
    sp.add_argument("--strict", action="store_true", help="exit 1 if any packet is rejected")
    width(sp)
    sp.set_defaults(func=cmd_dissect)

    sp = sub.add_parser("check", help="compare a program and a format on every packet of a small domain")
    sp.add_argument("program")
    sp.add_argument("format")
    sp.add_argument("--lengths", type=_int_list, default=list(range(5)), help="e.g. 0..4")
    sp.add_argument("--values", type=_int_list, default=list(range(8)), help="byte values, e.g. 0..7 or 0,1,255")
    sp.add_argument("--max-packets", type=int, default=10_000_000)
    width(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("bench", help="time the lifter against naive path enumeration")
    sp.add_argument("suite", nargs="*", default=["stress"], help="'stress', 'fixtures' or program files")
    sp.add_argument("--branches", type=int, default=20, help="branch count of the stress program")
    sp.add_argument("--budget", type=float, default=60.0, help="baseline time budget in seconds")
    sp.add_argument("--no-baseline", action="store_true")
    width(sp)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("PROTOLIFT_LOG", "WARNING").upper(),
        format="%(levelname)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "count", 1) < 1:
        parser.error("--count must be positive")
    try:
        return args.func(args)
    except (OSError, ParseError, ValidationError, SchemaError, Unsatisfiable, BudgetExceeded, DomainTooLarge) as e:
        print(f"protolift: error: {e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as e:
        # remaining analysis failures (unordered graph, missing anchor, ...)
        print(f"protolift: analysis failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
