"""Acceptance criteria, one test per criterion.

Each test records a one-line verdict; the lines are printed together at the
end of the pytest run (see conftest.py) and also when this file is run
directly with ``python tests/test_acceptance.py``.
"""
import itertools
import random
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from protolift.absval import (
    ARITH,
    B,
    Bin,
    ConcreteStore,
    Const,
    EvalError,
    Label,
    Length,
    NameAtom,
    Not,
    RepeatAtom,
    Select,
    const_byte_indices,
    eval_concrete,
    is_tainted,
    normalize,
    render,
    walk,
)
from protolift.afg import accepts, accepts_batch, afg_of, paths
from protolift.baseline import BaselineTimeout, enumerate_paths
from protolift.cli import main
from protolift.concrete import run_concrete, skip_checks_on
from protolift.corpus import all_fixtures, diamond_chain, load_fixture
from protolift.corpus.graphs import disordered_example, random_reorderable, shared_suffix, two_layer
from protolift.corpus.randprog import random_program
from protolift.emit import Alternation, NonTerminal, Terminal, parse_json, render_json
from protolift.interp import interpret
from protolift.lang import parse_program
from protolift.packets import check_equiv, lint, matches_derivation, parse_hex_lines
from protolift.pipeline import lift
from protolift.reorder import hd, is_ordered, reorder, vd
from protolift.unfold import accepts_with_anchors, selection_count, unfold
from protolift.vector import all_packets, holds_batch, product_packets

RESULTS: dict[int, tuple[str, bool, str]] = {}
README = Path(__file__).resolve().parent.parent / "README.md"


def record(number: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[number] = (title, ok, detail)
    line = verdict_line(number)
    print(line)
    assert ok, line


def verdict_line(number: int) -> str:
    title, ok, detail = RESULTS[number]
    return f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"


def _assertion_texts(rule) -> set[str]:
    return {render(a) for a in rule.assertions if not isinstance(a, NameAtom)}


def _names(rule) -> set[str]:
    return {a.name for a in rule.assertions if isinstance(a, NameAtom)}


def _sample_domain(lengths, values, positions, cap, rng):
    """Packets of each length over the fixture's value domain, sampled down to ``cap`` per length."""
    for n in lengths:
        choices = [positions[i] if positions and i < len(positions) else values for i in range(n)]
        total = int(np.prod([len(c) for c in choices])) if choices else 1
        if total <= cap:
            yield from (bytes(r.tolist()) for r in product_packets(choices))
        else:
            for _ in range(cap):
                yield bytes(rng.choice(c) for c in choices)


# ---------------------------------------------------------------------------


def test_criterion_01_running_example():
    start = time.perf_counter()
    f = lift(load_fixture("running").source).format
    elapsed = time.perf_counter() - start
    s = f.rule(f.start)
    problems = []
    shape = [type(x).__name__ for x in s.rhs]
    if shape != ["NonTerminal", "Alternation", "Alternation"]:
        problems.append(f"start shape {shape}")
    else:
        head, alt3, alt4 = s.rhs
        first = f.rule(head.name)
        if "B[0]B[1] = 10" not in _assertion_texts(first):
            problems.append("missing B[0]B[1] = 10")
        if not {"code", "state"} <= _names(first):
            problems.append(f"names {_names(first)}")
        got3 = sorted(sorted(_assertion_texts(f.rule(o))) for o in alt3.options)
        if got3 != [["B[3] != 0"], ["B[3] = 0"]]:
            problems.append(f"B[3] split {got3}")
        got4 = sorted(sorted(_assertion_texts(f.rule(o))) for o in alt4.options)
        want4 = sorted(
            [
                sorted(["B[5] = 0", "B[6] > 0", "B[4] + 1 = 0"]),
                sorted(["B[5] != 0", "B[6] > 0", "B[4] - 1 = 0"]),
            ]
        )
        if got4 != want4:
            problems.append(f"B[4..6] split {got4}")
    if elapsed >= 1.0:
        problems.append(f"took {elapsed:.2f}s")
    detail = "; ".join(problems) or f"S -> L1 (L2|L3) (L4|L5) in {elapsed * 1000:.0f} ms"
    record(1, "running example end to end", not problems, detail)


def test_criterion_02_lifted_formats_equal_programs():
    start = time.perf_counter()
    programs = soundness = completeness = packets = 0
    bad_seeds = []
    for seed in range(500):
        prog = random_program(seed)
        rep = check_equiv(prog, lift(prog).format, range(5), range(8))
        programs += 1
        packets += rep.checked
        soundness += rep.soundness_total
        completeness += rep.completeness_total
        if not rep.ok:
            bad_seeds.append(seed)
    elapsed = time.perf_counter() - start
    ok = programs >= 500 and soundness == 0 and completeness == 0 and elapsed < 600
    detail = (
        f"{programs} programs, {packets} packets, soundness violations {soundness}, "
        f"completeness violations {completeness}, {elapsed:.0f}s"
        + (f", failing seeds {bad_seeds[:10]}" if bad_seeds else "")
    )
    record(2, "formats equal programs on lengths 0..4 x bytes 0..7", ok, detail)


def _random_formula(rng: random.Random, atoms: int):
    if atoms == 1:
        t = Bin(rng.choice(["==", "!=", "<", ">", "<=", ">="]), B(rng.randrange(6)), Const(1))
    else:
        left = rng.randint(1, atoms - 1)
        t = Bin(rng.choice(["&&", "||"]), _random_formula(rng, left), _random_formula(rng, atoms - left))
    return Not(t) if rng.random() < 0.25 else t


def _path_disjunction(g, rows) -> np.ndarray:
    out = np.zeros(len(rows), dtype=bool)
    for p in paths(g):
        here = np.ones(len(rows), dtype=bool)
        for c in p:
            here &= holds_batch(c, rows)
        out |= here
    return out


def test_criterion_03_formula_graphs():
    rng = random.Random(3)
    rows = all_packets(6, [0, 1, 2])  # every atom B[i] op 1 takes all of its truth values
    failures = 0
    for _ in range(1000):
        rho = _random_formula(rng, rng.randint(1, 6))
        if not (_path_disjunction(afg_of(rho), rows) == holds_batch(rho, rows)).all():
            failures += 1
    record(3, "formula graphs match truth tables", failures == 0, f"1000 formulas, {len(rows)} rows each, {failures} failures")


def test_criterion_04_unfolding():
    rng = random.Random(4)
    runs = leftover = compared = mismatched = 0
    small_fixtures = []
    sources = [(fx.id, parse_program(fx.source), fx) for fx in all_fixtures() if fx.source is not None]
    sources += [(f"random-{s}", random_program(s), None) for s in range(500)]
    for name, prog, fx in sources:
        r = interpret(prog)
        u = unfold(r.graph, r.anchors)
        runs += 1
        leftover += selection_count(u) > 0
        if len(r.graph) > 12:
            continue
        if any(isinstance(x, RepeatAtom) for v in r.graph.vertices.values() for x in walk(v.constraint)):
            # repeat() only has a meaning for the dissector, so compare paths instead of acceptance
            compared += 1
            mismatched += _multiset(r.graph) != _multiset(u)
            if fx is not None:
                small_fixtures.append(f"{name} (paths)")
            continue
        if fx is not None:
            small_fixtures.append(name)
            domain = _sample_domain(fx.lengths, fx.values, fx.positions, 3000, rng)
        else:
            domain = _sample_domain(range(5), [0, 1, 7], None, 3000, rng)
        for pkt in domain:
            compared += 1
            if accepts_with_anchors(r.graph, r.anchors, pkt) != accepts(u, pkt):
                mismatched += 1
    ok = leftover == 0 and mismatched == 0
    detail = (
        f"{runs} runs, {leftover} with selections left; store equivalence on {compared} packets "
        f"({', '.join(small_fixtures)} and small random programs), {mismatched} mismatches"
    )
    record(4, "unfolding removes selections and keeps acceptance", ok, detail)


def _multiset(g) -> Counter:
    return Counter(tuple(render(c) for c in p) for p in paths(g))


def _decomposition_problems(g) -> list[str]:
    out = []
    segs = vd(g)
    if segs is not None and len(segs) > 1:
        joined = Counter()
        for combo in itertools.product(*[list(_multiset(s).elements()) for s in segs]):
            joined[tuple(x for part in combo for x in part)] += 1
        if joined != _multiset(g):
            out.append("vertical")
    parts = hd(g)
    summed = Counter()
    for p in parts:
        summed.update(_multiset(p))
    if summed != _multiset(g):
        out.append("horizontal")
    ordered = reorder(g)
    if not is_ordered(ordered):
        out.append("not ordered")
    for n in range(8):
        rows = all_packets(n, (0, 1, 3, 7) if n <= 5 else (0, 1))
        if not (accepts_batch(g, rows) == accepts_batch(ordered, rows)).all():
            out.append(f"acceptance differs at length {n}")
            break
    return out


def test_criterion_05_decomposition_and_reordering():
    graphs = [("two_layer", two_layer()[0]), ("shared_suffix", shared_suffix()[0]), ("disordered", disordered_example())]
    graphs += [(f"random-{s}", random_reorderable(s)) for s in range(200)]
    failures = {}
    for name, g in graphs:
        problems = _decomposition_problems(g)
        if problems:
            failures[name] = problems
    detail = f"{len(graphs)} graphs (3 fixtures + 200 random), {len(failures)} failures"
    if failures:
        detail += f": {dict(list(failures.items())[:5])}"
    record(5, "decomposition keeps paths, reordering is ordered and equivalent", not failures, detail)


LABELS = [Label(i) for i in range(1, 4)]


def _random_term(rng: random.Random, depth: int):
    if depth == 0 or rng.random() < 0.3:
        kind = rng.randrange(3)
        if kind == 0:
            return Const(rng.randint(-4, 9))
        if kind == 1:
            return B(rng.randrange(3))
        return Length()
    if rng.random() < 0.3:
        return Select(rng.choice(LABELS), _random_term(rng, depth - 1), _random_term(rng, depth - 1))
    return Bin(rng.choice(sorted(ARITH)), _random_term(rng, depth - 1), _random_term(rng, depth - 1))


def _value(t, store):
    try:
        return eval_concrete(t, store)
    except EvalError:
        return None


def test_criterion_06_normalization():
    rng = random.Random(6)
    changed = wrong = not_idempotent = 0
    checks = 10_000
    for _ in range(checks):
        t = _random_term(rng, rng.randint(1, 5))
        outcomes = {lab: rng.random() < 0.5 for lab in LABELS}
        pkt = bytes(rng.randrange(256) for _ in range(rng.randint(0, 4)))
        n = normalize(t)
        changed += n != t
        store = ConcreteStore(pkt, outcomes)
        if _value(n, store) != _value(t, store):
            wrong += 1
        if normalize(n) != n:
            not_idempotent += 1
    ok = wrong == 0 and not_idempotent == 0
    detail = f"{checks} terms ({changed} rewritten), {wrong} value changes, {not_idempotent} not idempotent"
    record(6, "normalization preserves values and is idempotent", ok, detail)


def test_criterion_07_loops():
    problems = []
    f = lift(load_fixture("loop_repeat").source).format
    s = f.rule(f.start)
    terms = [str(x) for x in s.rhs]
    if terms != ["B[0]", "B[1]"] or len(f.rules) != 1:
        problems.append(f"counter loop gives {terms}")
    if _assertion_texts(s) != {"repeat(B[1]) = B[0]", "B[1] < 5"}:
        problems.append(f"counter loop asserts {_assertion_texts(s)}")

    g = lift(load_fixture("checksum").source).format
    boundary = any(
        isinstance(a, NameAtom) and a.name == "check" and render(a.value) in ("B[4..5]", "B[5]B[4]")
        for r in g.rules
        for a in r.assertions
    )
    # only byte spans 4..5 are the checksum; any non-name assertion on them would come from the loop sum
    tainted = [
        render(a)
        for r in g.rules
        for a in r.assertions
        if not isinstance(a, NameAtom) and (is_tainted(a) or const_byte_indices(a) & {4, 5})
    ]
    terminal_4_5 = any(isinstance(x, Terminal) and (x.lo, x.hi) == (4, 5) for r in g.rules for x in r.rhs)
    if not boundary or not terminal_4_5:
        problems.append("checksum field boundary missing")
    if tainted:
        problems.append(f"assertions on loop state: {tainted}")
    detail = "; ".join(problems) or "counter loop is S -> B[0] B[1] with repeat and bound; checksum B[4..5] kept, comparison dropped"
    record(7, "loop summarization", not problems, detail)


def test_criterion_08_generate_then_dissect(tmp_path, capsys):
    total = matched = dissected = concrete_ok = strict_ok = 0
    per_fixture = []
    for fx in all_fixtures():
        if fx.source is not None:
            fmt = lift(fx.source).format
        else:
            fmt = parse_json(fx.format_json)
        fmt_path = tmp_path / f"{fx.id}.json"
        fmt_path.write_text(render_json(fmt))
        hex_path = tmp_path / f"{fx.id}.hex"
        capsys.readouterr()
        status = main(["gen", str(fmt_path), "--count", "25", "--seed", "8", "--annotate", "-o", str(hex_path)])
        if status != 0:
            # only a contradictory format may produce nothing
            assert lint(fmt) == [fmt.start], fx.id
            per_fixture.append(f"{fx.id}: contradictory, no packets")
            continue
        lines = [ln for ln in hex_path.read_text().splitlines() if ln.strip()]
        ders = [ln.rsplit("#", 1)[1].split() for ln in lines]
        pkts = parse_hex_lines(hex_path.read_text())
        capsys.readouterr()
        main(["dissect", str(fmt_path), str(hex_path)])
        rows = capsys.readouterr().out.splitlines()[1:]
        accepted_ids = {int(r.split("\t")[0]) for r in rows if r.split("\t")[1] == "accept"}
        prog = parse_program(fx.source) if fx.source is not None else None
        runner = skip_checks_on(prog, fx.checksum_vars) if prog is not None and fx.checksum_vars else prog
        ok_here = 0
        for i, (pkt, der) in enumerate(zip(pkts, ders)):
            total += 1
            matched += matches_derivation(fmt, der, pkt)
            dissected += i in accepted_ids
            if prog is None:
                concrete_ok += 1
                strict_ok += 1
                ok_here += 1
                continue
            good = run_concrete(runner, pkt).accepted
            concrete_ok += good
            ok_here += good
            strict_ok += run_concrete(prog, pkt).accepted
        note = f"{fx.id}: {ok_here}/{len(pkts)}"
        if fx.checksum_vars:
            strict = sum(run_concrete(prog, p).accepted for p in pkts)
            note += f" with checks on {sorted(fx.checksum_vars)} skipped ({strict} with them kept)"
        per_fixture.append(note)
    ok = total > 0 and matched == dissected == concrete_ok == total
    detail = (
        f"{total} packets: {matched} match their derivation, {dissected} accepted by dissect, "
        f"{concrete_ok} accepted by the program; " + ", ".join(per_fixture)
    )
    record(8, "generated packets dissect and run", ok, detail)


def test_criterion_09_scalability(tmp_path, capsys):
    src = tmp_path / "diamond20.pp"
    src.write_text(diamond_chain(20))
    start = time.perf_counter()
    status = main(["lift", str(src), "-o", str(tmp_path / "out")])
    lift_s = time.perf_counter() - start
    capsys.readouterr()
    start = time.perf_counter()
    try:
        res = enumerate_paths(parse_program(diamond_chain(20)), budget_s=60.0)
        baseline = f"finished in {res.seconds:.1f}s with {len(res.paths)} paths"
        timed_out = False
    except BaselineTimeout as e:
        baseline = f"gave up after {time.perf_counter() - start:.1f}s with {e.paths} of {2**20} paths"
        timed_out = True
    ok = status == 0 and lift_s < 1.0 and timed_out
    record(9, "20-branch program: lifter vs path enumeration", ok, f"lift {lift_s * 1000:.0f} ms; enumeration {baseline}")


def test_criterion_10_documented_substitutions():
    text = README.read_text() if README.exists() else ""
    section = text.split("## Substitutions", 1)[1] if "## Substitutions" in text else ""
    needed = ["precision", "recall", "criterion 2", "fuzzing", "criterion 8", "Wireshark", "Snort"]
    missing = [w for w in needed if w.lower() not in section.lower()]
    record(
        10,
        "non-reproducible evaluations are documented as substituted",
        bool(section) and not missing,
        "README section present" if not missing and section else f"missing {missing or ['section']}",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
