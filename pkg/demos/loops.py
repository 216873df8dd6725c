"""Loop handling: a counter loop becomes a repeated field, a checksum loop keeps only its field boundary.

Run with ``python demos/loops.py``.
"""
from protolift.concrete import run_concrete, skip_checks_on
from protolift.corpus import load_fixture
from protolift.emit import render_text
from protolift.packets import check_equiv, dissect, field_report, generate
from protolift.pipeline import lift

counter = load_fixture("loop_repeat")
print(counter.source)
res = lift(counter.source)
print(render_text(res.format))
pkt = bytes([3, 1, 4, 2, 9])
d = dissect(res.format, pkt)
print(f"{pkt.hex(' ')} -> {'accepted' if d else 'rejected'}")
for row in field_report(d):
    print("    " + row.replace("\t", "  "))
print()

checksum = load_fixture("checksum")
print(checksum.source)
res = lift(checksum.source)
for notice in res.notices:
    print("notice:", notice)
print(render_text(res.format))

rep = check_equiv(res.program, res.format, checksum.lengths, checksum.values)
print("program vs format:", rep.summary())
print("the format only over-approximates: no packet the parser accepts is rejected\n")

relaxed = skip_checks_on(res.program, checksum.checksum_vars)
for pkt, _ in generate(res.format, count=3, seed=4):
    print(
        f"{pkt.hex(' ')}: parser {run_concrete(res.program, pkt).reason or 'accepts'}; "
        f"with the checksum comparison skipped {'accepts' if run_concrete(relaxed, pkt) else 'rejects'}"
    )
