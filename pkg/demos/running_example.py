"""Walk the ctrl/state example through every stage of the lifter.

Run with ``python demos/running_example.py``.
"""
from protolift.afg import count_paths
from protolift.corpus import load_fixture
from protolift.emit import field_table, render_text
from protolift.packets import check_equiv, dissect, field_report, generate, lint
from protolift.pipeline import lift

source = load_fixture("running").source
print(source)

res = lift(source)
raw, unfolded, ordered = res.raw, res.unfolded, res.ordered
print(f"raw graph:       {len(raw):>3} vertices, {count_paths(raw)} paths (branch merges kept as selections)")
print(f"unfolded graph:  {len(unfolded):>3} vertices, {count_paths(unfolded)} paths")
print(f"ordered graph:   {len(ordered):>3} vertices, {count_paths(ordered)} paths")
print()
print(render_text(res.format))

print("named fields:")
for span, name in field_table(res.format):
    print(f"  {span:<10} {name}")
print()

rep = check_equiv(res.program, res.format, range(8), [0, 1, 2, 10, 255])
print("program vs format:", rep.summary())

# B[4] + 1 = 0 cannot hold for a byte at 32-bit width, so one alternative is dead
print("contradictory productions:", lint(res.format))
print()

for pkt in (bytes([0, 10, 7, 0, 1, 9, 3]), bytes([0, 10, 7, 5, 1, 0, 3]), bytes([0, 11, 7, 0, 1, 9, 3])):
    d = dissect(res.format, pkt)
    print(pkt.hex(" "), "->", "accepted via " + " ".join(d.derivation) if d else f"rejected in {d.violated_rule}: {d.violated}")
    for row in field_report(d):
        print("    " + row.replace("\t", "  "))

print()
print("generated packets:")
for pkt, der in generate(res.format, count=4, seed=1):
    print(f"  {pkt.hex(' ')}   {' '.join(der)}")
