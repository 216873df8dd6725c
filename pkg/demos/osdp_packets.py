"""Lift the OSDP-style parser, then use the format as a packet generator and dissector.

Run with ``python demos/osdp_packets.py [count]``.
"""
import sys

from protolift.concrete import run_concrete
from protolift.corpus import load_fixture
from protolift.emit import render_text
from protolift.packets import dissect, field_report, generate
from protolift.pipeline import lift

count = int(sys.argv[1]) if len(sys.argv) > 1 else 6
res = lift(load_fixture("osdp").source)
print(render_text(res.format))

print(f"{count} generated packets, each dissected and replayed through the original parser:\n")
for pkt, der in generate(res.format, count=count, seed=7):
    d = dissect(res.format, pkt)
    verdict = run_concrete(res.program, pkt)
    print(f"{pkt.hex(' ')}")
    print(f"  derivation {' '.join(der)}; dissector {'accepts' if d else 'rejects'}; parser {'accepts' if verdict else 'rejects'}")
    for row in field_report(d):
        span, name, value = row.split("\t")
        print(f"    {span:<10} {name:<12} {value}")
    print()

# a file-transfer command whose length field is too small for the payload
short = bytes([0x53, 0, 10, 0, 0, 0x7C]) + bytes(9)
d = dissect(res.format, short)
print(f"{short.hex(' ')}\n  rejected in {d.violated_rule}: {d.violated}")
print(f"  parser: {run_concrete(res.program, short).reason}")
