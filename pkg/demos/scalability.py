"""Lifting time against naive path enumeration as the number of sequential branches grows.

Each extra branch doubles the number of program paths. The lifter's graph
grows linearly; the enumerator has to visit every path.

Run with ``python demos/scalability.py [max_branches] [budget_seconds]``.
"""
import sys
import time

from protolift.afg import count_paths
from protolift.baseline import BaselineTimeout, enumerate_paths
from protolift.corpus import diamond_chain
from protolift.pipeline import lift

max_branches = int(sys.argv[1]) if len(sys.argv) > 1 else 20
budget = float(sys.argv[2]) if len(sys.argv) > 2 else 5.0

print(f"{'branches':>8} {'paths':>9} {'raw':>5} {'lift ms':>9} {'enumerate':>24}")
gave_up = False
for n in range(2, max_branches + 1, 2):
    res = lift(diamond_chain(n))
    lift_ms = sum(res.timings.values()) * 1000
    if gave_up:
        base = "skipped"
    else:
        start = time.perf_counter()
        try:
            base = f"{enumerate_paths(res.program, budget_s=budget).seconds * 1000:.0f} ms"
        except BaselineTimeout as e:
            base = f"> {time.perf_counter() - start:.1f} s ({e.paths} paths)"
            gave_up = True
    print(f"{n:>8} {count_paths(res.unfolded):>9} {len(res.raw):>5} {lift_ms:>9.1f} {base:>24}")
