"""End-to-end lifting: program text to format, with per-stage timings."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .afg import Afg
from .emit import Format, bnf
from .interp import AnalysisConfig, AnalysisResult, interpret, simplify_graph
from .lang import Program, parse_program
from .reorder import NotOrdered, is_ordered, reorder
from .unfold import unfold


@dataclass
class LiftResult:
    program: Program
    analysis: AnalysisResult
    unfolded: Afg
    ordered: Afg
    format: Format
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def raw(self) -> Afg:
        return self.analysis.graph

    @property
    def notices(self) -> list[str]:
        return self.analysis.notices


def lift(source: Union[str, Program], cfg: Optional[AnalysisConfig] = None) -> LiftResult:
    """Interpret, unfold, reorder and emit; ``source`` is DSL text or a parsed program."""
    cfg = cfg or AnalysisConfig()
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    prog = parse_program(source) if isinstance(source, str) else source
    timings["parse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    res = interpret(prog, cfg)
    timings["interpret"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    unfolded = unfold(res.graph, res.anchors, cfg.width)
    if cfg.simplify:
        unfolded = simplify_graph(unfolded, cfg.width)
    timings["unfold"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ordered = reorder(unfolded)
    if not is_ordered(ordered):
        raise NotOrdered("reordering produced an unordered graph")
    timings["reorder"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    fmt = bnf(ordered, check=False)
    timings["emit"] = time.perf_counter() - t0
    return LiftResult(prog, res, unfolded, ordered, fmt, timings)
