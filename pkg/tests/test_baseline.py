import pytest

from protolift.afg import accepts_batch
from protolift.baseline import BaselineTimeout, enumerate_paths
from protolift.concrete import has_loops, run_concrete_batch
from protolift.corpus import diamond_chain, load_fixture
from protolift.corpus.randprog import random_program
from protolift.lang import parse_program
from protolift.vector import all_packets


def test_path_count_doubles_per_branch():
    for n in range(1, 7):
        assert len(enumerate_paths(parse_program(diamond_chain(n))).paths) == 2**n


def test_budget_is_enforced():
    with pytest.raises(BaselineTimeout) as err:
        enumerate_paths(parse_program(diamond_chain(24)), budget_s=0.2)
    assert err.value.paths > 0


def test_abort_paths_are_dropped():
    prog = parse_program("parse(p, n) { if (p[0] == 1) { abort; } else { } x = p[1]; }")
    res = enumerate_paths(prog)
    assert len(res.paths) == 1


def test_running_example_matches_concrete_execution():
    prog = parse_program(load_fixture("running").source)
    g = enumerate_paths(prog).graph()
    for n in range(8):
        pk = all_packets(n, (0, 1, 10, 255))
        assert (accepts_batch(g, pk) == run_concrete_batch(prog, pk)).all()


def test_random_programs_match_concrete_execution():
    compared = 0
    for seed in range(40):
        prog = random_program(seed)
        assert not has_loops(prog)
        res = enumerate_paths(prog, budget_s=5)
        if len(res.paths) > 64:
            continue
        compared += 1
        g = res.graph()
        for n in range(5):
            pk = all_packets(n, range(8))
            assert (accepts_batch(g, pk) == run_concrete_batch(prog, pk)).all(), seed
    assert compared >= 30
