# -*- coding: utf-8 -*-
from __future__ import annotations

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynamic_maxflow import SINK_TREE, SOURCE_TREE, DynamicMaxFlow, min_cut_from_scratch
from recon_errors import NumericalError


def nx_cut_value(solver: DynamicMaxFlow) -> int:
    g = nx.DiGraph()
    g.add_nodes_from(["s", "t"])
    for node in solver.nodes:
        cs, ct = solver.terminal_capacity(node)
        g.add_edge("s", ("n", node), capacity=cs)
        g.add_edge(("n", node), "t", capacity=ct)
    for u in solver.nodes:
        for v in solver.nodes:
            c = solver.edge_capacity(u, v)
            if c:
                g.add_edge(("n", u), ("n", v), capacity=c)
    value, _ = nx.minimum_cut(g, "s", "t")
    return int(value)


def test_single_node_prefers_cheaper_side():
    solver = DynamicMaxFlow()
    solver.add_terminal("a", source_delta=5, sink_delta=2)
    labels = solver.solve()
    assert labels == {"a": False}
    assert solver.cut_value == 2


def test_chain_cut():
    solver = DynamicMaxFlow()
    solver.add_terminal(0, source_delta=10)
    solver.add_terminal(2, sink_delta=10)
    solver.add_edge(0, 1, 3)
    solver.add_edge(1, 2, 4)
    labels = solver.solve()
    assert solver.cut_value == 3
    assert labels == {0: False, 1: True, 2: True}


def test_warm_restart_after_decrease():
    solver = DynamicMaxFlow()
    solver.add_terminal(0, source_delta=10)
    solver.add_terminal(1, sink_delta=10)
    solver.add_edge(0, 1, 8)
    solver.solve()
    assert solver.cut_value == 8
    # capacita' sotto il flusso gia' spinto: riparametrizzazione
    solver.add_edge(0, 1, -6)
    solver.solve()
    assert solver.cut_value == 2
    solver.add_terminal(1, sink_delta=-9)
    solver.solve()
    assert solver.cut_value == nx_cut_value(solver) == 1


def test_negative_capacity_rejected():
    solver = DynamicMaxFlow()
    solver.add_edge("a", "b", 2)
    with pytest.raises(NumericalError):
        solver.add_edge("a", "b", -3)
    with pytest.raises(NumericalError):
        solver.add_terminal("a", source_delta=-1)
    with pytest.raises(NumericalError):
        solver.add_edge("a", "a", 1)


def test_remove_node_requires_isolation():
    solver = DynamicMaxFlow()
    solver.add_edge("a", "b", 2)
    with pytest.raises(NumericalError):
        solver.remove_node("a")
    solver.add_edge("a", "b", -2)
    solver.remove_node("a")
    assert "a" not in solver
    assert "b" in solver


def test_from_scratch_matches_networkx():
    terminals = {0: (7, 0), 1: (2, 3), 2: (0, 9), 3: (4, 4)}
    edges = {(0, 1): 5, (1, 2): 2, (0, 3): 3, (3, 2): 6, (1, 3): 1, (2, 1): 2}
    labels, value = min_cut_from_scratch(terminals, terminals, edges)
    solver = DynamicMaxFlow()
    for node, (cs, ct) in terminals.items():
        solver.add_terminal(node, cs, ct)
    for (u, v), c in edges.items():
        solver.add_edge(u, v, c)
    assert value == nx_cut_value(solver)
    assert solver.cut_value_of(labels) == value


def test_trees_persist_and_only_touched_nodes_are_revisited():
    solver = DynamicMaxFlow()
    n, base = 40, 10 ** 6
    solver.add_terminal(base, source_delta=50)
    solver.add_terminal(base + n - 1, sink_delta=50)
    # interi grandi ricreati: stesso valore, oggetti distinti
    for k in range(n - 1):
        solver.add_edge(int(str(base + k)), int(str(base + k + 1)), 5 + k % 3)
    solver.solve()
    assert solver.last_touched == n
    assert solver.cut_value == nx_cut_value(solver) == 5
    assert solver.tree_of(base) == SOURCE_TREE
    assert solver.tree_of(base + n - 1) == SINK_TREE

    solver.add_terminal(base + 20, sink_delta=1)
    labels = solver.solve()
    assert solver.last_touched == 1
    assert solver.cut_value == nx_cut_value(solver)
    assert solver.cut_value_of(labels) == solver.cut_value

    # un terminale che cambia segno sposta il nodo nell'altro albero
    solver.add_terminal(base + n - 1, source_delta=100)
    labels = solver.solve()
    assert solver.last_touched == 1
    assert solver.cut_value == nx_cut_value(solver)
    assert labels[base + n - 1] is False


update = st.one_of(
    st.tuples(st.just("t"), st.integers(0, 5), st.integers(-6, 12), st.integers(-6, 12)),
    st.tuples(st.just("e"), st.integers(0, 5), st.integers(0, 5), st.integers(-8, 15)),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.lists(update, min_size=1, max_size=8), min_size=1, max_size=6))
def test_incremental_cut_matches_networkx(rounds):
    solver = DynamicMaxFlow()
    for batch in rounds:
        for kind, a, b, c in batch:
            if kind == "t":
                cs, ct = solver.terminal_capacity(a)
                solver.add_terminal(a, max(b, -cs), max(c, -ct))
            elif a != b:
                solver.add_edge(a, b, max(c, -solver.edge_capacity(a, b)))
        labels = solver.solve()
        expected = nx_cut_value(solver)
        assert solver.cut_value == expected
        assert solver.cut_value_of(labels) == expected
