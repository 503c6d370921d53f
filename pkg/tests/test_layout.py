import math

import pytest
from hypothesis import given, strategies as st

from twinehost.store.layout import (FANOUT, NODE_SIZE, address_map, layout_nodes, node_id,
                                    parent_of, root_level)


def brute_layout(size):
    """Build the tree level by level with plain ceil division."""
    data = math.ceil(size / NODE_SIZE)
    if data == 0:
        return 0, [], 1, 1
    levels = []
    n = data
    while n > FANOUT:
        n = math.ceil(n / FANOUT)
        levels.append(n)
    interior = levels[::-1]
    return data, interior, len(interior) + 2, data + sum(interior) + 1


@pytest.mark.parametrize("size,expected", [
    (0, (0, (), 1, 1)),
    (4096, (1, (), 2, 2)),
    (1 << 20, (256, (2,), 3, 259)),
    (1, (1, (), 2, 2)),
    (4097, (2, (), 2, 3)),
    (128 * 4096, (128, (), 2, 129)),
    (128 * 4096 + 1, (129, (2,), 3, 132)),
])
def test_layout_examples(size, expected):
    lay = layout_nodes(size)
    assert (lay.data_nodes, tuple(lay.interior_nodes_per_level), lay.height, lay.total_nodes) == expected


@given(st.integers(min_value=0, max_value=1 << 40))
def test_layout_matches_brute_force(size):
    lay = layout_nodes(size)
    data, interior, height, total = brute_layout(size)
    assert lay.data_nodes == data
    assert list(lay.interior_nodes_per_level) == interior
    assert (lay.height, lay.total_nodes) == (height, total)


@pytest.mark.parametrize("n_data", [1, 5, 128, 129, 300, 16384, 16385])
def test_node_ids_dense_and_unique(n_data):
    amap = address_map(n_data)
    assert sorted(amap) == list(range(len(amap)))
    assert len(set(amap.values())) == len(amap)
    assert amap[0] == (root_level(n_data), 0)
    assert len(amap) == layout_nodes(n_data * NODE_SIZE).total_nodes


def test_growth_never_moves_existing_nodes():
    before = address_map(200)
    after = address_map(20000)
    # every non-root node keeps its id once the tree grows
    assert all(after[nid] == addr for nid, addr in before.items() if nid != 0)


def test_parent_slot_arithmetic():
    top = root_level(300)
    (plevel, pidx), slot = parent_of(0, 257, top)
    assert (plevel, pidx, slot) == (1, 2, 1)
    assert parent_of(1, 2, top) == ((top, 0), 2)
    assert node_id(0, 0) == 1  # the first data node exists before any interior node
    assert node_id(1, 0) < node_id(0, 128)  # interior nodes precede the data node that opens them
