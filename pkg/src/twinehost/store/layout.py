"""Node tree arithmetic for protected files.

Nodes are addressed logically as ``(level, index)``: level 0 holds data
nodes, levels ``1 .. root_level - 1`` hold interior nodes and the root sits
alone at ``root_level``.  Physical node ids follow creation order, so a file
that only ever grows never has to move a record once it is on disk: the root
is id 0 and every other node gets the next free id at the moment the tree
first needs it.  When several nodes appear together (a new data node that
also opens interior nodes) the interior ones come first, higher levels
before lower, lower index before higher.
"""
from __future__ import annotations

from dataclasses import dataclass

NODE_SIZE = 4096
ENTRY_SIZE = 32
FANOUT = NODE_SIZE // ENTRY_SIZE  # 128


@dataclass(frozen=True)
class NodeLayout:
    data_nodes: int
    interior_nodes_per_level: tuple[int, ...]  # top-down, root excluded
    height: int
    total_nodes: int


def data_node_count(logical_size: int) -> int:
    return -(-logical_size // NODE_SIZE)


def root_level(n_data: int) -> int:
    """Level of the root for a tree with ``n_data`` data nodes."""
    if n_data == 0:
        return 0
    level, span = 1, FANOUT
    while n_data > span:
        level += 1
        span *= FANOUT
    return level


def level_counts(n_data: int) -> list[int]:
    """Node counts for levels ``0 .. root_level - 1`` (root excluded)."""
    top = root_level(n_data)
    counts = []
    c = n_data
    for _ in range(top):
        counts.append(c)
        c = -(-c // FANOUT)
    return counts


def interior_count(n_data: int) -> int:
    return sum(level_counts(n_data)[1:])


def layout_nodes(logical_size: int) -> NodeLayout:
    if logical_size < 0:
        raise ValueError("logical_size must be non-negative")
    n = data_node_count(logical_size)
    counts = level_counts(n)
    interior = tuple(reversed(counts[1:]))
    return NodeLayout(
        data_nodes=n,
        interior_nodes_per_level=interior,
        height=len(counts) + 1,
        total_nodes=1 + sum(counts),
    )


def node_count_for_data(n_data: int) -> int:
    return 1 + sum(level_counts(n_data))


def _created_at(level: int, index: int) -> int:
    """Data-node count at which node (level, index) first exists."""
    span = FANOUT ** level
    return (span if index == 0 else index * span) + 1


def node_id(level: int, index: int) -> int:
    """Physical id of a non-root node."""
    if level == 0:
        return 1 + index + interior_count(index + 1)
    c = _created_at(level, index)
    before = 1 + (c - 1) + interior_count(c - 1)
    old, new = level_counts(c - 1), level_counts(c)
    old += [0] * (len(new) - len(old))
    above = sum(new[l] - old[l] for l in range(level + 1, len(new)))
    same = 1 if index == 1 and new[level] - old[level] == 2 else 0
    return before + above + same


def parent_of(level: int, index: int, top: int) -> tuple[int, int]:
    """Parent address and the child's slot inside it."""
    if level + 1 >= top:
        return (top, 0), index
    return (level + 1, index // FANOUT), index % FANOUT


def address_map(n_data: int) -> dict[int, tuple[int, int]]:
    """Inverse of :func:`node_id` for one tree shape (root maps to its level)."""
    top = root_level(n_data)
    out = {0: (top, 0)}
    for level, count in enumerate(level_counts(n_data)):
        for i in range(count):
            out[node_id(level, i)] = (level, i)
    return out
