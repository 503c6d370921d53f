from __future__ import annotations

from collections import OrderedDict


class LruCache:
    """Ordered node cache; the caller decides what to do with evicted nodes."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def lookup(self, key):
        node = self.entries.get(key)
        if node is None:
            self.misses += 1
            return None
        self.hits += 1
        self.entries.move_to_end(key)
        return node

    def peek(self, key):
        return self.entries.get(key)

    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def insert(self, key, node) -> None:
        if key in self.entries:
            raise KeyError(f"{key} already cached")
        if self.full():
            raise OverflowError("cache full; evict first")
        self.entries[key] = node

    def pop_lru(self):
        self.evictions += 1
        return self.entries.popitem(last=False)

    def values(self):
        return list(self.entries.values())

    def clear(self):
        self.entries.clear()
