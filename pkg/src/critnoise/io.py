"""Edge-list files: first line ``n m``, then ``m`` lines ``i j`` with ``i < j``."""

from __future__ import annotations

import numpy as np

from .graphs import Graph


def write_edge_list(path, g: Graph) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{g.n} {g.m}\n")
        if g.m:
            np.savetxt(fh, g.edges, fmt="%d", delimiter=" ")


def read_edge_list(path) -> Graph:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'n m'")
        n, m = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != m:
        raise ValueError(f"{path}: header announces {m} edges, found {len(rows)}")
    if any(len(r) != 2 for r in rows):
        raise ValueError(f"{path}: every edge line needs two integers")
    e = np.array(rows, dtype=np.int64).reshape(-1, 2)
    if m and np.any(e[:, 0] >= e[:, 1]):
        raise ValueError(f"{path}: edges must satisfy i < j")
    return Graph.from_edges(n, e)
