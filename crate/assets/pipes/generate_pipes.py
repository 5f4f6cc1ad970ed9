#!/usr/bin/env python3
"""Writes the pipe-network meshes (MSH 2.2 ASCII) and their manifest.

Geometry: a channel [0, 7] x [-1, 0] feeding three pipes of width 0.5 that
hang down to y = -4.  The mesh is block structured: every block edge is split
into round(length / h) cells and each quad is cut along alternating
diagonals, so the triangulation is conforming across blocks.

Facet markers: 1 inlet (x = 0), 2 free wall, 3 fixed wall (pipe sides below
y = -2.5), 4/5/6 outlets (pipe bottoms, left to right).  Cell marker 1.
"""

import json
import sys
from pathlib import Path

X_BREAKS = [0.0, 2.25, 2.75, 4.25, 4.75, 6.25, 6.75, 7.0]
PIPES = [(2.25, 2.75), (4.25, 4.75), (6.25, 6.75)]
Y_CHANNEL = [-1.0, 0.0]
Y_PIPE = [-4.0, -2.5, -1.0]
FIXED_BELOW = -2.5

INLET, FREE_WALL, FIXED_WALL = 1, 2, 3
OUTLETS = [4, 5, 6]


def axis(breaks, h):
    pts = [breaks[0]]
    for a, b in zip(breaks, breaks[1:]):
        n = max(1, round((b - a) / h))
        pts += [a + (b - a) * k / n for k in range(1, n + 1)]
    return pts


def build(h):
    xs = axis(X_BREAKS, h)
    ys = axis(Y_PIPE, h)[:-1] + axis(Y_CHANNEL, h)

    def in_pipe(x):
        return any(lo - 1e-12 <= x <= hi + 1e-12 for lo, hi in PIPES)

    def cell_inside(i, j):
        xm = 0.5 * (xs[i] + xs[i + 1])
        ym = 0.5 * (ys[j] + ys[j + 1])
        return ym > -1.0 or in_pipe(xm)

    ni, nj = len(xs) - 1, len(ys) - 1
    cells = {(i, j) for i in range(ni) for j in range(nj) if cell_inside(i, j)}
    used = {}
    for i, j in sorted(cells, key=lambda c: (c[1], c[0])):
        for a, b in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
            used.setdefault((a, b), None)
    ordered = sorted(used, key=lambda p: (p[1], p[0]))
    index = {p: k for k, p in enumerate(ordered)}
    nodes = [(xs[a], ys[b]) for a, b in ordered]

    triangles = []
    for i, j in sorted(cells, key=lambda c: (c[1], c[0])):
        a, b = index[(i, j)], index[(i + 1, j)]
        c, d = index[(i + 1, j + 1)], index[(i, j + 1)]
        if (i + j) % 2 == 0:
            triangles += [(a, b, c), (a, c, d)]
        else:
            triangles += [(a, b, d), (b, c, d)]

    facets = []

    def boundary(i, j, di, dj):
        # edge of cell (i, j) on the side (di, dj) is a boundary if the
        # neighbour is outside
        return (i + di, j + dj) not in cells

    for i, j in cells:
        x0, x1, y0, y1 = xs[i], xs[i + 1], ys[j], ys[j + 1]
        sides = [
            ((i, j), (i + 1, j), 0, -1),
            ((i + 1, j), (i + 1, j + 1), 1, 0),
            ((i + 1, j + 1), (i, j + 1), 0, 1),
            ((i, j + 1), (i, j), -1, 0),
        ]
        for p, q, di, dj in sides:
            if not boundary(i, j, di, dj):
                continue
            if di == -1 and abs(x0) < 1e-12:
                marker = INLET
            elif dj == -1 and abs(y0 + 4.0) < 1e-12:
                xm = 0.5 * (x0 + x1)
                marker = OUTLETS[[lo <= xm <= hi for lo, hi in PIPES].index(True)]
            elif di != 0 and y1 <= FIXED_BELOW + 1e-12:
                marker = FIXED_WALL
            else:
                marker = FREE_WALL
            facets.append((index[p], index[q], marker))
    facets.sort()
    return nodes, triangles, facets


def write_msh(path, nodes, triangles, facets):
    with open(path, "w") as f:
        f.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        f.write(f"$Nodes\n{len(nodes)}\n")
        for k, (x, y) in enumerate(nodes):
            f.write(f"{k + 1} {x!r} {y!r} 0\n")
        f.write("$EndNodes\n")
        f.write(f"$Elements\n{len(facets) + len(triangles)}\n")
        k = 1
        for a, b, m in facets:
            f.write(f"{k} 1 2 {m} {m} {a + 1} {b + 1}\n")
            k += 1
        for a, b, c in triangles:
            f.write(f"{k} 2 2 1 1 {a + 1} {b + 1} {c + 1}\n")
            k += 1
        f.write("$EndElements\n")


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    manifest = {}
    for name, h in (("pipes.msh", 0.045), ("pipes_coarse.msh", 0.125)):
        nodes, triangles, facets = build(h)
        write_msh(out / name, nodes, triangles, facets)
        counts = {}
        for _, _, m in facets:
            counts[str(m)] = counts.get(str(m), 0) + 1
        manifest[name] = {
            "h": h,
            "nodes": len(nodes),
            "triangles": len(triangles),
            "facets": len(facets),
            "facets_per_marker": dict(sorted(counts.items())),
        }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
