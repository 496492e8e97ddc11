"""Named test networks and seeded generators (line, star, ring, triangle, meshed tree)."""

from __future__ import annotations

import random
import re
from fractions import Fraction

from .network import Branch, BranchId, Load, NetworkModel, Node, Source, make_network

F = Fraction


def _src(p_max, q_max, p_min=0, q_min=0) -> Source:
    return Source(F(p_min), F(p_max), F(q_min), F(q_max))


def line3() -> NetworkModel:
    """Source n1 feeding n2 (P=1.0, Q=0.5, w=1) and n3 (P=0.5, Q=0.2, w=2) in a line."""
    du = F("0.05")
    nodes = [
        Node("n1", du, source=_src(F("2.0"), F("1.0"))),
        Node("n2", du, load=Load(F("1.0"), F("0.5"), F(1))),
        Node("n3", du, load=Load(F("0.5"), F("0.2"), F(2))),
    ]
    br = dict(r=F("0.01"), x=F("0.02"), p_max=F("2.0"), q_max=F("1.0"))
    branches = [Branch(BranchId.of("n1", "n2"), **br), Branch(BranchId.of("n2", "n3"), **br)]
    return make_network(nodes, branches, u_nominal=1, u_delta=du, name="line3")


def triangle() -> NetworkModel:
    """Source n1 with loaded n2, n3 on a 3-cycle."""
    du = F("0.05")
    nodes = [
        Node("n1", du, source=_src(F("2.0"), F("1.0"))),
        Node("n2", du, load=Load(F("0.6"), F("0.3"), F(1))),
        Node("n3", du, load=Load(F("0.4"), F("0.2"), F(2))),
    ]
    br = dict(r=F("0.01"), x=F("0.02"), p_max=F("2.0"), q_max=F("1.0"))
    branches = [
        Branch(BranchId.of("n1", "n2"), **br),
        Branch(BranchId.of("n2", "n3"), **br),
        Branch(BranchId.of("n1", "n3"), **br),
    ]
    return make_network(nodes, branches, u_nominal=1, u_delta=du, name="triangle")


def _random_load(rng: random.Random) -> Load:
    steps = rng.randint(1, 10)  # 0.1 .. 1.0 pu
    return Load(F(steps, 10), F(rng.randint(0, 2 * steps // 3), 10), F(rng.randint(1, 3)))


def generate(kind: str, n: int, seed: int = 0, *, sources: int = 1, chords: int = 0,
             tightness: str = "0.7") -> NetworkModel:
    """Deterministic pseudo-random instance.

    ``kind`` is one of line, star, ring, tree.  Loads are multiples of 0.1 pu;
    the first source's capacity is ``tightness`` times the total load (so not
    every load can always be picked up).  ``chords`` extra branches are added
    to tree-shaped kinds to create meshes.
    """
    rng = random.Random(f"{kind}:{n}:{seed}:{sources}:{chords}")
    ids = [f"n{k}" for k in range(1, n + 1)]
    edges: list[tuple[str, str]] = []
    if kind == "line":
        edges = [(ids[k], ids[k + 1]) for k in range(n - 1)]
    elif kind == "star":
        edges = [(ids[0], ids[k]) for k in range(1, n)]
    elif kind == "ring":
        edges = [(ids[k], ids[(k + 1) % n]) for k in range(n)] if n > 2 else [(ids[0], ids[1])]
    elif kind == "tree":
        edges = [(ids[rng.randrange(k)], ids[k]) for k in range(1, n)]
    else:
        raise ValueError(f"unknown fixture kind {kind!r}")
    present = {frozenset(e) for e in edges}
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:] if frozenset((a, b)) not in present]
    rng.shuffle(pairs)
    for a, b in pairs[:chords]:
        edges.append((a, b))

    src_nodes = {ids[0]}
    if sources > 1:
        src_nodes.update(rng.sample(ids[1:], sources - 1))
    loads = {nid: _random_load(rng) for nid in ids if nid not in src_nodes}
    total = sum((ld.p_active for ld in loads.values()), F(0))
    total_q = sum((ld.q_reactive for ld in loads.values()), F(0))
    du = F("0.05")
    nodes = []
    for nid in ids:
        if nid in src_nodes:
            share = F(tightness) if nid == ids[0] else F("0.4")
            p_cap = max(F(1, 10), _round_tenth(total * share))
            q_cap = max(F(1, 10), _round_tenth(total_q * share))
            nodes.append(Node(nid, du, source=_src(p_cap, q_cap)))
        else:
            nodes.append(Node(nid, du, load=loads[nid]))
    branches = []
    for a, b in edges:
        r = F(rng.randint(1, 3), 100)
        x = F(rng.randint(1, 4), 100)
        p_max = _round_tenth(max(total * F("0.8"), F(1, 2)))
        branches.append(Branch(BranchId.of(a, b), r, x, p_max, p_max))
    name = f"{kind}{n}" + (f"s{sources}" if sources > 1 else "") + (f"c{chords}" if chords else "") + f"-{seed}"
    return make_network(nodes, branches, u_nominal=1, u_delta=du, name=name)


def _round_tenth(value: Fraction) -> Fraction:
    return F(round(value * 10), 10)


_NAME = re.compile(r"^(line|star|ring|tree)(\d+)(?:s(\d+))?(?:c(\d+))?(?:-(\d+))?$")


def make_fixture(name: str, seed: int = 0) -> NetworkModel:
    """Look up ``line3``/``triangle`` or parse generator names like ``ring5``, ``tree6c1-2``."""
    if name == "line3":
        return line3()
    if name in ("triangle", "tri"):
        return triangle()
    m = _NAME.match(name)
    if not m:
        raise ValueError(f"unknown fixture {name!r}")
    kind, n, s, c, sd = m.groups()
    return generate(kind, int(n), int(sd) if sd is not None else seed,
                    sources=int(s or 1), chords=int(c or 0))
