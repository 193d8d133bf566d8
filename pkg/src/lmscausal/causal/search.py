"""Constraint-based structure search: PC-stable and an FCI-style PAG search.

Both searches process nodes in sorted-name order and freeze adjacency sets at
each conditioning level, so their output does not depend on the column order
of the input frame.  Separating sets found by the adjacency phase are stored
on ``graph.meta["sepsets"]`` and reused for orientation.
"""

from __future__ import annotations

import logging
from itertools import combinations
from typing import Callable, Sequence

import pandas as pd

from .citest import CIResult, FisherZ, MixedCI, _is_categorical
from .graph import ARROW, CIRCLE, TAIL, CausalGraph, GraphError, KnowledgeTiers

logger = logging.getLogger(__name__)

CITest = Callable[[str, str, Sequence[str]], CIResult]


def _key(a: str, b: str) -> frozenset:
    return frozenset((a, b))


def _make_test(data: pd.DataFrame, alpha: float, test) -> CITest:
    if callable(test):
        return test
    if test == "auto":
        test = "mixed" if any(_is_categorical(data[c]) for c in data.columns) else "fisherz"
    if test == "fisherz":
        return FisherZ(data, alpha)
    if test == "mixed":
        return MixedCI(data, alpha)
    raise ValueError(f"unknown CI test {test!r}")


def skeleton(nodes: Sequence[str], test: CITest, max_cond: int = 3,
             knowledge: KnowledgeTiers | None = None) -> CausalGraph:
    """Order-independent adjacency search.

    Returns an undirected graph (tail-tail marks) whose ``meta`` holds
    ``sepsets`` (pair -> tuple) and ``removal_p`` (pair -> p of the removing test).
    """
    names = sorted(nodes)
    adj = {v: set(names) - {v} for v in names}
    sepsets: dict[frozenset, tuple[str, ...]] = {}
    removal_p: dict[frozenset, float] = {}
    if knowledge is not None:
        for a, b in combinations(names, 2):
            if knowledge.is_forbidden(a, b) and knowledge.is_forbidden(b, a):
                adj[a].discard(b)
                adj[b].discard(a)
                sepsets[_key(a, b)] = ()
    required = set()
    if knowledge is not None:
        required = {_key(a, b) for a, b in knowledge.required}

    level = 0
    while level <= max_cond:
        frozen = {v: sorted(adj[v]) for v in names}
        testable = False
        removed = []
        for a, b in combinations(names, 2):
            if b not in adj[a] or _key(a, b) in required:
                continue
            done = False
            for x, y in ((a, b), (b, a)):
                cands = [v for v in frozen[x] if v != y]
                if len(cands) < level:
                    continue
                testable = True
                for cond in combinations(cands, level):
                    res = test(a, b, cond)
                    if res.independent:
                        removed.append((a, b, cond, res.p))
                        done = True
                        break
                if done:
                    break
        for a, b, cond, p in removed:
            adj[a].discard(b)
            adj[b].discard(a)
            sepsets[_key(a, b)] = tuple(cond)
            removal_p[_key(a, b)] = float(p)
        if not testable:
            break
        level += 1

    g = CausalGraph(nodes)
    for a in names:
        for b in adj[a]:
            if a < b:
                g.add_edge(a, b, TAIL, TAIL)
    g.meta["sepsets"] = sepsets
    g.meta["removal_p"] = removal_p
    return g


def _unshielded_triples(g: CausalGraph):
    for z in sorted(g.nodes):
        nb = sorted(g.neighbors(z))
        for x, y in combinations(nb, 2):
            if not g.is_adjacent(x, y):
                yield x, z, y


# ---------------------------------------------------------------- PC ----
def _orient(g: CausalGraph, a: str, b: str, knowledge: KnowledgeTiers | None) -> bool:
    """Orient undirected a--b as a -> b when allowed; return True on change."""
    if not g.is_undirected(a, b):
        return False
    if knowledge is not None and knowledge.is_forbidden(a, b):
        return False
    g.add_directed(a, b)
    return True


def _apply_knowledge_pdag(g: CausalGraph, knowledge: KnowledgeTiers | None) -> None:
    if knowledge is None:
        return
    for a, b in knowledge.required:
        if a in g.nodes and b in g.nodes and g.is_adjacent(a, b):
            g.add_directed(a, b)
    for a, b, ma, mb in list(g.edges()):
        fa, fb = knowledge.is_forbidden(a, b), knowledge.is_forbidden(b, a)
        if fa and not fb:
            g.add_directed(b, a)
        elif fb and not fa:
            g.add_directed(a, b)


def _meek(g: CausalGraph, knowledge: KnowledgeTiers | None) -> None:
    changed = True
    names = sorted(g.nodes)
    while changed:
        changed = False
        for a in names:
            for b in sorted(g.neighbors(a)):
                if not g.is_undirected(a, b):
                    continue
                # R1: c -> a -- b, c not adjacent b
                if any(g.is_directed(c, a) and not g.is_adjacent(c, b) and c != b
                       for c in g.neighbors(a)):
                    changed |= _orient(g, a, b, knowledge)
                    continue
                # R2: a -> c -> b
                if any(g.is_directed(a, c) and g.is_directed(c, b) for c in g.neighbors(a)):
                    changed |= _orient(g, a, b, knowledge)
                    continue
                # R3: a -- c -> b, a -- d -> b, c,d not adjacent
                cs = [c for c in g.neighbors(a) if g.is_undirected(a, c) and g.is_directed(c, b)]
                if any(not g.is_adjacent(c, d) for c, d in combinations(cs, 2)):
                    changed |= _orient(g, a, b, knowledge)
                    continue
                # R4: a -- d -> c -> b, a adjacent c, d not adjacent b
                hit = False
                for d in g.neighbors(a):
                    if d == b or not g.is_undirected(a, d) or g.is_adjacent(d, b):
                        continue
                    for c in g.children(d):
                        if c != a and g.is_adjacent(a, c) and g.is_directed(c, b):
                            hit = True
                            break
                    if hit:
                        break
                if hit:
                    changed |= _orient(g, a, b, knowledge)


def pc_stable(data: pd.DataFrame, knowledge: KnowledgeTiers | None = None,
              alpha: float = 0.05, max_cond: int = 3, test="auto") -> CausalGraph:
    """PC-stable search returning a CPDAG-patterned graph.

    ``test`` is ``"auto"`` (mixed F test when any column is categorical,
    Fisher z otherwise), ``"fisherz"``, ``"mixed"`` or a callable.
    Knowledge orientations are fixed first; collider and Meek orientations
    never override them.
    """
    if max_cond < 0:
        raise ValueError("max_cond must be >= 0")
    nodes = list(data.columns)
    canon = data[sorted(nodes)]
    ci = _make_test(canon, alpha, test)
    g = skeleton(nodes, ci, max_cond, knowledge)
    sepsets = g.meta["sepsets"]
    _apply_knowledge_pdag(g, knowledge)

    for x, z, y in _unshielded_triples(g):
        if z in sepsets.get(_key(x, y), ()):
            continue
        for u in (x, y):
            if g.is_undirected(u, z) and not (knowledge and knowledge.is_forbidden(u, z)):
                g.add_directed(u, z)

    _meek(g, knowledge)
    _check_knowledge(g, knowledge)
    return g


# --------------------------------------------------------------- FCI ----
def _apply_knowledge_pag(g: CausalGraph, knowledge: KnowledgeTiers | None) -> None:
    if knowledge is None:
        return
    for a, b, _, _ in list(g.edges()):
        if knowledge.is_forbidden(a, b):
            g.set_mark(b, a, ARROW)     # a is not an ancestor of b
        if knowledge.is_forbidden(b, a):
            g.set_mark(a, b, ARROW)
    for a, b in knowledge.required:
        if a in g.nodes and b in g.nodes and g.is_adjacent(a, b):
            g.add_directed(a, b)


def _fci_rules(g: CausalGraph, sepsets: dict) -> None:
    names = sorted(g.nodes)
    changed = True
    while changed:
        changed = False
        for b in names:
            nb = sorted(g.neighbors(b))
            for a in nb:
                for c in nb:
                    if a == c:
                        continue
                    # R1: a *-> b o-* c, a not adjacent c  =>  b -> c
                    if (g.mark(a, b) is ARROW and g.mark(c, b) is CIRCLE
                            and not g.is_adjacent(a, c)):
                        g.set_mark(c, b, TAIL)
                        g.set_mark(b, c, ARROW)
                        changed = True
                    # R2: a -> b *-> c  or  a *-> b -> c, with a *-o c  =>  a *-> c
                    if g.is_adjacent(a, c) and g.mark(a, c) is CIRCLE:
                        if ((g.is_directed(a, b) and g.mark(b, c) is ARROW)
                                or (g.mark(a, b) is ARROW and g.is_directed(b, c))):
                            g.set_mark(a, c, ARROW)
                            changed = True
            # R3: a *-> b <-* c, a *-o d o-* c, a,c not adjacent, d *-o b  =>  d *-> b
            for a, c in combinations(nb, 2):
                if g.is_adjacent(a, c) or g.mark(a, b) is not ARROW or g.mark(c, b) is not ARROW:
                    continue
                for d in nb:
                    if d in (a, c) or g.mark(d, b) is not CIRCLE:
                        continue
                    if (g.is_adjacent(a, d) and g.is_adjacent(c, d)
                            and g.mark(a, d) is CIRCLE and g.mark(c, d) is CIRCLE):
                        g.set_mark(d, b, ARROW)
                        changed = True
        if _fci_r4(g, sepsets):
            changed = True


def _fci_r4(g: CausalGraph, sepsets: dict) -> bool:
    """Discriminating-path rule; returns True when any mark changed."""
    changed = False
    for b in sorted(g.nodes):
        for c in sorted(g.neighbors(b)):
            if g.mark(c, b) is not CIRCLE:
                continue
            for a in sorted(g.neighbors(b)):
                # a must be a collider on the path and a parent of c
                if a == c or g.mark(b, a) is not ARROW or not g.is_directed(a, c):
                    continue
                theta = _discriminating_start(g, a, b, c)
                if theta is None:
                    continue
                if b in sepsets.get(_key(theta, c), ()):
                    g.set_mark(c, b, TAIL)
                    g.set_mark(b, c, ARROW)
                else:
                    g.set_mark(a, b, ARROW)
                    g.set_mark(b, a, ARROW)
                    g.set_mark(b, c, ARROW)
                    g.set_mark(c, b, ARROW)
                changed = True
                break
    return changed


def _discriminating_start(g: CausalGraph, a: str, b: str, c: str) -> str | None:
    """Search backwards from ``a`` for the start of a discriminating path for ``b``."""
    visited = {a, b, c}
    frontier = [a]
    while frontier:
        nxt = []
        for v in frontier:
            for t in sorted(g.neighbors(v)):
                if t in visited or g.mark(t, v) is not ARROW:
                    continue
                if not g.is_adjacent(t, c):
                    return t
                if g.is_directed(t, c) and g.mark(v, t) is ARROW:
                    visited.add(t)
                    nxt.append(t)
        frontier = nxt
    return None


def fci(data: pd.DataFrame, knowledge: KnowledgeTiers | None = None,
        alpha: float = 0.05, max_cond: int = 3, test="fisherz") -> CausalGraph:
    """FCI-style search returning a PAG.

    Adjacencies come from the PC-stable skeleton (no possible-d-sep stage).
    All endpoints start as circles; knowledge arrowheads are placed, then
    unshielded colliders, then orientation rules R1-R4 run to closure.
    """
    if max_cond < 0:
        raise ValueError("max_cond must be >= 0")
    nodes = list(data.columns)
    canon = data[sorted(nodes)]
    ci = _make_test(canon, alpha, test)
    g = skeleton(nodes, ci, max_cond, knowledge)
    sepsets = g.meta["sepsets"]
    for a, b, _, _ in list(g.edges()):
        g.add_edge(a, b, CIRCLE, CIRCLE)
    _apply_knowledge_pag(g, knowledge)

    for x, z, y in list(_unshielded_triples(g)):
        if z not in sepsets.get(_key(x, y), ()):
            g.set_mark(x, z, ARROW)
            g.set_mark(y, z, ARROW)

    _fci_rules(g, sepsets)
    _check_knowledge(g, knowledge)
    return g


def _check_knowledge(g: CausalGraph, knowledge: KnowledgeTiers | None) -> None:
    if knowledge is None:
        return
    bad = knowledge.violations(g)
    if bad:
        raise GraphError("search output violates background knowledge: " + "; ".join(bad))
