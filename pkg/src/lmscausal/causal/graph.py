"""Mixed graphs with per-endpoint marks, plus tiered background knowledge.

Each edge stores one mark per endpoint.  ``mark(a, b)`` is the mark at the
``b`` end of the a--b edge, so ``a -> b`` has ``mark(a, b) == ARROW`` and
``mark(b, a) == TAIL``.

    TAIL-ARROW    a --> b   a causes b
    ARROW-ARROW   a <-> b   latent common cause
    CIRCLE        a o-> b, a o-o b   mark not determined
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator


class Mark(enum.Enum):
    TAIL = "tail"
    ARROW = "arrow"
    CIRCLE = "circle"


TAIL, ARROW, CIRCLE = Mark.TAIL, Mark.ARROW, Mark.CIRCLE

_GLYPH_LEFT = {TAIL: "-", ARROW: "<", CIRCLE: "o"}
_GLYPH_RIGHT = {TAIL: "-", ARROW: ">", CIRCLE: "o"}


class GraphError(ValueError):
    pass


class CausalGraph:
    """Graph over named nodes with at most one edge per pair."""

    def __init__(self, nodes: Iterable[str] = ()):
        self.nodes: list[str] = list(nodes)
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node names")
        self._adj: dict[str, dict[str, Mark]] = {n: {} for n in self.nodes}
        self.meta: dict = {}

    # construction -------------------------------------------------------
    def add_node(self, name: str) -> None:
        if name in self._adj:
            raise GraphError(f"node {name!r} already present")
        self.nodes.append(name)
        self._adj[name] = {}

    def add_edge(self, a: str, b: str, mark_a: Mark = TAIL, mark_b: Mark = ARROW) -> None:
        """Add (or replace) the a--b edge with ``mark_a`` at a and ``mark_b`` at b."""
        if a == b:
            raise GraphError(f"self loop on {a!r}")
        for n in (a, b):
            if n not in self._adj:
                raise GraphError(f"unknown node {n!r}")
        self._adj[a][b] = mark_b
        self._adj[b][a] = mark_a

    def add_directed(self, a: str, b: str) -> None:
        self.add_edge(a, b, TAIL, ARROW)

    def add_bidirected(self, a: str, b: str) -> None:
        self.add_edge(a, b, ARROW, ARROW)

    def remove_edge(self, a: str, b: str) -> None:
        self._adj[a].pop(b, None)
        self._adj[b].pop(a, None)

    def set_mark(self, a: str, b: str, mark: Mark) -> None:
        """Set the mark at the ``b`` end of an existing a--b edge."""
        if b not in self._adj[a]:
            raise GraphError(f"no edge {a}--{b}")
        self._adj[a][b] = mark

    # queries -------------------------------------------------------------
    def mark(self, a: str, b: str) -> Mark | None:
        return self._adj[a].get(b)

    def is_adjacent(self, a: str, b: str) -> bool:
        return b in self._adj[a]

    def neighbors(self, a: str) -> list[str]:
        order = {n: i for i, n in enumerate(self.nodes)}
        return sorted(self._adj[a], key=order.__getitem__)

    def is_directed(self, a: str, b: str) -> bool:
        return self.mark(a, b) is ARROW and self.mark(b, a) is TAIL

    def is_bidirected(self, a: str, b: str) -> bool:
        return self.mark(a, b) is ARROW and self.mark(b, a) is ARROW

    def is_undirected(self, a: str, b: str) -> bool:
        return self.mark(a, b) is TAIL and self.mark(b, a) is TAIL

    def parents(self, b: str) -> list[str]:
        return [a for a in self.neighbors(b) if self.is_directed(a, b)]

    def children(self, a: str) -> list[str]:
        return [b for b in self.neighbors(a) if self.is_directed(a, b)]

    def edges(self) -> Iterator[tuple[str, str, Mark, Mark]]:
        """Yield ``(a, b, mark_at_a, mark_at_b)`` once per edge, a before b in node order."""
        order = {n: i for i, n in enumerate(self.nodes)}
        for a in self.nodes:
            for b in self.neighbors(a):
                if order[a] < order[b]:
                    yield a, b, self._adj[b][a], self._adj[a][b]

    def directed_edges(self) -> list[tuple[str, str]]:
        out = []
        for a, b, ma, mb in self.edges():
            if ma is TAIL and mb is ARROW:
                out.append((a, b))
            elif ma is ARROW and mb is TAIL:
                out.append((b, a))
        return out

    def bidirected_edges(self) -> list[tuple[str, str]]:
        return [(a, b) for a, b, ma, mb in self.edges() if ma is ARROW and mb is ARROW]

    def skeleton(self) -> set[frozenset[str]]:
        return {frozenset((a, b)) for a, b, _, _ in self.edges()}

    def has_circles(self) -> bool:
        return any(CIRCLE in (ma, mb) for _, _, ma, mb in self.edges())

    def n_edges(self) -> int:
        return sum(1 for _ in self.edges())

    def find_directed_cycle(self) -> list[str] | None:
        """Return one directed cycle (as a node list) among tail-arrow edges, or None."""
        color = {n: 0 for n in self.nodes}
        stack: list[str] = []

        def visit(u: str) -> list[str] | None:
            color[u] = 1
            stack.append(u)
            for v in self.children(u):
                if color[v] == 1:
                    return stack[stack.index(v):] + [v]
                if color[v] == 0:
                    found = visit(v)
                    if found:
                        return found
            stack.pop()
            color[u] = 2
            return None

        for n in self.nodes:
            if color[n] == 0:
                cyc = visit(n)
                if cyc:
                    return cyc
        return None

    def topological_order(self) -> list[str]:
        cyc = self.find_directed_cycle()
        if cyc:
            raise GraphError("directed cycle: " + " -> ".join(cyc))
        indeg = {n: len(self.parents(n)) for n in self.nodes}
        ready = [n for n in self.nodes if indeg[n] == 0]
        out = []
        while ready:
            u = ready.pop(0)
            out.append(u)
            for v in self.children(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        return out

    def copy(self) -> "CausalGraph":
        g = CausalGraph(self.nodes)
        g._adj = {n: dict(m) for n, m in self._adj.items()}
        g.meta = dict(self.meta)
        return g

    def subgraph(self, keep: Iterable[str]) -> "CausalGraph":
        keep = [n for n in self.nodes if n in set(keep)]
        g = CausalGraph(keep)
        for a, b, ma, mb in self.edges():
            if a in g._adj and b in g._adj:
                g.add_edge(a, b, ma, mb)
        return g

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return set(self.nodes) == set(other.nodes) and self._adj == other._adj

    def __repr__(self) -> str:
        return f"CausalGraph({len(self.nodes)} nodes, {self.n_edges()} edges)"

    def edge_string(self, a: str, b: str) -> str:
        return f"{a} {_GLYPH_LEFT[self.mark(b, a)]}-{_GLYPH_RIGHT[self.mark(a, b)]} {b}"

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [{"a": a, "b": b, "mark_a": ma.value, "mark_b": mb.value}
                      for a, b, ma, mb in self.edges()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        g = cls(d["nodes"])
        for e in d["edges"]:
            g.add_edge(e["a"], e["b"], Mark(e["mark_a"]), Mark(e["mark_b"]))
        return g

    def to_dot(self, name: str = "G") -> str:
        arrowhead = {TAIL: "none", ARROW: "normal", CIRCLE: "odot"}
        lines = [f"digraph {name} {{"]
        for n in self.nodes:
            lines.append(f'  "{n}";')
        for a, b, ma, mb in self.edges():
            if ma is TAIL and mb is ARROW:
                lines.append(f'  "{a}" -> "{b}";')
            elif ma is ARROW and mb is TAIL:
                lines.append(f'  "{b}" -> "{a}";')
            elif ma is ARROW and mb is ARROW:
                lines.append(f'  "{a}" -> "{b}" [dir=both];')
            else:
                lines.append(f'  "{a}" -> "{b}" [dir=both, arrowtail={arrowhead[ma]}, '
                             f'arrowhead={arrowhead[mb]}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass
class KnowledgeTiers:
    """Ordered tiers plus explicit forbidden/required directed edges.

    A variable in tier ``i`` may cause variables in tiers ``>= i`` only.
    Variables not assigned to a tier are unconstrained by ordering.
    """

    tiers: list[list[str]] = field(default_factory=list)
    forbidden: list[tuple[str, str]] = field(default_factory=list)
    required: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        seen: dict[str, int] = {}
        for i, tier in enumerate(self.tiers):
            for v in tier:
                if v in seen:
                    raise GraphError(f"variable {v!r} listed in tiers {seen[v]} and {i}")
                seen[v] = i
        self._tier = seen
        self.forbidden = [tuple(e) for e in self.forbidden]
        self.required = [tuple(e) for e in self.required]
        clash = set(self.forbidden) & set(self.required)
        clash |= {e for e in self.required if self._tier_violation(*e)}
        if clash:
            raise GraphError(f"contradictory knowledge: required edges also forbidden: {sorted(clash)}")

    def tier_of(self, v: str) -> int | None:
        return self._tier.get(v)

    def _tier_violation(self, a: str, b: str) -> bool:
        ta, tb = self._tier.get(a), self._tier.get(b)
        return ta is not None and tb is not None and ta > tb

    def is_forbidden(self, a: str, b: str) -> bool:
        """True when a -> b (a causing b) is excluded."""
        return (a, b) in self.forbidden or self._tier_violation(a, b)

    def is_required(self, a: str, b: str) -> bool:
        return (a, b) in self.required

    def violations(self, g: CausalGraph) -> list[str]:
        """Edges of ``g`` that contradict this knowledge."""
        out = []
        for a, b, ma, mb in g.edges():
            # a tail at x asserts (or, when undirected, allows) x ancestral to y
            if (ma is TAIL and self.is_forbidden(a, b)) or (mb is TAIL and self.is_forbidden(b, a)):
                out.append(g.edge_string(a, b))
        for a, b in self.required:
            if a in g.nodes and b in g.nodes and not g.is_directed(a, b):
                out.append(f"required {a} -> {b} missing")
        return out

    def to_dict(self) -> dict:
        return {"tiers": self.tiers, "forbidden": [list(e) for e in self.forbidden],
                "required": [list(e) for e in self.required]}

    @classmethod
    def from_dict(cls, d: dict | None) -> "KnowledgeTiers":
        d = d or {}
        return cls(tiers=[list(t) for t in d.get("tiers", [])],
                   forbidden=[tuple(e) for e in d.get("forbidden", [])],
                   required=[tuple(e) for e in d.get("required", [])])
