"""Structured graphs, their homomorphisms and structural validation.

A structured graph carries two independent simple directed relations on one
node set: ``s_edges`` (belongs-to, child -> parent) and ``e_edges`` (links),
plus a finite set of values on every node.  Node ids are opaque hashables,
local to one graph; labels are display metadata and never take part in
equality, matching or typing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Any, Hashable, Iterable, Mapping, NamedTuple

from .report import Code, Report

NodeId = Hashable

#: One-letter amino-acid codes (all letters except B, J, O, U, X, Z).
AMINO_ACIDS = frozenset("ACDEFGHIKLMNPQRSTVWY")

_KIND_ORDER = {"b": 0, "n": 1, "aa": 2, "int": 3, "rate": 4}


class GraphError(ValueError):
    """Raised when an operation receives structurally unusable input."""


@dataclass(frozen=True)
class Value:
    """A tagged scalar: boolean, positive integer, amino acid, interval or rate."""

    kind: str
    data: Any

    def __post_init__(self) -> None:
        k, d = self.kind, self.data
        if k == "b":
            ok = d in (0, 1) and not isinstance(d, float)
            if ok:
                object.__setattr__(self, "data", int(d))
        elif k == "n":
            ok = isinstance(d, int) and not isinstance(d, bool) and d > 0
        elif k == "aa":
            ok = isinstance(d, str) and d in AMINO_ACIDS
        elif k == "int":
            ok = (
                isinstance(d, tuple)
                and len(d) == 2
                and all(isinstance(x, int) and not isinstance(x, bool) and x > 0 for x in d)
            )
        elif k == "rate":
            ok = isinstance(d, Fraction) and d > 0
        else:
            ok = False
        if not ok:
            raise GraphError(f"invalid value {k}:{d!r}")

    @classmethod
    def boolean(cls, b: int | bool) -> Value:
        return cls("b", int(b))

    @classmethod
    def num(cls, n: int) -> Value:
        return cls("n", n)

    @classmethod
    def aa(cls, code: str) -> Value:
        return cls("aa", code)

    @classmethod
    def interval(cls, low: int, high: int) -> Value:
        return cls("int", (low, high))

    @classmethod
    def rate(cls, r: Fraction | int | str) -> Value:
        return cls("rate", Fraction(r))

    def sort_key(self) -> tuple:
        return (_KIND_ORDER[self.kind], self.data)

    def to_json(self) -> dict:
        if self.kind == "int":
            return {"int": list(self.data)}
        if self.kind == "rate":
            return {"rate": f"{self.data.numerator}/{self.data.denominator}"}
        return {self.kind: self.data}

    @classmethod
    def from_json(cls, obj: Mapping) -> Value:
        if not isinstance(obj, Mapping) or len(obj) != 1:
            raise GraphError(f"bad value encoding {obj!r}")
        ((k, d),) = obj.items()
        if k == "int":
            if not isinstance(d, list) or len(d) != 2:
                raise GraphError(f"bad interval {d!r}")
            return cls("int", (d[0], d[1]))
        if k == "rate":
            try:
                return cls("rate", Fraction(d))
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise GraphError(f"bad rate {d!r}") from exc
        if k == "b" and isinstance(d, bool):
            d = int(d)
        return cls(k, d)

    def text(self) -> str:
        """Token used for Kappa internal states."""
        if self.kind == "int":
            return f"{self.data[0]}_{self.data[1]}"
        return str(self.data)

    def __repr__(self) -> str:
        return f"{self.kind}:{self.text()}"


def interval_meets(a: Value, b: Value) -> bool:
    """True iff two interval values denote overlapping, non-empty ranges."""
    (l1, h1), (l2, h2) = a.data, b.data
    if l1 > h1 or l2 > h2:
        return False
    return max(l1, l2) <= min(h1, h2)


@dataclass(frozen=True)
class Universe:
    """An intensional (possibly infinite) value set, used by the meta-model."""

    kind: str

    def __contains__(self, v: object) -> bool:
        return isinstance(v, Value) and v.kind == self.kind

    def __repr__(self) -> str:
        return f"Universe({self.kind})"


def values_subset(small, big) -> bool:
    if isinstance(big, Universe):
        if isinstance(small, Universe):
            return small == big
        return all(v in big for v in small)
    if isinstance(small, Universe):
        return False
    return small <= big


def values_meet(a, b):
    if isinstance(a, Universe) and isinstance(b, Universe):
        return a if a == b else frozenset()
    if isinstance(a, Universe):
        return frozenset(v for v in b if v in a)
    if isinstance(b, Universe):
        return frozenset(v for v in a if v in b)
    return a & b


def values_join(a, b):
    if isinstance(a, Universe) or isinstance(b, Universe):
        if isinstance(a, Universe) and isinstance(b, Universe) and a != b:
            raise GraphError("cannot join two different value universes")
        u = a if isinstance(a, Universe) else b
        other = b if u is a else a
        if not values_subset(other, u):
            raise GraphError("cannot join a universe with foreign values")
        return u
    return a | b


def values_key(vals) -> tuple:
    if isinstance(vals, Universe):
        return (1, vals.kind)
    return (0, tuple(sorted(v.sort_key() for v in vals)))


def id_key(x: NodeId) -> tuple:
    """Deterministic ordering key for heterogeneous node ids."""
    if isinstance(x, str):
        return (0, x)
    if isinstance(x, int) and not isinstance(x, bool):
        return (1, x)
    if isinstance(x, tuple):
        return (2, tuple(id_key(i) for i in x))
    return (3, repr(x))


_EMPTY: frozenset = frozenset()


class StructuredGraph:
    """Immutable structured graph.

    Equality is structural over nodes, edges and values; labels are ignored.
    Construction never validates, so that malformed graphs can be reported
    by :func:`validate_graph`.
    """

    __slots__ = ("nodes", "s_edges", "e_edges", "values", "labels", "_hash")

    def __init__(
        self,
        nodes: Iterable[NodeId] = (),
        s_edges: Iterable[tuple[NodeId, NodeId]] = (),
        e_edges: Iterable[tuple[NodeId, NodeId]] = (),
        values: Mapping[NodeId, Any] | None = None,
        labels: Mapping[NodeId, str] | None = None,
    ) -> None:
        nodes = frozenset(nodes)
        vals = {n: _EMPTY for n in nodes}
        for n, vs in (values or {}).items():
            vals[n] = vs if isinstance(vs, Universe) else frozenset(vs)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "s_edges", frozenset((a, b) for a, b in s_edges))
        object.__setattr__(self, "e_edges", frozenset((a, b) for a, b in e_edges))
        object.__setattr__(self, "values", MappingProxyType(vals))
        object.__setattr__(
            self, "labels", MappingProxyType({n: l for n, l in (labels or {}).items() if l is not None})
        )
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("StructuredGraph is immutable")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StructuredGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.s_edges == other.s_edges
            and self.e_edges == other.e_edges
            and dict(self.values) == dict(other.values)
        )

    def __hash__(self) -> int:
        if self._hash is None:
            h = hash((self.nodes, self.s_edges, self.e_edges, frozenset(self.values.items())))
            object.__setattr__(self, "_hash", h)
        return self._hash

    def __repr__(self) -> str:
        return (
            f"StructuredGraph({len(self.nodes)} nodes, {len(self.s_edges)} S, "
            f"{len(self.e_edges)} E)"
        )

    def __len__(self) -> int:
        return len(self.nodes)

    def label(self, n: NodeId) -> str:
        return self.labels.get(n, str(n))

    def sorted_nodes(self) -> list[NodeId]:
        return sorted(self.nodes, key=id_key)

    # neighbourhoods -----------------------------------------------------
    def s_parents(self, n: NodeId) -> set[NodeId]:
        return {b for a, b in self.s_edges if a == n}

    def s_children(self, n: NodeId) -> set[NodeId]:
        return {a for a, b in self.s_edges if b == n}

    def e_out(self, n: NodeId) -> set[NodeId]:
        return {b for a, b in self.e_edges if a == n}

    def e_in(self, n: NodeId) -> set[NodeId]:
        return {a for a, b in self.e_edges if b == n}

    def direct_s_parents(self, n: NodeId) -> set[NodeId]:
        """Parents not reachable through another parent (transitive reduction)."""
        ps = self.s_parents(n)
        return {p for p in ps if not any((q, p) in self.s_edges for q in ps if q != p)}

    def direct_s_children(self, n: NodeId) -> set[NodeId]:
        return {c for c in self.s_children(n) if n in self.direct_s_parents(c)}

    # functional updates ---------------------------------------------------
    def replace(self, **changes) -> StructuredGraph:
        fields = {
            "nodes": self.nodes,
            "s_edges": self.s_edges,
            "e_edges": self.e_edges,
            "values": self.values,
            "labels": self.labels,
        }
        fields.update(changes)
        return StructuredGraph(**fields)

    def subgraph(self, keep: Iterable[NodeId]) -> StructuredGraph:
        keep = frozenset(keep)
        return StructuredGraph(
            keep,
            ((a, b) for a, b in self.s_edges if a in keep and b in keep),
            ((a, b) for a, b in self.e_edges if a in keep and b in keep),
            {n: self.values.get(n, _EMPTY) for n in keep},
            {n: l for n, l in self.labels.items() if n in keep},
        )

    def relabel(self, mapping: Mapping[NodeId, NodeId]) -> StructuredGraph:
        """Rename nodes through an injective mapping."""
        if len(set(mapping[n] for n in self.nodes)) != len(self.nodes):
            raise GraphError("relabel mapping is not injective")
        return StructuredGraph(
            (mapping[n] for n in self.nodes),
            ((mapping[a], mapping[b]) for a, b in self.s_edges),
            ((mapping[a], mapping[b]) for a, b in self.e_edges),
            {mapping[n]: v for n, v in self.values.items()},
            {mapping[n]: l for n, l in self.labels.items()},
        )


class Homomorphism:
    """A node map ``dom -> cod``; validity is checked by :func:`check_homomorphism`."""

    __slots__ = ("dom", "cod", "mapping")

    def __init__(self, dom: StructuredGraph, cod: StructuredGraph, mapping: Mapping[NodeId, NodeId]):
        object.__setattr__(self, "dom", dom)
        object.__setattr__(self, "cod", cod)
        object.__setattr__(self, "mapping", MappingProxyType(dict(mapping)))

    def __setattr__(self, name, value):
        raise AttributeError("Homomorphism is immutable")

    def __call__(self, n: NodeId) -> NodeId:
        return self.mapping[n]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Homomorphism):
            return NotImplemented
        return self.dom == other.dom and self.cod == other.cod and dict(self.mapping) == dict(other.mapping)

    def __hash__(self) -> int:
        return hash((self.dom, self.cod, frozenset(self.mapping.items())))

    def __repr__(self) -> str:
        pairs = ", ".join(f"{k!r}->{self.mapping[k]!r}" for k in sorted(self.mapping, key=id_key))
        return f"Homomorphism({{{pairs}}})"

    def image(self) -> set[NodeId]:
        return set(self.mapping.values())

    def with_cod(self, cod: StructuredGraph) -> Homomorphism:
        return Homomorphism(self.dom, cod, self.mapping)

    def with_dom(self, dom: StructuredGraph) -> Homomorphism:
        return Homomorphism(dom, self.cod, self.mapping)


class Span(NamedTuple):
    left: Homomorphism
    right: Homomorphism


class Cospan(NamedTuple):
    left: Homomorphism
    right: Homomorphism


def identity(g: StructuredGraph) -> Homomorphism:
    return Homomorphism(g, g, {n: n for n in g.nodes})


def check_homomorphism(h: Homomorphism) -> Report:
    rep = Report()
    dom, cod, m = h.dom, h.cod, h.mapping
    for n in dom.sorted_nodes():
        if n not in m:
            rep.add(Code.NOT_TOTAL, f"node {n!r} is not mapped", n)
        elif m[n] not in cod.nodes:
            rep.add(Code.BAD_CODOMAIN, f"node {n!r} maps outside the codomain", n)
    if not rep.ok:
        return rep
    for a, b in sorted(dom.s_edges, key=id_key):
        if (m[a], m[b]) not in cod.s_edges:
            rep.add(Code.S_EDGE_NOT_PRESERVED, f"S-edge {a!r}->{b!r} not preserved", a, b)
    for a, b in sorted(dom.e_edges, key=id_key):
        if (m[a], m[b]) not in cod.e_edges:
            rep.add(Code.E_EDGE_NOT_PRESERVED, f"E-edge {a!r}->{b!r} not preserved", a, b)
    for n in dom.sorted_nodes():
        if not values_subset(dom.values[n], cod.values[m[n]]):
            rep.add(Code.VALUE_INCLUSION, f"value inclusion violated at {n!r}", n)
    return rep


def is_homomorphism(h: Homomorphism) -> bool:
    return check_homomorphism(h).ok


def is_mono(h: Homomorphism) -> bool:
    return len(set(h.mapping.values())) == len(h.mapping)


def compose(h1: Homomorphism, h2: Homomorphism) -> Homomorphism:
    """Diagrammatic composition: first ``h1``, then ``h2``."""
    if h1.cod is not h2.dom and h1.cod != h2.dom:
        raise GraphError("cannot compose: codomain of the first is not the domain of the second")
    return Homomorphism(h1.dom, h2.cod, {n: h2.mapping[t] for n, t in h1.mapping.items()})


def find_s_cycle(g: StructuredGraph) -> list[NodeId] | None:
    """Return the nodes of one S-cycle, or None when S is acyclic."""
    succ: dict[NodeId, list[NodeId]] = {n: [] for n in g.nodes}
    for a, b in g.s_edges:
        if a in succ:
            succ[a].append(b)
    state: dict[NodeId, int] = {}
    for root in g.sorted_nodes():
        if root in state:
            continue
        stack = [(root, iter(sorted(succ[root], key=id_key)))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                state[node] = 2
                continue
            if nxt not in succ:
                continue
            if state.get(nxt) == 1:
                return path[path.index(nxt):]
            if nxt not in state:
                state[nxt] = 1
                path.append(nxt)
                stack.append((nxt, iter(sorted(succ[nxt], key=id_key))))
    return None


def validate_graph(g: StructuredGraph) -> Report:
    rep = Report()
    for kind, edges in (("S", g.s_edges), ("E", g.e_edges)):
        for a, b in sorted(edges, key=id_key):
            for end in (a, b):
                if end not in g.nodes:
                    rep.add(Code.DANGLING_EDGE, f"dangling edge endpoint {end} on {kind}-edge {a}->{b}", end)
    extra = set(g.values) - g.nodes
    for n in sorted(extra, key=id_key):
        rep.add(Code.VALUES_NOT_TOTAL, f"values given for unknown node {n}", n)
    return rep


def transitive_closure(pairs: Iterable[tuple[NodeId, NodeId]]) -> frozenset:
    closure = set(pairs)
    succ: dict[NodeId, set[NodeId]] = {}
    for a, b in closure:
        succ.setdefault(a, set()).add(b)
    for a in list(succ):
        seen: set[NodeId] = set()
        todo = list(succ[a])
        while todo:
            x = todo.pop()
            if x in seen:
                continue
            seen.add(x)
            todo.extend(succ.get(x, ()))
        closure.update((a, x) for x in seen)
    return frozenset(closure)


def normalize_s(g: StructuredGraph) -> StructuredGraph:
    """Replace the S relation by its transitive closure."""
    cycle = find_s_cycle(g)
    if cycle is not None:
        raise GraphError(f"S-edges contain a cycle through {cycle}")
    return g.replace(s_edges=transitive_closure(g.s_edges))


def is_transitive(g: StructuredGraph) -> bool:
    return transitive_closure(g.s_edges) == g.s_edges


# -- canonical form -------------------------------------------------------------


def _refine(g: StructuredGraph, colors: dict[NodeId, int], s_out, s_in, e_out, e_in) -> dict[NodeId, int]:
    while True:
        sig = {
            n: (
                colors[n],
                tuple(sorted(colors[x] for x in s_out[n])),
                tuple(sorted(colors[x] for x in s_in[n])),
                tuple(sorted(colors[x] for x in e_out[n])),
                tuple(sorted(colors[x] for x in e_in[n])),
            )
            for n in g.nodes
        }
        ranks = {s: i for i, s in enumerate(sorted(set(sig.values())))}
        new = {n: ranks[sig[n]] for n in g.nodes}
        if len(ranks) == len(set(colors.values())):
            return new
        colors = new


def canonical_form(g: StructuredGraph, typing: Mapping[NodeId, Any] | None = None) -> tuple[tuple, list[NodeId]]:
    """Canonical encoding of ``g`` up to value- and type-respecting isomorphism.

    Nodes are ordered by type, then degree and value multiset (by colour
    refinement), with remaining ties broken by exhaustive individualisation.
    Returns ``(key, order)``; two graphs are isomorphic iff their keys agree.
    """
    typing = typing or {}
    base = {
        n: (
            str(typing.get(n, "")),
            values_key(g.values[n]),
            (n, n) in g.s_edges,
            (n, n) in g.e_edges,
        )
        for n in g.nodes
    }
    s_out = {n: [] for n in g.nodes}
    s_in = {n: [] for n in g.nodes}
    e_out = {n: [] for n in g.nodes}
    e_in = {n: [] for n in g.nodes}
    for a, b in g.s_edges:
        if a != b:
            s_out[a].append(b)
            s_in[b].append(a)
    for a, b in g.e_edges:
        if a != b:
            e_out[a].append(b)
            e_in[b].append(a)
    ranks = {k: i for i, k in enumerate(sorted(set(base.values())))}
    start = _refine(g, {n: ranks[base[n]] for n in g.nodes}, s_out, s_in, e_out, e_in)
    base_ranked = {n: ranks[base[n]] for n in g.nodes}

    best: list = [None, None]

    def encode(order: list[NodeId]) -> tuple:
        pos = {n: i for i, n in enumerate(order)}
        return (
            tuple(base_ranked[n] for n in order),
            tuple(sorted((pos[a], pos[b]) for a, b in g.s_edges)),
            tuple(sorted((pos[a], pos[b]) for a, b in g.e_edges)),
        )

    def search(colors: dict[NodeId, int]) -> None:
        cells: dict[int, list[NodeId]] = {}
        for n, c in colors.items():
            cells.setdefault(c, []).append(n)
        target = next((c for c in sorted(cells) if len(cells[c]) > 1), None)
        if target is None:
            order = sorted(g.nodes, key=lambda n: colors[n])
            key = encode(order)
            if best[0] is None or key < best[0]:
                best[0], best[1] = key, order
            return
        for v in sorted(cells[target], key=id_key):
            trial = {n: 2 * c + 1 for n, c in colors.items()}
            trial[v] = 2 * target
            search(_refine(g, trial, s_out, s_in, e_out, e_in))

    key_types = tuple(sorted(set(base.values())))
    search(start)
    order = best[1] or []
    return (key_types, best[0] or ((), (), ())), order


def is_isomorphic(
    g1: StructuredGraph,
    g2: StructuredGraph,
    t1: Mapping[NodeId, Any] | None = None,
    t2: Mapping[NodeId, Any] | None = None,
) -> bool:
    if len(g1.nodes) != len(g2.nodes) or len(g1.s_edges) != len(g2.s_edges) or len(g1.e_edges) != len(g2.e_edges):
        return False
    return canonical_form(g1, t1)[0] == canonical_form(g2, t2)[0]


# -- interchange format ---------------------------------------------------------


def _check_str_id(n: NodeId) -> str:
    if not isinstance(n, str):
        raise GraphError(f"only string node ids can be serialized, got {n!r}")
    return n


def graph_to_json(g: StructuredGraph, typing: Mapping[NodeId, str] | None = None) -> dict:
    nodes = []
    for n in g.sorted_nodes():
        entry: dict[str, Any] = {"id": _check_str_id(n)}
        if n in g.labels:
            entry["label"] = g.labels[n]
        vals = g.values[n]
        if isinstance(vals, Universe):
            raise GraphError("intensional value sets cannot be serialized")
        entry["values"] = [v.to_json() for v in sorted(vals, key=Value.sort_key)]
        nodes.append(entry)
    doc: dict[str, Any] = {
        "nodes": nodes,
        "s_edges": [list(e) for e in sorted(g.s_edges, key=id_key)],
        "e_edges": [list(e) for e in sorted(g.e_edges, key=id_key)],
    }
    if typing is not None:
        doc["typing"] = {n: typing[n] for n in g.sorted_nodes() if n in typing}
    return doc


def graph_from_json(doc: Mapping) -> tuple[StructuredGraph, dict[str, str] | None]:
    """Parse the interchange format; returns the graph and its typing map, if any."""
    try:
        node_docs = doc["nodes"]
        ids = [nd["id"] for nd in node_docs]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        values = {nd["id"]: frozenset(Value.from_json(v) for v in nd.get("values", [])) for nd in node_docs}
        labels = {nd["id"]: nd["label"] for nd in node_docs if "label" in nd}
        s_edges = [tuple(e) for e in doc.get("s_edges", [])]
        e_edges = [tuple(e) for e in doc.get("e_edges", [])]
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph document: {exc}") from exc
    for e in s_edges + e_edges:
        if len(e) != 2:
            raise GraphError(f"malformed edge {list(e)}")
    g = StructuredGraph(ids, s_edges, e_edges, values, labels)
    typing = doc.get("typing")
    return g, (dict(typing) if typing is not None else None)


def dumps(doc: Mapping) -> str:
    """Byte-stable JSON rendering used for every file this package writes."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
