"""The meta-model MM and well-formedness of nuggets and pre-models.

MM node ids are the kind names themselves.  The S relation of MM (child ->
parent) is reconstructed from the prose description of the meta-model; the
edges marked "reconstruction" below are additions that the description
motivates but does not state outright.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .graph import (
    AMINO_ACIDS,
    GraphError,
    Homomorphism,
    NodeId,
    StructuredGraph,
    Universe,
    Value,
    check_homomorphism,
    find_s_cycle,
    graph_from_json,
    graph_to_json,
    id_key,
    is_transitive,
    transitive_closure,
    validate_graph,
)
from .report import Code, Report

AGENT, REGION, RESIDUE, FLAG = "agent", "region", "residue", "flag"
AA, LOC, INT, IS_BND = "aa", "loc", "int", "is_bnd"
BND_RC, BRK_RC, MOD_RC = "bnd_rc", "brk_rc", "mod_rc"
BND, MOD, SRC, TGT = "BND", "MOD", "src", "tgt"

KINDS = (
    AGENT, REGION, RESIDUE, FLAG, AA, LOC, INT, IS_BND,
    BND_RC, BRK_RC, MOD_RC, BND, MOD, SRC, TGT,
)
ATTRIBUTE_KINDS = frozenset({AA, LOC, INT, IS_BND, BND_RC, BRK_RC, MOD_RC})
ACTION_KINDS = frozenset({BND, MOD})
VALUED_KINDS = ATTRIBUTE_KINDS | {FLAG}

_BOOLS = frozenset({Value.boolean(0), Value.boolean(1)})

MM_VALUES = {
    FLAG: _BOOLS,
    IS_BND: _BOOLS,
    LOC: Universe("n"),
    AA: frozenset(Value.aa(c) for c in AMINO_ACIDS),
    INT: Universe("int"),
    BND_RC: Universe("rate"),
    BRK_RC: Universe("rate"),
    MOD_RC: Universe("rate"),
}

MM_S_EDGES = (
    (REGION, AGENT),
    (RESIDUE, AGENT),
    (RESIDUE, REGION),  # reconstruction
    (FLAG, AGENT),      # reconstruction
    (FLAG, REGION),     # reconstruction
    (FLAG, RESIDUE),    # reconstruction
    (AA, RESIDUE),
    (LOC, RESIDUE),
    (INT, REGION),
    (INT, AGENT),       # reconstruction: footprint of a direct agent participant
    (IS_BND, BND),
    (IS_BND, MOD),
    (BND_RC, BND),
    (BRK_RC, BND),
    (MOD_RC, MOD),
    (SRC, BND),
    (SRC, MOD),
    (TGT, MOD),
)

# participants -> source; target -> flag
MM_E_EDGES = ((AGENT, SRC), (REGION, SRC), (TGT, FLAG))

_MM = StructuredGraph(KINDS, transitive_closure(MM_S_EDGES), MM_E_EDGES, MM_VALUES, {k: k for k in KINDS})


def metamodel() -> StructuredGraph:
    """The constant meta-model graph (transitively closed S relation)."""
    return _MM


@dataclass(frozen=True)
class TypedGraph:
    """A structured graph together with its typing into the meta-model."""

    graph: StructuredGraph
    typing: Homomorphism

    @classmethod
    def from_kinds(cls, graph: StructuredGraph, kinds: Mapping[NodeId, str]) -> TypedGraph:
        return cls(graph, Homomorphism(graph, _MM, {n: kinds[n] for n in graph.nodes if n in kinds}))

    def kind(self, n: NodeId) -> str | None:
        return self.typing.mapping.get(n)

    @property
    def kinds(self) -> dict:
        return dict(self.typing.mapping)

    def nodes_of(self, *kinds: str) -> list[NodeId]:
        return [n for n in self.graph.sorted_nodes() if self.kind(n) in kinds]

    def children_of(self, n: NodeId, kind: str, direct: bool = True) -> list[NodeId]:
        g = self.graph
        cs = g.direct_s_children(n) if direct else g.s_children(n)
        return sorted((c for c in cs if self.kind(c) == kind), key=id_key)

    def attribute(self, n: NodeId, kind: str) -> NodeId | None:
        cs = self.children_of(n, kind)
        return cs[0] if cs else None

    def owner(self, n: NodeId, kind: str = AGENT) -> NodeId | None:
        """The unique S-ancestor of ``n`` of the given kind, if any."""
        found = sorted((p for p in self.graph.s_parents(n) if self.kind(p) == kind), key=id_key)
        if len(found) == 1:
            return found[0]
        if not found:
            # fall back to reachability for graphs that are not closed
            seen, todo = set(), list(self.graph.s_parents(n))
            while todo:
                x = todo.pop()
                if x in seen:
                    continue
                seen.add(x)
                todo.extend(self.graph.s_parents(x))
            found = sorted((p for p in seen if self.kind(p) == kind), key=id_key)
            if len(found) == 1:
                return found[0]
        return None

    def sources(self, action: NodeId) -> list[NodeId]:
        return self.children_of(action, SRC)

    def targets(self, action: NodeId) -> list[NodeId]:
        return self.children_of(action, TGT)

    def participants(self, src: NodeId) -> list[NodeId]:
        return sorted(self.graph.e_in(src), key=id_key)


class GraphBuilder:
    """Incremental construction of MM-typed graphs.

    ``parent`` gives the direct S-parent; :meth:`build` closes S transitively.
    """

    def __init__(self) -> None:
        self._kinds: dict[str, str] = {}
        self._labels: dict[str, str] = {}
        self._values: dict[str, set] = {}
        self._s: set = set()
        self._e: set = set()

    def node(self, nid: str, kind: str, label: str | None = None, values: Iterable[Value] = (), parent: str | None = None) -> str:
        if nid in self._kinds:
            raise GraphError(f"duplicate node id {nid}")
        if kind not in KINDS:
            raise GraphError(f"unknown kind {kind}")
        self._kinds[nid] = kind
        if label is not None:
            self._labels[nid] = label
        self._values[nid] = set(values)
        if parent is not None:
            self._s.add((nid, parent))
        return nid

    def belongs(self, child: str, parent: str) -> None:
        self._s.add((child, parent))

    def link(self, a: str, b: str) -> None:
        self._e.add((a, b))

    # shorthands for common MM patterns
    def agent(self, nid: str, label: str | None = None) -> str:
        return self.node(nid, AGENT, label or nid)

    def region(self, nid: str, agent: str, label: str | None = None) -> str:
        return self.node(nid, REGION, label or nid, parent=agent)

    def residue(self, nid: str, parent: str, loc: int | None = None, aa: Iterable[str] | str | None = None) -> str:
        self.node(nid, RESIDUE, parent=parent)
        if loc is not None:
            self.node(f"{nid}.loc", LOC, values=[Value.num(loc)], parent=nid)
        if aa is not None:
            self.node(f"{nid}.aa", AA, values=[Value.aa(c) for c in aa], parent=nid)
        return nid

    def flag(self, nid: str, parent: str, label: str, value: int | Iterable[int] = 1) -> str:
        vals = [value] if isinstance(value, int) else list(value)
        return self.node(nid, FLAG, label, values=[Value.boolean(v) for v in vals], parent=parent)

    def interval(self, nid: str, parent: str, low: int, high: int) -> str:
        return self.node(nid, INT, values=[Value.interval(low, high)], parent=parent)

    def bnd(self, nid: str, left: Iterable[str] | str, right: Iterable[str] | str, is_bnd: int | None = None,
            src_ids: tuple[str, str] | None = None, label: str | None = None) -> str:
        """A binding action with two sources linked from the given participants."""
        self.node(nid, BND, label)
        s1, s2 = src_ids or (f"{nid}.s1", f"{nid}.s2")
        for sid, parts in ((s1, left), (s2, right)):
            self.node(sid, SRC, parent=nid)
            for p in [parts] if isinstance(parts, str) else parts:
                self.link(p, sid)
        if is_bnd is not None:
            self.node(f"{nid}.is_bnd", IS_BND, values=[Value.boolean(is_bnd)], parent=nid)
        return nid

    def mod(self, nid: str, target_flag: str, source: Iterable[str] | str | None = None, label: str | None = None) -> str:
        self.node(nid, MOD, label)
        if source is not None:
            self.node(f"{nid}.s", SRC, parent=nid)
            for p in [source] if isinstance(source, str) else source:
                self.link(p, f"{nid}.s")
        self.node(f"{nid}.t", TGT, parent=nid)
        self.link(f"{nid}.t", target_flag)
        return nid

    def rate(self, nid: str, action: str, kind: str, value) -> str:
        return self.node(nid, kind, values=[Value.rate(value)], parent=action)

    def build(self, close: bool = True) -> TypedGraph:
        s = transitive_closure(self._s) if close else frozenset(self._s)
        g = StructuredGraph(self._kinds, s, self._e, self._values, self._labels)
        return TypedGraph.from_kinds(g, self._kinds)


# -- checks ----------------------------------------------------------------------------


def check_typed(tg: TypedGraph) -> Report:
    """Invariants common to every MM-typed graph."""
    g = tg.graph
    rep = validate_graph(g)
    if not rep.ok:
        return rep
    if tg.typing.cod != _MM:
        rep.add(Code.BAD_CODOMAIN, "typing does not target the meta-model")
        return rep
    cycle = find_s_cycle(g)
    if cycle is not None:
        rep.add(Code.S_CYCLE, f"S-edges contain a cycle through {cycle}", *cycle)
    rep.extend(check_homomorphism(tg.typing))
    if not all(n in tg.typing.mapping for n in g.nodes):
        return rep
    for n in g.sorted_nodes():
        seen: dict[str, NodeId] = {}
        for c in sorted(g.direct_s_children(n) if cycle is None else g.s_children(n), key=id_key):
            k = tg.kind(c)
            if k in ATTRIBUTE_KINDS:
                if k in seen:
                    rep.add(Code.DUPLICATE_ATTRIBUTE, f"node {n} has more than one {k} attribute", n, seen[k], c)
                else:
                    seen[k] = c
    return rep


@dataclass
class NuggetCheckReport(Report):
    principal_action: NodeId | None = field(default=None)


def _connected(g: StructuredGraph) -> bool:
    if not g.nodes:
        return True
    adj: dict = {n: set() for n in g.nodes}
    for a, b in g.s_edges | g.e_edges:
        adj[a].add(b)
        adj[b].add(a)
    start = next(iter(g.nodes))
    seen, todo = {start}, [start]
    while todo:
        for y in adj[todo.pop()]:
            if y not in seen:
                seen.add(y)
                todo.append(y)
    return len(seen) == len(g.nodes)


def check_nugget(tg: TypedGraph) -> NuggetCheckReport:
    base = check_typed(tg)
    rep = NuggetCheckReport(list(base.issues))
    g = tg.graph
    if any(i.code in (Code.DANGLING_EDGE, Code.VALUES_NOT_TOTAL, Code.BAD_CODOMAIN, Code.NOT_TOTAL) for i in base):
        return rep
    # (a)
    if not _connected(g):
        rep.add(Code.NOT_CONNECTED, "nugget is not connected")
    # (b)
    for n in tg.nodes_of(*VALUED_KINDS):
        if len(g.values[n]) != 1:
            rep.add(Code.NOT_SINGLETON, f"{tg.kind(n)} node {n} must carry exactly one value", n)
    # (c)
    if not is_transitive(g):
        rep.add(Code.NOT_TRANSITIVE, "S-edges are not transitively closed")
    # (d), (e)
    actions = tg.nodes_of(BND, MOD)
    principals = [a for a in actions if tg.attribute(a, IS_BND) is None]
    if len(principals) != 1:
        rep.add(Code.PRINCIPAL_ACTION, f"expected exactly one principal action, found {len(principals)}", *principals)
    for a in actions:
        if a in principals:
            continue
        if tg.kind(a) != BND:
            rep.add(Code.CONTEXT_ACTION, f"contextual action {a} must be a BND", a)
    # (f)
    for a in tg.nodes_of(BND):
        srcs = tg.sources(a)
        if len(srcs) != 2:
            rep.add(Code.BND_SOURCES, f"BND {a} has {len(srcs)} sources, expected 2", a, *srcs)
        for s in srcs:
            if not g.e_in(s):
                rep.add(Code.BND_SOURCES, f"source {s} of BND {a} has no participant", a, s)
        if tg.targets(a):
            rep.add(Code.BND_SOURCES, f"BND {a} cannot have a target", a)
    # (g)
    for a in tg.nodes_of(MOD):
        srcs, tgts = tg.sources(a), tg.targets(a)
        if len(srcs) > 1 or len(tgts) > 1 or not (srcs or tgts):
            rep.add(Code.MOD_ARITY, f"MOD {a} has {len(srcs)} sources and {len(tgts)} targets", a)
    # (h)
    for s in tg.nodes_of(SRC):
        for p in sorted(g.e_in(s), key=id_key):
            if tg.kind(p) not in (AGENT, REGION):
                rep.add(Code.LINK_KIND, f"source {s} has a non agent/region participant {p}", s, p)
    for t in tg.nodes_of(TGT):
        outs = sorted(g.e_out(t), key=id_key)
        if len(outs) != 1 or tg.kind(outs[0]) != FLAG:
            rep.add(Code.LINK_KIND, f"target {t} must link to exactly one flag", t, *outs)
    for n in tg.nodes_of(SRC, TGT):
        owners = [p for p in g.direct_s_parents(n) if tg.kind(p) in ACTION_KINDS]
        if len(owners) != 1:
            rep.add(Code.ORPHAN_SCAFFOLD, f"{tg.kind(n)} {n} must belong to exactly one action", n)
    if rep.ok:
        rep.principal_action = principals[0]
    return rep


def check_premodel(tg: TypedGraph) -> Report:
    rep = check_typed(tg)
    if not rep.ok and any(i.code in (Code.DANGLING_EDGE, Code.NOT_TOTAL, Code.BAD_CODOMAIN) for i in rep):
        return rep
    for n in tg.nodes_of(*VALUED_KINDS):
        if not tg.graph.values[n]:
            rep.add(Code.EMPTY_VALUES, f"{tg.kind(n)} node {n} has an empty value set", n)
    return rep


def typed_to_json(tg: TypedGraph) -> dict:
    return graph_to_json(tg.graph, tg.kinds)


def typed_from_json(doc: Mapping) -> TypedGraph:
    g, kinds = graph_from_json(doc)
    if kinds is None:
        raise GraphError("document has no typing")
    bad = sorted(set(kinds.values()) - set(KINDS))
    if bad:
        raise GraphError(f"unknown node kinds {bad}")
    unknown = set(kinds) - g.nodes
    if unknown:
        raise GraphError(f"typing names unknown nodes {sorted(unknown)}")
    return TypedGraph.from_kinds(g, kinds)
