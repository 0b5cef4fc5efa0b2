"""Limits and colimits of structured graphs, and the rewriting step built on them.

Pullbacks, pushouts, final pullback complements over monos, multi-sum
(overlap) enumeration and typing factorisation.  Every function is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from .graph import (
    Cospan,
    GraphError,
    Homomorphism,
    NodeId,
    Span,
    StructuredGraph,
    compose,
    id_key,
    identity,
    is_mono,
    values_join,
    values_meet,
    values_subset,
)


class PullbackResult(NamedTuple):
    obj: StructuredGraph
    left: Homomorphism
    right: Homomorphism


class PushoutResult(NamedTuple):
    obj: StructuredGraph
    left: Homomorphism
    right: Homomorphism


class UnionFind:
    def __init__(self, items=()):
        self.parent = {x: x for x in items}

    def add(self, x) -> None:
        self.parent.setdefault(x, x)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb

    def classes(self) -> list[list]:
        groups: dict = {}
        for x in self.parent:
            groups.setdefault(self.find(x), []).append(x)
        return list(groups.values())


def pullback(f: Homomorphism, g: Homomorphism) -> PullbackResult:
    """Pullback of ``f: A -> C`` and ``g: B -> C``; nodes are pairs ``(a, b)``."""
    if f.cod != g.cod:
        raise GraphError("pullback needs a common codomain")
    A, B = f.dom, g.dom
    by_image: dict[NodeId, list[NodeId]] = {}
    for b in B.nodes:
        by_image.setdefault(g.mapping[b], []).append(b)
    nodes = [(a, b) for a in A.nodes for b in by_image.get(f.mapping[a], ())]
    node_set = set(nodes)

    def edges(ea, eb):
        out = set()
        for a1, a2 in ea:
            for b1, b2 in eb:
                if (a1, b1) in node_set and (a2, b2) in node_set:
                    out.add(((a1, b1), (a2, b2)))
        return out

    values = {(a, b): values_meet(A.values[a], B.values[b]) for a, b in nodes}
    labels = {(a, b): A.labels[a] for a, b in nodes if a in A.labels}
    P = StructuredGraph(nodes, edges(A.s_edges, B.s_edges), edges(A.e_edges, B.e_edges), values, labels)
    return PullbackResult(
        P,
        Homomorphism(P, A, {p: p[0] for p in nodes}),
        Homomorphism(P, B, {p: p[1] for p in nodes}),
    )


def pullback_mediator(pb: PullbackResult, u: Homomorphism, v: Homomorphism) -> Homomorphism:
    """The unique map ``X -> P`` for a commuting cone ``u: X -> A``, ``v: X -> B``."""
    m = {}
    index = {(pb.left.mapping[p], pb.right.mapping[p]): p for p in pb.obj.nodes}
    for x in u.dom.nodes:
        key = (u.mapping[x], v.mapping[x])
        if key not in index:
            raise GraphError("cone does not commute")
        m[x] = index[key]
    return Homomorphism(u.dom, pb.obj, m)


def _fresh(base: NodeId, used: set) -> NodeId:
    if base not in used:
        return base
    k = 2
    while True:
        cand = f"{base}_{k}" if isinstance(base, str) else (base, k)
        if cand not in used:
            return cand
        k += 1


def pushout(f: Homomorphism, g: Homomorphism) -> PushoutResult:
    """Pushout of ``f: K -> A`` and ``g: K -> B``.

    Classes of ``A + B`` are named after their ``B`` members where possible
    (so a mono ``g`` keeps the ids of ``B``); ``A``-only classes keep their own
    id unless it is taken, in which case a ``_2``, ``_3``... suffix is added.
    """
    if f.dom != g.dom:
        raise GraphError("pushout needs a common domain")
    A, B = f.cod, g.cod
    uf = UnionFind([("A", a) for a in A.nodes] + [("B", b) for b in B.nodes])
    for k in f.dom.nodes:
        uf.union(("A", f.mapping[k]), ("B", g.mapping[k]))
    classes = uf.classes()
    b_classes, a_classes = [], []
    for cls in classes:
        bs = sorted((x[1] for x in cls if x[0] == "B"), key=id_key)
        if bs:
            b_classes.append((bs[0], cls))
        else:
            a_classes.append((min((x[1] for x in cls), key=id_key), cls))
    name_of: dict = {}
    used: set = set()
    for name, cls in sorted(b_classes, key=lambda t: id_key(t[0])):
        used.add(name)
        for x in cls:
            name_of[x] = name
    for base, cls in sorted(a_classes, key=lambda t: id_key(t[0])):
        name = _fresh(base, used)
        used.add(name)
        for x in cls:
            name_of[x] = name
    values: dict = {}
    labels: dict = {}
    for side, G in (("B", B), ("A", A)):
        for n in G.sorted_nodes():
            s = name_of[(side, n)]
            values[s] = values_join(values[s], G.values[n]) if s in values else G.values[n]
            if n in G.labels and s not in labels:
                labels[s] = G.labels[n]
    s_edges = {(name_of[("A", a)], name_of[("A", b)]) for a, b in A.s_edges}
    s_edges |= {(name_of[("B", a)], name_of[("B", b)]) for a, b in B.s_edges}
    e_edges = {(name_of[("A", a)], name_of[("A", b)]) for a, b in A.e_edges}
    e_edges |= {(name_of[("B", a)], name_of[("B", b)]) for a, b in B.e_edges}
    S = StructuredGraph(used, s_edges, e_edges, values, labels)
    return PushoutResult(
        S,
        Homomorphism(A, S, {a: name_of[("A", a)] for a in A.nodes}),
        Homomorphism(B, S, {b: name_of[("B", b)] for b in B.nodes}),
    )


def pushout_mediator(po: PushoutResult, u: Homomorphism, v: Homomorphism) -> Homomorphism:
    """The unique map ``S -> X`` for a commuting cocone ``u: A -> X``, ``v: B -> X``."""
    m: dict = {}
    for leg, other in ((po.left, u), (po.right, v)):
        for x, s in leg.mapping.items():
            t = other.mapping[x]
            if m.setdefault(s, t) != t:
                raise GraphError("cocone does not commute")
    return Homomorphism(po.obj, u.cod, m)


# -- final pullback complement ------------------------------------------------------


def pullback_complement(preserved: Homomorphism, refine: Homomorphism) -> tuple[StructuredGraph, Homomorphism, Homomorphism]:
    """Final pullback complement of ``preserved: N- -> N`` and ``refine: N -> N+``.

    Deletes from ``N+`` whatever ``N`` has that ``N-`` does not: nodes (with
    every incident edge, sesqui-pushout style), edges and values.  Returns
    ``(N±, j1: N- -> N±, j2: N± -> N+)``; node ids are those of ``N+``.
    """
    if not (is_mono(preserved) and is_mono(refine)):
        raise GraphError("pullback complement needs monos")
    if preserved.cod != refine.dom:
        raise GraphError("pullback complement needs composable arrows")
    l, m = preserved.mapping, refine.mapping
    Nm, N, Np = preserved.dom, preserved.cod, refine.cod
    kept_n = set(l.values())
    removed = {m[x] for x in N.nodes if x not in kept_n}
    survivors = Np.nodes - removed
    back = {m[x]: x for x in kept_n}

    def keep_edge(x, y, n_edges, nm_edges) -> bool:
        if x not in survivors or y not in survivors:
            return False
        if x in back and y in back and (back[x], back[y]) in n_edges:
            return any((l[a], l[b]) == (back[x], back[y]) for a, b in nm_edges)
        return True

    s_edges = {(x, y) for x, y in Np.s_edges if keep_edge(x, y, N.s_edges, Nm.s_edges)}
    e_edges = {(x, y) for x, y in Np.e_edges if keep_edge(x, y, N.e_edges, Nm.e_edges)}
    inv_l = {v: k for k, v in l.items()}
    values = {}
    for x in survivors:
        vals = Np.values[x]
        if x in back:
            n = back[x]
            dropped = N.values[n] - Nm.values[inv_l[n]]
            vals = vals - dropped
        values[x] = vals
    labels = {x: lab for x, lab in Np.labels.items() if x in survivors}
    Npm = StructuredGraph(survivors, s_edges, e_edges, values, labels)
    j1 = Homomorphism(Nm, Npm, {y: m[l[y]] for y in Nm.nodes})
    j2 = Homomorphism(Npm, Np, {x: x for x in survivors})
    return Npm, j1, j2


@dataclass(frozen=True)
class RewriteSpec:
    """Deprecation mono ``N- -> N`` and glueing cospan ``N -> N+ <- N'`` (all monos)."""

    preserved: Homomorphism
    glueing: Cospan

    def __post_init__(self) -> None:
        h_plus, h_plus_new = self.glueing
        if not (is_mono(self.preserved) and is_mono(h_plus) and is_mono(h_plus_new)):
            raise GraphError("rewrite specification needs monos")
        if self.preserved.cod != h_plus.dom:
            raise GraphError("deprecation must target the refined graph")


@dataclass
class Trace:
    """What a rewrite changed, expressed relative to the original graph ``N``."""

    added_nodes: list = field(default_factory=list)
    added_s_edges: list = field(default_factory=list)
    added_e_edges: list = field(default_factory=list)
    added_values: dict = field(default_factory=dict)
    deleted_nodes: list = field(default_factory=list)
    deleted_s_edges: list = field(default_factory=list)
    deleted_e_edges: list = field(default_factory=list)
    deleted_values: dict = field(default_factory=dict)
    #: node of N -> node of N±, for every preserved node
    preserved: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not (
            self.added_nodes or self.added_s_edges or self.added_e_edges or self.added_values
            or self.deleted_nodes or self.deleted_s_edges or self.deleted_e_edges or self.deleted_values
        )

    def summary(self) -> str:
        return (
            f"+{len(self.added_nodes)} nodes, +{len(self.added_s_edges)} S-edges, "
            f"+{len(self.added_e_edges)} E-edges, +{sum(len(v) for v in self.added_values.values())} values; "
            f"-{len(self.deleted_nodes)} nodes, -{len(self.deleted_s_edges)} S-edges, "
            f"-{len(self.deleted_e_edges)} E-edges, -{sum(len(v) for v in self.deleted_values.values())} values"
        )


class RewriteResult(NamedTuple):
    graph: StructuredGraph
    preserved: Homomorphism  # N- -> N±
    into_refined: Homomorphism  # N± -> N+
    trace: Trace


def apply_rewrite(spec: RewriteSpec) -> RewriteResult:
    l = spec.preserved
    h_plus = spec.glueing.left
    Npm, j1, j2 = pullback_complement(l, h_plus)
    N, Nm = l.cod, l.dom
    inv_l = {v: k for k, v in l.mapping.items()}
    preserved = {n: j1.mapping[inv_l[n]] for n in N.nodes if n in inv_l}
    from_n = set(preserved.values())

    def image_edges(edges):
        return {(preserved[a], preserved[b]) for a, b in edges if a in preserved and b in preserved}

    tr = Trace(preserved=preserved)
    tr.added_nodes = sorted(Npm.nodes - from_n, key=id_key)
    tr.added_s_edges = sorted(Npm.s_edges - image_edges(N.s_edges), key=id_key)
    tr.added_e_edges = sorted(Npm.e_edges - image_edges(N.e_edges), key=id_key)
    tr.deleted_nodes = sorted(N.nodes - set(inv_l), key=id_key)
    kept_s = {(l.mapping[a], l.mapping[b]) for a, b in Nm.s_edges}
    kept_e = {(l.mapping[a], l.mapping[b]) for a, b in Nm.e_edges}
    tr.deleted_s_edges = sorted(N.s_edges - kept_s, key=id_key)
    tr.deleted_e_edges = sorted(N.e_edges - kept_e, key=id_key)
    for n, x in preserved.items():
        gained = Npm.values[x] - N.values[n]
        lost = N.values[n] - Npm.values[x]
        if gained:
            tr.added_values[x] = frozenset(gained)
        if lost:
            tr.deleted_values[n] = frozenset(lost)
    return RewriteResult(Npm, j1, j2, tr)


# -- multi-sums ---------------------------------------------------------------------


@dataclass(frozen=True)
class Overlap:
    """A span of monos ``A <- O -> B`` together with its glued cospan."""

    pairs: tuple[tuple[NodeId, NodeId], ...]
    span: Span
    cospan: Cospan

    @property
    def size(self) -> int:
        return len(self.pairs)


def overlap_from_pairs(A: StructuredGraph, B: StructuredGraph, pairs) -> Overlap:
    """Build the closed span for an injective partial matching and glue it.

    The apex carries exactly the edges and values both sides agree on, which
    makes the span the pullback of its own pushout.
    """
    pairs = tuple(sorted(pairs, key=id_key))
    nodes = set(pairs)
    O = StructuredGraph(
        nodes,
        {(p, q) for p in nodes for q in nodes if (p[0], q[0]) in A.s_edges and (p[1], q[1]) in B.s_edges},
        {(p, q) for p in nodes for q in nodes if (p[0], q[0]) in A.e_edges and (p[1], q[1]) in B.e_edges},
        {p: values_meet(A.values[p[0]], B.values[p[1]]) for p in nodes},
    )
    left = Homomorphism(O, A, {p: p[0] for p in nodes})
    right = Homomorphism(O, B, {p: p[1] for p in nodes})
    po = pushout(left, right)
    return Overlap(pairs, Span(left, right), Cospan(po.left, po.right))


def _typing_map(t) -> Mapping:
    return t.mapping if isinstance(t, Homomorphism) else t


def enumerate_overlaps(A: StructuredGraph, B: StructuredGraph, tA, tB) -> list[Overlap]:
    """All overlaps of ``A`` and ``B`` compatible with their typings over a common ``T``.

    One overlap per injective partial matching of type-compatible nodes,
    found by backtracking; the empty overlap (disjoint glueing) comes first.
    """
    if isinstance(tA, Homomorphism) and isinstance(tB, Homomorphism) and tA.cod != tB.cod:
        raise GraphError("typings have different codomains")
    ta, tb = _typing_map(tA), _typing_map(tB)
    a_nodes = A.sorted_nodes()
    b_nodes = B.sorted_nodes()
    cands = {a: [b for b in b_nodes if tb[b] == ta[a]] for a in a_nodes}
    results: list[Overlap] = []
    chosen: list = []
    used: set = set()

    def go(i: int) -> None:
        if i == len(a_nodes):
            results.append(overlap_from_pairs(A, B, chosen))
            return
        a = a_nodes[i]
        go(i + 1)
        for b in cands[a]:
            if b in used:
                continue
            used.add(b)
            chosen.append((a, b))
            go(i + 1)
            chosen.pop()
            used.discard(b)

    go(0)
    results.sort(key=lambda o: (o.size, tuple(id_key(p) for p in o.pairs)))
    return results


# -- factorisation ------------------------------------------------------------------


def find_homomorphisms(
    A: StructuredGraph,
    B: StructuredGraph,
    allowed: Mapping[NodeId, list] | None = None,
    mono: bool = False,
) -> list[dict]:
    """All homomorphisms ``A -> B`` (as dicts), by backtracking with edge checks."""
    order = sorted(
        A.nodes,
        key=lambda n: (-len(A.s_parents(n)) - len(A.s_children(n)) - len(A.e_in(n)) - len(A.e_out(n)), id_key(n)),
    )
    pos = {n: i for i, n in enumerate(order)}
    edges_s = [(a, b) for a, b in A.s_edges]
    edges_e = [(a, b) for a, b in A.e_edges]
    checks: dict = {n: [] for n in order}
    for kind, edges, target in (("s", edges_s, B.s_edges), ("e", edges_e, B.e_edges)):
        for a, b in edges:
            later = a if pos[a] >= pos[b] else b
            checks[later].append((a, b, target))
    out: list[dict] = []
    m: dict = {}
    used: set = set()

    def go(i: int) -> None:
        if i == len(order):
            out.append(dict(m))
            return
        n = order[i]
        pool = allowed[n] if allowed is not None else B.sorted_nodes()
        for c in pool:
            if mono and c in used:
                continue
            if not values_subset(A.values[n], B.values[c]):
                continue
            m[n] = c
            if all((m[a], m[b]) in target for a, b, target in checks[n]):
                used.add(c)
                go(i + 1)
                used.discard(c)
            del m[n]

    go(0)
    return out


def factorize(n: Homomorphism, m: Homomorphism) -> list[Homomorphism]:
    """Every ``h: N -> M`` with ``compose(h, m) == n``."""
    if n.cod != m.cod:
        return []
    N, M = n.dom, m.dom
    by_type: dict = {}
    for y in M.sorted_nodes():
        by_type.setdefault(m.mapping[y], []).append(y)
    allowed = {x: by_type.get(n.mapping[x], []) for x in N.nodes}
    return [Homomorphism(N, M, h) for h in find_homomorphisms(N, M, allowed)]


__all__ = [
    "Overlap",
    "PullbackResult",
    "PushoutResult",
    "RewriteResult",
    "RewriteSpec",
    "Trace",
    "UnionFind",
    "apply_rewrite",
    "compose",
    "enumerate_overlaps",
    "factorize",
    "find_homomorphisms",
    "identity",
    "overlap_from_pairs",
    "pullback",
    "pullback_complement",
    "pullback_mediator",
    "pushout",
    "pushout_mediator",
]
