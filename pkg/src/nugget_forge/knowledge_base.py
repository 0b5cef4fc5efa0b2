"""Models (nugget collection + pre-model) and their evolution.

A :class:`Model` is a value: every operation returns a new model and leaves
its argument untouched.  Cross-graph identity is always explicit, given as
seed pairs ``(new node, existing node)`` and extended by
:func:`canonical_unification`; labels are never consulted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from .category import RewriteSpec, Trace, apply_rewrite, overlap_from_pairs
from .graph import (
    Cospan,
    GraphError,
    Homomorphism,
    NodeId,
    StructuredGraph,
    Value,
    check_homomorphism,
    compose,
    id_key,
    identity,
    is_transitive,
    transitive_closure,
    values_meet,
)
from .metamodel import (
    ACTION_KINDS,
    AGENT,
    ATTRIBUTE_KINDS,
    BND,
    FLAG,
    IS_BND,
    LOC,
    MOD,
    REGION,
    RESIDUE,
    SRC,
    TGT,
    TypedGraph,
    check_nugget,
    check_premodel,
    metamodel,
    typed_from_json,
    typed_to_json,
)
from .report import Code, Report

FORMAT_VERSION = 1


class KnowledgeBaseError(Exception):
    pass


class UnificationError(KnowledgeBaseError):
    """Seed pairs that cannot be extended to a glueing."""


class AmbiguousUnification(UnificationError):
    def __init__(self, extensions: list[list[tuple[NodeId, NodeId]]]):
        self.extensions = extensions
        lines = [f"  {i + 1}: " + ", ".join(f"{a}={b}" for a, b in ext) for i, ext in enumerate(extensions)]
        super().__init__(f"{len(extensions)} maximal unifications extend the seeds:\n" + "\n".join(lines))


class AggregationError(KnowledgeBaseError):
    pass


class StaleNugget(KnowledgeBaseError):
    pass


class ValidationError(KnowledgeBaseError):
    def __init__(self, message: str, report: Report):
        self.report = report
        super().__init__(f"{message}\n{report}")


class FormatError(KnowledgeBaseError):
    pass


@dataclass(frozen=True)
class NuggetEntry:
    graph: TypedGraph
    to_premodel: Homomorphism


@dataclass(frozen=True)
class Model:
    premodel: TypedGraph
    nuggets: Mapping[int, NuggetEntry] = field(default_factory=lambda: MappingProxyType({}))
    next_id: int = 1

    def nugget_ids(self) -> list[int]:
        return sorted(self.nuggets)


def empty_model() -> Model:
    return Model(TypedGraph.from_kinds(StructuredGraph(), {}))


@dataclass(frozen=True)
class GlueingChoice:
    """Seed identifications ``(new-graph node, existing-graph node)``."""

    seeds: frozenset = frozenset()

    @classmethod
    def of(cls, pairs: Iterable[tuple[NodeId, NodeId]] = ()) -> GlueingChoice:
        return cls(frozenset((a, b) for a, b in pairs))


# -- unification ---------------------------------------------------------------------


class _Conflict(Exception):
    pass


def _owner_agent(tg: TypedGraph, n: NodeId) -> NodeId | None:
    return n if tg.kind(n) == AGENT else tg.owner(n, AGENT)


def _loc_values(tg: TypedGraph, residue: NodeId):
    loc = tg.attribute(residue, LOC)
    return tg.graph.values[loc] if loc is not None else frozenset()


def _max_matchings(xs, ys, compat) -> list[tuple]:
    """All maximum-size matchings of the bipartite compatibility relation."""
    best: list[tuple] = []
    size = 0
    for k in range(min(len(xs), len(ys)), 0, -1):
        for sub in itertools.combinations(xs, k):
            for perm in itertools.permutations(ys, k):
                pairs = tuple(zip(sub, perm))
                if all(compat(x, y) for x, y in pairs):
                    best.append(pairs)
        if best:
            size = k
            break
    return best if size else []


class _Unifier:
    def __init__(self, a: TypedGraph, b: TypedGraph):
        self.a, self.b = a, b

    def _add(self, match, rev, x, y) -> bool:
        if match.get(x) == y:
            return False
        if x in match or y in rev:
            raise _Conflict(f"{x} cannot be identified with {y}: one of them is already identified")
        if self.a.kind(x) != self.b.kind(y):
            raise _Conflict(f"{x} and {y} have different kinds")
        match[x] = y
        rev[y] = x
        return True

    def _groups(self, x, y, match, rev):
        """Candidate identifications suggested by a matched pair ``(x, y)``."""
        a, b = self.a, self.b
        ga, gb = a.graph, b.graph
        free_a = lambda n: n not in match  # noqa: E731
        free_b = lambda n: n not in rev  # noqa: E731
        kind = a.kind(x)
        for k in sorted(ATTRIBUTE_KINDS):
            xs = [c for c in a.children_of(x, k) if free_a(c)]
            ys = [c for c in b.children_of(y, k) if free_b(c)]
            if k == LOC:
                yield xs, ys, lambda p, q: bool(values_meet(ga.values[p], gb.values[q]))
            else:
                yield xs, ys, lambda p, q: True
        xs = [c for c in a.children_of(x, FLAG) if free_a(c)]
        ys = [c for c in b.children_of(y, FLAG) if free_b(c)]
        yield xs, ys, lambda p, q: bool(values_meet(ga.values[p], gb.values[q]))
        xs = [c for c in a.children_of(x, RESIDUE) if free_a(c)]
        ys = [c for c in b.children_of(y, RESIDUE) if free_b(c)]
        yield xs, ys, lambda p, q: bool(values_meet(_loc_values(a, p), _loc_values(b, q)))
        if kind == MOD:
            for k in (SRC, TGT):
                xs = [c for c in a.children_of(x, k) if free_a(c)]
                ys = [c for c in b.children_of(y, k) if free_b(c)]
                yield xs, ys, lambda p, q: True
        if kind == SRC:
            xs = [p for p in a.participants(x) if free_a(p) and a.kind(p) == REGION]
            ys = [q for q in b.participants(y) if free_b(q) and b.kind(q) == REGION]

            def same_owner(p, q):
                op, oq = a.owner(p, AGENT), b.owner(q, AGENT)
                return op is not None and match.get(op) == oq

            yield xs, ys, same_owner

    def _anchored(self, s, t, match) -> bool:
        for p in self.a.participants(s):
            for q in self.b.participants(t):
                if match.get(p) == q:
                    return True
                op, oq = _owner_agent(self.a, p), _owner_agent(self.b, q)
                if op is not None and match.get(op) == oq:
                    return True
        return False

    def _bnd_options(self, x, y, match, rev) -> list[tuple]:
        xs = [s for s in self.a.sources(x) if s not in match]
        ys = [t for t in self.b.sources(y) if t not in rev]
        options = _max_matchings(xs, ys, lambda p, q: True)
        if not options:
            return []
        scored = [(sum(self._anchored(s, t, match) for s, t in opt), opt) for opt in options]
        top = max(sc for sc, _ in scored)
        return [opt for sc, opt in scored if sc == top]

    def _forced(self, x, y, match, rev) -> bool:
        a, b = self.a, self.b
        changed = False
        # belongs-to parents, one per kind on each side
        pa: dict = {}
        for p in a.graph.s_parents(x):
            pa.setdefault(a.kind(p), []).append(p)
        pb: dict = {}
        for q in b.graph.s_parents(y):
            pb.setdefault(b.kind(q), []).append(q)
        for k, ps in pa.items():
            qs = pb.get(k, [])
            if len(ps) == 1 and len(qs) == 1:
                changed |= self._add(match, rev, ps[0], qs[0])
        # a target links to exactly one flag
        if a.kind(x) == TGT:
            fa, fb = sorted(a.graph.e_out(x), key=id_key), sorted(b.graph.e_out(y), key=id_key)
            if len(fa) == 1 and len(fb) == 1:
                changed |= self._add(match, rev, fa[0], fb[0])
        return changed

    def extend(self, match: dict, rev: dict) -> list[dict]:
        while True:
            changed = False
            branch = None
            for x in sorted(match, key=id_key):
                y = match[x]
                changed |= self._forced(x, y, match, rev)
                for xs, ys, compat in self._groups(x, y, match, rev):
                    xs = [p for p in xs if p not in match]
                    ys = [q for q in ys if q not in rev]
                    if not xs or not ys:
                        continue
                    opts = _max_matchings(xs, ys, lambda p, q: self.a.kind(p) == self.b.kind(q) and compat(p, q))
                    if len(opts) == 1:
                        for p, q in opts[0]:
                            changed |= self._add(match, rev, p, q)
                    elif len(opts) > 1 and branch is None:
                        branch = opts
                if self.a.kind(x) == BND:
                    opts = self._bnd_options(x, y, match, rev)
                    if len(opts) == 1:
                        for p, q in opts[0]:
                            changed |= self._add(match, rev, p, q)
                    elif len(opts) > 1 and branch is None:
                        branch = opts
            if changed:
                continue
            if branch is None:
                return [match]
            results = []
            for opt in branch:
                m2, r2 = dict(match), dict(rev)
                try:
                    for p, q in opt:
                        self._add(m2, r2, p, q)
                    results.extend(self.extend(m2, r2))
                except _Conflict:
                    continue
            return results


def unification_pairs(a: TypedGraph, b: TypedGraph, seeds: Iterable[tuple[NodeId, NodeId]]) -> list[tuple[NodeId, NodeId]]:
    """Extend seed pairs to the unique maximal type-forced identification.

    Raises :class:`AmbiguousUnification` when several maximal extensions exist.
    """
    match: dict = {}
    rev: dict = {}
    u = _Unifier(a, b)
    for x, y in sorted(seeds, key=id_key):
        if x not in a.graph.nodes:
            raise UnificationError(f"seed node {x} is not in the new graph")
        if y not in b.graph.nodes:
            raise UnificationError(f"seed node {y} is not in the existing graph")
        if a.kind(x) != b.kind(y):
            raise UnificationError(f"seed {x}={y} is not type-compatible ({a.kind(x)} vs {b.kind(y)})")
        try:
            u._add(match, rev, x, y)
        except _Conflict as exc:
            raise UnificationError(str(exc)) from None
    try:
        results = u.extend(match, rev)
    except _Conflict as exc:
        raise UnificationError(str(exc)) from None
    if not results:
        raise UnificationError("no consistent extension of the seeds")
    distinct = {frozenset(m.items()) for m in results}
    maximal = [m for m in distinct if not any(m < o for o in distinct)]
    exts = sorted((sorted(m, key=id_key) for m in maximal), key=lambda e: [id_key(p) for p in e])
    if len(exts) > 1:
        raise AmbiguousUnification(exts)
    return exts[0]


def glue(a: TypedGraph, b: TypedGraph, pairs) -> tuple[TypedGraph, Cospan]:
    """Typed pushout of ``a`` and ``b`` over the identification ``pairs``.

    The glued graph keeps the node ids of ``b``.
    """
    ov = overlap_from_pairs(a.graph, b.graph, pairs)
    left, right = ov.cospan
    S = left.cod
    kinds = {right.mapping[n]: b.kind(n) for n in b.graph.nodes}
    kinds.update({left.mapping[n]: a.kind(n) for n in a.graph.nodes})
    typed = TypedGraph.from_kinds(S, kinds)
    return typed, Cospan(left.with_cod(S), right.with_cod(S))


def canonical_unification(a: TypedGraph, b: TypedGraph, seeds) -> Cospan:
    return glue(a, b, unification_pairs(a, b, seeds))[1]


# -- model operations ------------------------------------------------------------------


def _require_nugget(n: TypedGraph, what: str = "nugget") -> None:
    rep = check_nugget(n)
    if not rep.ok:
        raise ValidationError(f"{what} is not a well-formed nugget", rep)


def _retarget(entries: Mapping[int, NuggetEntry], premodel: StructuredGraph) -> dict[int, NuggetEntry]:
    return {i: NuggetEntry(e.graph, e.to_premodel.with_cod(premodel)) for i, e in entries.items()}


def add_nugget(model: Model, nugget: TypedGraph, glue_choice: GlueingChoice = GlueingChoice()) -> Model:
    _require_nugget(nugget)
    pairs = unification_pairs(nugget, model.premodel, glue_choice.seeds)
    premodel, (h, _) = glue(nugget, model.premodel, pairs)
    rep = check_premodel(premodel)
    if not rep.ok:
        raise ValidationError("glueing yields an invalid pre-model", rep)
    entries = _retarget(model.nuggets, premodel.graph)
    entries[model.next_id] = NuggetEntry(nugget, h)
    out = Model(premodel, MappingProxyType(entries), model.next_id + 1)
    _require_model(out)
    return out


def deprecation(
    n: StructuredGraph,
    remove_nodes: Iterable[NodeId] = (),
    remove_s_edges: Iterable[tuple] = (),
    remove_e_edges: Iterable[tuple] = (),
    remove_values: Mapping[NodeId, Iterable[Value]] | None = None,
) -> Homomorphism:
    """The inclusion ``N- -> N`` of what survives after removing the given parts."""
    gone = set(remove_nodes)
    for x in gone | {a for e in remove_s_edges for a in e} | {a for e in remove_e_edges for a in e}:
        if x not in n.nodes:
            raise KnowledgeBaseError(f"deprecation names unknown node {x}")
    for e in remove_s_edges:
        if tuple(e) not in n.s_edges:
            raise KnowledgeBaseError(f"deprecation names unknown S-edge {tuple(e)}")
    for e in remove_e_edges:
        if tuple(e) not in n.e_edges:
            raise KnowledgeBaseError(f"deprecation names unknown E-edge {tuple(e)}")
    sub = n.subgraph(n.nodes - gone)
    values = dict(sub.values)
    for x, vs in (remove_values or {}).items():
        if x not in values:
            raise KnowledgeBaseError(f"deprecation names unknown node {x}")
        values[x] = values[x] - frozenset(vs)
    sub = sub.replace(
        s_edges=sub.s_edges - {tuple(e) for e in remove_s_edges},
        e_edges=sub.e_edges - {tuple(e) for e in remove_e_edges},
        values=values,
    )
    return Homomorphism(sub, n, {x: x for x in sub.nodes})


def _reject_context_principal_merge(a: TypedGraph, b: TypedGraph, pairs) -> None:
    for x, y in pairs:
        if a.kind(x) in ACTION_KINDS:
            ca, cb = a.attribute(x, IS_BND) is None, b.attribute(y, IS_BND) is None
            if ca != cb:
                raise AggregationError(f"cannot merge a principal action with a contextual one ({x}={y})")


def rewrite_nugget(
    model: Model,
    nugget_id: int,
    new: TypedGraph,
    glue_choice: GlueingChoice,
    deprecate: Homomorphism | None = None,
    premodel_seeds: Iterable[tuple[NodeId, NodeId]] = (),
) -> tuple[Model, Trace]:
    """Update one nugget with new information and propagate to the pre-model.

    Returns the new model and the rewrite trace (relative to the old nugget).
    """
    if nugget_id not in model.nuggets:
        raise StaleNugget(f"no nugget with id {nugget_id}")
    _require_nugget(new, "new information")
    entry = model.nuggets[nugget_id]
    N = entry.graph
    pairs = unification_pairs(new, N, glue_choice.seeds)
    _reject_context_principal_merge(new, N, pairs)
    refined, (h_new, h_plus) = glue(new, N, pairs)
    if deprecate is None:
        deprecate = identity(N.graph)
    if deprecate.cod != N.graph:
        raise KnowledgeBaseError("deprecation must target the nugget being updated")
    result = apply_rewrite(RewriteSpec(deprecate, Cospan(h_plus, h_new)))
    g, trace = result.graph, result.trace
    if not is_transitive(g):
        closed = transitive_closure(g.s_edges)
        trace.added_s_edges = sorted(set(trace.added_s_edges) | (closed - g.s_edges), key=id_key)
        g = g.replace(s_edges=closed)
    revised = TypedGraph.from_kinds(g, {x: refined.kind(x) for x in g.nodes})
    _require_nugget(revised, "revised nugget")

    # propagate to the pre-model
    M = model.premodel
    seeds = {(trace.preserved[n], entry.to_premodel.mapping[n]) for n in trace.preserved}
    for x, y in premodel_seeds:
        if x not in new.graph.nodes:
            raise UnificationError(f"pre-model seed names unknown node {x}")
        x2 = h_new.mapping[x]
        if x2 in g.nodes:
            seeds.add((x2, y))
    pm_pairs = unification_pairs(revised, M, seeds)
    glued, (h_rev, _) = glue(revised, M, pm_pairs)

    others = {i: e for i, e in model.nuggets.items() if i != nugget_id}
    users = list(others.values()) + [NuggetEntry(revised, h_rev)]
    used_nodes = set()
    used_s, used_e = set(), set()
    used_vals: dict = {}
    for e in users:
        h = e.to_premodel.mapping
        used_nodes.update(h.values())
        used_s.update((h[a], h[b]) for a, b in e.graph.graph.s_edges)
        used_e.update((h[a], h[b]) for a, b in e.graph.graph.e_edges)
        for x, vs in e.graph.graph.values.items():
            used_vals.setdefault(h[x], set()).update(vs)
    old_h = entry.to_premodel.mapping
    drop_nodes = {old_h[d] for d in trace.deleted_nodes} - used_nodes
    drop_s = {(old_h[a], old_h[b]) for a, b in trace.deleted_s_edges} - used_s
    drop_e = {(old_h[a], old_h[b]) for a, b in trace.deleted_e_edges} - used_e
    pm = glued.graph
    values = dict(pm.values)
    for n, lost in trace.deleted_values.items():
        y = old_h[n]
        if y in values:
            values[y] = values[y] - (frozenset(lost) - used_vals.get(y, set()))
    pm = pm.replace(values=values, s_edges=pm.s_edges - drop_s, e_edges=pm.e_edges - drop_e)
    pm = pm.subgraph(pm.nodes - drop_nodes)
    premodel = TypedGraph.from_kinds(pm, {x: glued.kind(x) for x in pm.nodes})
    rep = check_premodel(premodel)
    if not rep.ok:
        raise ValidationError("update yields an invalid pre-model", rep)
    entries = _retarget(others, pm)
    entries[nugget_id] = NuggetEntry(revised, h_rev.with_cod(pm))
    out = Model(premodel, MappingProxyType(entries), model.next_id)
    _require_model(out)
    return out, trace


def update_nugget(
    model: Model,
    nugget_id: int,
    new: TypedGraph,
    glue_choice: GlueingChoice,
    deprecate: Homomorphism | None = None,
    premodel_seeds: Iterable[tuple[NodeId, NodeId]] = (),
) -> Model:
    return rewrite_nugget(model, nugget_id, new, glue_choice, deprecate, premodel_seeds)[0]


def extend_values(model: Model, node: NodeId, values: Iterable[Value]) -> Model:
    """Widen the value set of a pre-model attribute, e.g. to admit a variant residue."""
    M = model.premodel
    if node not in M.graph.nodes:
        raise KnowledgeBaseError(f"no pre-model node {node}")
    vals = dict(M.graph.values)
    vals[node] = vals[node] | frozenset(values)
    g = M.graph.replace(values=vals)
    premodel = TypedGraph.from_kinds(g, M.kinds)
    rep = check_premodel(premodel)
    if not rep.ok:
        raise ValidationError("widened pre-model is invalid", rep)
    return Model(premodel, MappingProxyType(_retarget(model.nuggets, g)), model.next_id)


def prune_premodel(model: Model) -> Model:
    """Drop pre-model nodes that no nugget typing reaches."""
    used = set()
    for e in model.nuggets.values():
        used.update(e.to_premodel.mapping.values())
    g = model.premodel.graph.subgraph(used)
    premodel = TypedGraph.from_kinds(g, {x: model.premodel.kind(x) for x in g.nodes})
    return Model(premodel, MappingProxyType(_retarget(model.nuggets, g)), model.next_id)


# -- validation and persistence -------------------------------------------------------------


def check_model(model: Model) -> Report:
    rep = Report()
    for issue in check_premodel(model.premodel):
        rep.add(Code.BAD_PREMODEL, f"pre-model: {issue.message}", *issue.nodes)
    for i in model.nugget_ids():
        e = model.nuggets[i]
        for issue in check_nugget(e.graph):
            rep.add(Code.BAD_NUGGET, f"nugget {i}: [{issue.code.value}] {issue.message}", *issue.nodes)
        h = e.to_premodel
        if h.cod != model.premodel.graph or h.dom != e.graph.graph:
            rep.add(Code.FACTORIZATION, f"nugget {i}: typing into the pre-model has the wrong ends")
            continue
        hrep = check_homomorphism(h)
        if not hrep.ok:
            for issue in hrep:
                rep.add(Code.FACTORIZATION, f"nugget {i}: {issue.message}", *issue.nodes)
            continue
        if compose(h, model.premodel.typing) != e.graph.typing:
            bad = sorted(
                (n for n in e.graph.graph.nodes if model.premodel.kind(h.mapping[n]) != e.graph.kind(n)),
                key=id_key,
            )
            rep.add(Code.FACTORIZATION, f"nugget {i}: typing does not factor through the pre-model at {bad}", *bad)
    return rep


def _require_model(model: Model) -> None:
    rep = check_model(model)
    if not rep.ok:
        raise ValidationError("model invariants violated", rep)


def save_model(model: Model) -> dict:
    nuggets = []
    for i in model.nugget_ids():
        e = model.nuggets[i]
        h = e.to_premodel.mapping
        nuggets.append({
            "id": i,
            "graph": typed_to_json(e.graph),
            "typing_to_premodel": {n: h[n] for n in e.graph.graph.sorted_nodes()},
        })
    return {
        "version": FORMAT_VERSION,
        "next_id": model.next_id,
        "premodel": typed_to_json(model.premodel),
        "nuggets": nuggets,
    }


def load_model(doc: Mapping) -> Model:
    if not isinstance(doc, Mapping) or doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {doc.get('version') if isinstance(doc, Mapping) else None!r}")
    try:
        premodel = typed_from_json(doc["premodel"])
        entries: dict[int, NuggetEntry] = {}
        for nd in doc.get("nuggets", []):
            i = int(nd["id"])
            if i in entries:
                raise FormatError(f"duplicate nugget id {i}")
            g = typed_from_json(nd["graph"])
            tmap = dict(nd["typing_to_premodel"])
            entries[i] = NuggetEntry(g, Homomorphism(g.graph, premodel.graph, tmap))
        next_id = int(doc.get("next_id", max(entries, default=0) + 1))
    except (KeyError, TypeError, ValueError, GraphError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc
    if entries and next_id <= max(entries):
        raise FormatError("next_id must exceed every nugget id")
    model = Model(premodel, MappingProxyType(entries), next_id)
    rep = check_model(model)
    if not rep.ok:
        raise ValidationError("model document fails validation", rep)
    return model


def model_equal(m1: Model, m2: Model) -> bool:
    """Structural equality, including node ids and labels."""
    if m1.next_id != m2.next_id or m1.nugget_ids() != m2.nugget_ids():
        return False
    if m1.premodel != m2.premodel or dict(m1.premodel.graph.labels) != dict(m2.premodel.graph.labels):
        return False
    for i in m1.nugget_ids():
        a, b = m1.nuggets[i], m2.nuggets[i]
        if a.graph != b.graph or dict(a.graph.graph.labels) != dict(b.graph.graph.labels):
            return False
        if dict(a.to_premodel.mapping) != dict(b.to_premodel.mapping):
            return False
    return True


__all__ = [
    "AggregationError",
    "AmbiguousUnification",
    "FormatError",
    "GlueingChoice",
    "KnowledgeBaseError",
    "Model",
    "NuggetEntry",
    "StaleNugget",
    "UnificationError",
    "ValidationError",
    "add_nugget",
    "canonical_unification",
    "check_model",
    "deprecation",
    "empty_model",
    "extend_values",
    "glue",
    "load_model",
    "metamodel",
    "model_equal",
    "prune_premodel",
    "rewrite_nugget",
    "save_model",
    "unification_pairs",
    "update_nugget",
]
