"""Compilation of a model and a protein selection to Kappa.

Pipeline: :func:`applicable_nuggets` -> :func:`reify_sites` ->
:func:`conflict_analysis` -> (optional) :func:`merge_conflict_cliques` ->
:func:`generate_prerules` -> :func:`emit_kappa`.  :func:`instantiate` runs
all of it.

By default a residue or flag whose value can never vary in the selected
model (one admissible value, and no MOD acting on it) is not reified, and
tests on it are dropped.  Pass ``elide_constants=False`` to reify every
tested residue and every flag.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping

from .graph import NodeId, Value, id_key, interval_meets
from .knowledge_base import Model
from .metamodel import (
    AA,
    AGENT,
    BND,
    BND_RC,
    BRK_RC,
    FLAG,
    INT,
    IS_BND,
    LOC,
    MOD_RC,
    REGION,
    RESIDUE,
    TGT,
    TypedGraph,
    check_nugget,
)

BIND, UNBIND, MODIFY = "bind", "unbind", "mod"


class InstantiationError(Exception):
    pass


# -- selection -----------------------------------------------------------------------


@dataclass(frozen=True)
class ProteinSelection:
    """Pre-model agents to represent, plus wild-type residue values.

    ``wildtype`` maps ``(agent, residue)`` pre-model ids to a one-letter code.
    """

    agents: tuple = ()
    wildtype: Mapping[tuple[NodeId, NodeId], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(sorted(set(self.agents), key=id_key)))
        object.__setattr__(self, "wildtype", dict(self.wildtype))

    def validate(self, model: Model) -> None:
        pm = model.premodel
        for a in self.agents:
            if a not in pm.graph.nodes or pm.kind(a) != AGENT:
                raise InstantiationError(f"unknown agent {a!r}")
        for (a, r), code in sorted(self.wildtype.items(), key=lambda kv: id_key(kv[0])):
            if a not in self.agents:
                raise InstantiationError(f"wild-type given for unselected agent {a!r}")
            if r not in pm.graph.nodes or pm.kind(r) != RESIDUE or pm.owner(r, AGENT) != a:
                raise InstantiationError(f"{r!r} is not a residue of {a!r}")
            aa = pm.attribute(r, AA)
            if aa is None or Value.aa(code) not in pm.graph.values[aa]:
                raise InstantiationError(f"wild-type {code} is not an admissible value of residue {r!r}")


def resolve_agents(model: Model, names: Iterable[str]) -> tuple:
    """Map user-facing names to pre-model agent ids (id first, then unique label)."""
    pm = model.premodel
    agents = pm.nodes_of(AGENT)
    out = []
    for name in names:
        if name in agents:
            out.append(name)
            continue
        hits = [a for a in agents if pm.graph.label(a) == name]
        if len(hits) != 1:
            raise InstantiationError(f"agent {name!r} is {'ambiguous' if hits else 'unknown'}")
        out.append(hits[0])
    return tuple(out)


def applicable_nuggets(model: Model, sel: ProteinSelection) -> list[int]:
    """Nuggets whose agents all type to selected agents."""
    sel.validate(model)
    chosen = set(sel.agents)
    out = []
    for i in model.nugget_ids():
        e = model.nuggets[i]
        if all(e.to_premodel.mapping[a] in chosen for a in e.graph.nodes_of(AGENT)):
            out.append(i)
    return out


# -- sites ---------------------------------------------------------------------------------


def sanitize(text: str, prefix: str = "a") -> str:
    s = re.sub(r"[^A-Za-z0-9_]", "_", str(text))
    if not s or not s[0].isalpha():
        s = prefix + s
    return s


@dataclass(frozen=True)
class Site:
    """A formal site.  ``keys`` are the pre-model elements it reifies."""

    agent: NodeId
    name: str
    origin: str  # "bnd" | "residue" | "flag"
    keys: tuple
    states: tuple[str, ...] = ()
    default: str | None = None

    def declaration(self) -> str:
        return self.name + "".join(f"~{s}" for s in self.states)


@dataclass
class SiteMap:
    agent_names: dict  # pm agent -> Kappa agent name
    sites: dict  # pm agent -> list[Site] in signature order
    index: dict  # key -> Site
    collisions: list[str] = field(default_factory=list)

    def of(self, agent: NodeId) -> list[Site]:
        return self.sites.get(agent, [])

    def get(self, key) -> Site | None:
        return self.index.get(key)

    def position(self, agent: NodeId, name: str) -> int:
        for i, s in enumerate(self.of(agent)):
            if s.name == name:
                return i
        raise KeyError(name)


class _Used:
    """The part of the pre-model reached by a set of nuggets."""

    def __init__(self, model: Model, nuggets: Iterable[int]):
        self.nodes: set = set()
        self.e_edges: set = set()
        self.aa_tested: set = set()
        for i in nuggets:
            e = model.nuggets[i]
            h = e.to_premodel.mapping
            self.nodes.update(h.values())
            self.e_edges.update((h[a], h[b]) for a, b in e.graph.graph.e_edges)
            self.aa_tested.update(h[n] for n in e.graph.nodes_of(AA))

    def participants(self, pm: TypedGraph, src: NodeId) -> list[NodeId]:
        return [p for p in pm.participants(src) if (p, src) in self.e_edges]


def _loc_text(pm: TypedGraph, residue: NodeId) -> str:
    loc = pm.attribute(residue, LOC)
    if loc is not None and pm.graph.values[loc]:
        return min(pm.graph.values[loc], key=Value.sort_key).text()
    return "_" + sanitize(residue)


def _holder(tg: TypedGraph, flag: NodeId) -> NodeId | None:
    parents = tg.graph.direct_s_parents(flag)
    for kind in (RESIDUE, REGION, AGENT):
        found = sorted((p for p in parents if tg.kind(p) == kind), key=id_key)
        if found:
            return found[0]
    return None


def _owner(tg: TypedGraph, n: NodeId) -> NodeId | None:
    return n if tg.kind(n) == AGENT else tg.owner(n, AGENT)


def reify_sites(model: Model, nuggets: Iterable[int], selection: ProteinSelection | None = None,
                elide_constants: bool = True) -> SiteMap:
    pm = model.premodel
    g = pm.graph
    used = _Used(model, nuggets)
    agents = set(selection.agents) if selection else set()
    agents |= {n for n in used.nodes if pm.kind(n) == AGENT}
    wildtype = selection.wildtype if selection else {}

    names: dict = {}
    taken: set = set()
    for a in sorted(agents, key=id_key):
        base = sanitize(g.label(a))
        name, k = base, 1
        while name in taken:
            k += 1
            name = f"{base}_{k}"
        taken.add(name)
        names[a] = name

    raw: dict = {a: [] for a in agents}

    # one site per BND participation
    for act in sorted((n for n in used.nodes if pm.kind(n) == BND), key=id_key):
        srcs = [s for s in pm.sources(act) if s in used.nodes]
        for s in srcs:
            for p in used.participants(pm, s):
                owner = _owner(pm, p)
                if owner not in agents:
                    continue
                if pm.kind(p) == REGION:
                    name = "rg" + sanitize(g.label(p))
                else:
                    partners = {_owner(pm, q) for t in srcs if t != s for q in used.participants(pm, t)}
                    partners.discard(None)
                    if len(partners) == 1:
                        name = "b" + names.get(next(iter(partners)), sanitize(g.label(next(iter(partners)))))
                    else:
                        name = "b_a" + sanitize(act)
                raw[owner].append(Site(owner, name, "bnd", (("bnd", act, s, p),)))

    # residues with a variable (or, if not eliding, any tested) amino acid
    for r in sorted((n for n in used.nodes if pm.kind(n) == RESIDUE), key=id_key):
        owner = _owner(pm, r)
        aa = pm.attribute(r, AA)
        if owner not in agents or aa is None or aa not in used.aa_tested:
            continue
        vals = sorted(g.values[aa], key=Value.sort_key)
        if elide_constants and len(vals) < 2:
            continue
        states = [v.text() for v in vals]
        default = wildtype.get((owner, r), states[0])
        states.remove(default)
        raw[owner].append(Site(owner, "rs" + _loc_text(pm, r), "residue", (("residue", r),), (default, *states), default))

    # flags that can change
    targeted = {b for a, b in used.e_edges if pm.kind(a) == TGT}
    for f in sorted((n for n in used.nodes if pm.kind(n) == FLAG), key=id_key):
        owner = _owner(pm, f)
        if owner not in agents:
            continue
        if elide_constants and f not in targeted and len(g.values[f]) < 2:
            continue
        holder = _holder(pm, f)
        label = sanitize(g.label(f))
        if holder is None or pm.kind(holder) == AGENT:
            name = label
        elif pm.kind(holder) == RESIDUE:
            name = f"rs{_loc_text(pm, holder)}_{label}"
        else:
            name = f"rg{sanitize(g.label(holder))}_{label}"
        raw[owner].append(Site(owner, name, "flag", (("flag", f),), ("0", "1"), "0"))

    sites: dict = {}
    index: dict = {}
    collisions: list[str] = []
    for a in sorted(agents, key=id_key):
        seen: set = set()
        out = []
        for s in raw[a]:
            name, k = s.name, 1
            while name in seen:
                k += 1
                name = f"{s.name}_{k}"
            if name != s.name:
                collisions.append(f"{names[a]}: site {s.name} renamed {name}")
                s = Site(s.agent, name, s.origin, s.keys, s.states, s.default)
            seen.add(name)
            out.append(s)
            for key in s.keys:
                index[key] = s
        sites[a] = out
    return SiteMap(names, sites, index, collisions)


# -- conflicts -------------------------------------------------------------------------------


@dataclass(frozen=True)
class IntrinsicConflict:
    action: NodeId
    source: NodeId
    participants: tuple
    partner_sites: tuple  # (agent, site name) on the opposite source(s)


@dataclass
class ConflictRelation:
    intrinsic: list[IntrinsicConflict] = field(default_factory=list)
    extrinsic: frozenset = frozenset()  # of frozenset({(agent, site), (agent, site)})

    def conflicts_of(self, ref: tuple) -> list[tuple]:
        out = [next(iter(p - {ref})) for p in self.extrinsic if ref in p]
        return sorted(out, key=id_key)

    def pairs(self) -> set:
        out = set()
        for p in self.extrinsic:
            a, b = sorted(p, key=id_key)
            out.add((a, b))
            out.add((b, a))
        return out


def _footprints(model: Model, nuggets: Iterable[int], key) -> frozenset:
    _, act, src, p = key
    pm = model.premodel
    if pm.kind(p) == REGION:
        n = pm.attribute(p, INT)
        return frozenset(pm.graph.values[n]) if n is not None else frozenset()
    found = set()
    for i in nuggets:
        e = model.nuggets[i]
        N, h = e.graph, e.to_premodel.mapping
        for x, y in N.graph.e_edges:
            if h[x] == p and h[y] == src and N.kind(x) == AGENT:
                n = N.attribute(x, INT)
                if n is not None:
                    found.update(N.graph.values[n])
    return frozenset(found)


def conflict_analysis(model: Model, nuggets: Iterable[int], sites: SiteMap) -> ConflictRelation:
    nuggets = list(nuggets)
    pm = model.premodel
    used = _Used(model, nuggets)
    intrinsic = []
    for act in sorted((n for n in used.nodes if pm.kind(n) == BND), key=id_key):
        srcs = [s for s in pm.sources(act) if s in used.nodes]
        for s in srcs:
            parts = used.participants(pm, s)
            if len(parts) < 2:
                continue
            partners = []
            for t in srcs:
                if t == s:
                    continue
                for q in used.participants(pm, t):
                    site = sites.get(("bnd", act, t, q))
                    if site is not None:
                        partners.append((site.agent, site.name))
            intrinsic.append(IntrinsicConflict(act, s, tuple(parts), tuple(partners)))
    extrinsic = set()
    for a in sorted(sites.sites, key=id_key):
        bsites = [s for s in sites.of(a) if s.origin == "bnd"]
        fps = {}
        for s in bsites:
            fp = set()
            for key in s.keys:
                fp |= _footprints(model, nuggets, key)
            fps[s.name] = {v for v in fp if v.kind == "int"}
        for s, t in itertools.combinations(bsites, 2):
            if any(interval_meets(u, v) for u in fps[s.name] for v in fps[t.name]):
                extrinsic.add(frozenset({(a, s.name), (a, t.name)}))
    return ConflictRelation(intrinsic, frozenset(extrinsic))


def merge_conflict_cliques(sites: SiteMap, conflicts: ConflictRelation) -> tuple[SiteMap, ConflictRelation]:
    """Conflate each isolated clique of extrinsically conflicting sites."""
    adj: dict = {}
    for p in conflicts.extrinsic:
        a, b = tuple(p)
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen: set = set()
    groups = []
    for start in sorted(adj, key=id_key):
        if start in seen:
            continue
        comp, todo = set(), [start]
        while todo:
            x = todo.pop()
            if x in comp:
                continue
            comp.add(x)
            todo.extend(adj[x] - comp)
        seen |= comp
        if all(adj[x] >= comp - {x} for x in comp):
            groups.append(comp)
    if not groups:
        return sites, conflicts
    rename: dict = {}
    new_sites = {a: list(ss) for a, ss in sites.sites.items()}
    for comp in groups:
        agent = next(iter(comp))[0]
        members = [s for s in new_sites[agent] if (agent, s.name) in comp]
        merged_name = "_".join(s.name for s in members)
        others = {s.name for s in new_sites[agent] if (agent, s.name) not in comp}
        name, k = merged_name, 1
        while name in others:
            k += 1
            name = f"{merged_name}_{k}"
        merged = Site(agent, name, "bnd", tuple(k for s in members for k in s.keys))
        out, placed = [], False
        for s in new_sites[agent]:
            if (agent, s.name) in comp:
                rename[(agent, s.name)] = (agent, name)
                if not placed:
                    out.append(merged)
                    placed = True
            else:
                out.append(s)
        new_sites[agent] = out
    index = {k: s for ss in new_sites.values() for s in ss for k in s.keys}
    extrinsic = set()
    for p in conflicts.extrinsic:
        q = frozenset(rename.get(x, x) for x in p)
        if len(q) == 2:
            extrinsic.add(q)
    intrinsic = [
        IntrinsicConflict(c.action, c.source, c.participants, tuple(rename.get(x, x) for x in c.partner_sites))
        for c in conflicts.intrinsic
    ]
    return (
        SiteMap(dict(sites.agent_names), new_sites, index, list(sites.collisions)),
        ConflictRelation(intrinsic, frozenset(extrinsic)),
    )


# -- pre-rules -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Disjunct:
    """One concrete rule.

    ``agents`` lists pre-model agent ids in pattern order; ``lhs`` and
    ``rhs`` give, per agent, ``{site: (state or None, bond id or None)}``.
    """

    nugget: int
    agents: tuple
    lhs: tuple
    rhs: tuple
    rate: Fraction | None = None


@dataclass
class PreRule:
    action: NodeId
    kind: str
    nuggets: tuple
    disjuncts: list[Disjunct]

    @property
    def rate(self) -> Fraction | None:
        rates = {d.rate for d in self.disjuncts}
        return rates.pop() if len(rates) == 1 else None


def _rate(N: TypedGraph, action: NodeId, kind: str) -> Fraction | None:
    n = N.attribute(action, kind)
    if n is None:
        return None
    (v,) = N.graph.values[n]
    return v.data


class _Pattern:
    """Mutable builder for one disjunct."""

    def __init__(self, order: list):
        self.order = list(order)
        self.lhs: dict = {x: {} for x in order}
        self.rhs: dict = {x: {} for x in order}

    def copy(self) -> _Pattern:
        p = _Pattern(self.order)
        p.lhs = {x: dict(d) for x, d in self.lhs.items()}
        p.rhs = {x: dict(d) for x, d in self.rhs.items()}
        return p

    def both(self, x, site: str, state=None, bond=None) -> None:
        self.lhs[x].setdefault(site, (state, bond))
        self.rhs[x].setdefault(site, (state, bond))


class _RuleBuilder:
    def __init__(self, model: Model, sites: SiteMap, conflicts: ConflictRelation, nugget: int):
        self.e = model.nuggets[nugget]
        self.N = self.e.graph
        self.h = self.e.to_premodel.mapping
        self.sites = sites
        self.conflicts = conflicts
        self.nugget = nugget

    def bsite(self, action, src, p) -> Site:
        key = ("bnd", self.h[action], self.h[src], self.h[p])
        s = self.sites.get(key)
        if s is None:
            raise InstantiationError(f"nugget {self.nugget}: no site reifies participation {key[1:]}")
        return s

    def order(self, core: list, excluded: set) -> list:
        N = self.N
        rest = [a for a in N.nodes_of(AGENT) if a not in core and a not in excluded]
        rest.sort(key=lambda a: (id_key(self.h[a]), id_key(a)))
        out = []
        for a in core + rest:
            if a not in out:
                out.append(a)
        return out

    def context(self, pat: _Pattern, skip: set) -> list[_Pattern]:
        """Add state tests and contextual bonds; returns the multiplied patterns."""
        N, h = self.N, self.h
        present = set(pat.order)
        for f in N.nodes_of(FLAG):
            if f in skip or _owner(N, f) not in present:
                continue
            s = self.sites.get(("flag", h[f]))
            if s is not None:
                (v,) = N.graph.values[f]
                pat.both(_owner(N, f), s.name, state=v.text())
        for r in N.nodes_of(RESIDUE):
            aa = N.attribute(r, AA)
            if aa is None or _owner(N, r) not in present:
                continue
            s = self.sites.get(("residue", h[r]))
            if s is not None:
                (v,) = N.graph.values[aa]
                pat.both(_owner(N, r), s.name, state=v.text())
        pats = [pat]
        for c in N.nodes_of(BND):
            flag = N.attribute(c, IS_BND)
            if flag is None:
                continue
            (v,) = N.graph.values[flag]
            srcs = sorted(N.sources(c), key=lambda s: (id_key(h[s]), id_key(s)))
            sides = [[p for p in N.participants(s) if _owner(N, p) in present] for s in srcs]
            if v.data == 0:
                for p_ in pats:
                    for s, ps in zip(srcs, sides):
                        for p in ps:
                            p_.both(_owner(N, p), self.bsite(c, s, p).name)
                continue
            if len(srcs) != 2 or not all(sides):
                continue
            nxt = []
            for p_ in pats:
                for x, y in itertools.product(*sides):
                    q = p_.copy()
                    bond = ("ctx", c, x, y)
                    q.both(_owner(N, x), self.bsite(c, srcs[0], x).name, bond=bond)
                    q.both(_owner(N, y), self.bsite(c, srcs[1], y).name, bond=bond)
                    nxt.append(q)
            pats = nxt
        return pats

    def occlusion(self, pat: _Pattern, x, site: Site) -> None:
        for agent, name in self.conflicts.conflicts_of((site.agent, site.name)):
            if name != site.name:
                pat.both(x, name)

    def finish(self, pat: _Pattern, keep: set, rate) -> Disjunct:
        order = [x for x in pat.order if x in keep or pat.lhs[x] or pat.rhs[x]]
        return Disjunct(
            self.nugget,
            tuple(self.h[x] for x in order),
            tuple(tuple(sorted(pat.lhs[x].items())) for x in order),
            tuple(tuple(sorted(pat.rhs[x].items())) for x in order),
            rate,
        )

    def bind(self, action) -> tuple[list[Disjunct], list[Disjunct]]:
        N, h = self.N, self.h
        srcs = sorted(N.sources(action), key=lambda s: (id_key(h[s]), id_key(s)))
        if len(srcs) != 2:
            raise InstantiationError(f"nugget {self.nugget}: BND {action} needs two sources")
        s1, s2 = srcs
        P1, P2 = N.participants(s1), N.participants(s2)
        binds, unbinds = [], []
        for p1, p2 in itertools.product(P1, P2):
            o1, o2 = _owner(N, p1), _owner(N, p2)
            excluded = {_owner(N, q) for q in P1 + P2} - {o1, o2}
            site1, site2 = self.bsite(action, s1, p1), self.bsite(action, s2, p2)
            pat = _Pattern(self.order([o1, o2], excluded))
            pat.lhs[o1][site1.name] = (None, None)
            pat.lhs[o2][site2.name] = (None, None)
            pat.rhs[o1][site1.name] = (None, "b")
            pat.rhs[o2][site2.name] = (None, "b")
            for q in self.context(pat, set()):
                self.occlusion(q, o1, site1)
                self.occlusion(q, o2, site2)
                binds.append(self.finish(q, {o1, o2}, _rate(N, action, BND_RC)))
            un = _Pattern([o1, o2])
            un.lhs[o1][site1.name] = (None, "b")
            un.lhs[o2][site2.name] = (None, "b")
            un.rhs[o1][site1.name] = (None, None)
            un.rhs[o2][site2.name] = (None, None)
            unbinds.append(self.finish(un, {o1, o2}, _rate(N, action, BRK_RC)))
        return binds, unbinds

    def modify(self, action) -> list[Disjunct]:
        N, h = self.N, self.h
        tgts = N.targets(action)
        if not tgts:
            return []
        (f,) = sorted(N.graph.e_out(tgts[0]), key=id_key)
        site = self.sites.get(("flag", h[f]))
        if site is None:
            raise InstantiationError(f"nugget {self.nugget}: no site reifies flag {h[f]}")
        (v,) = N.graph.values[f]
        post = v.text()
        pre = "0" if post == "1" else "1"
        target_owner = _owner(N, f)
        srcs = N.sources(action)
        parts = N.participants(srcs[0]) if srcs else []
        out = []
        for p in parts or [None]:
            core = ([_owner(N, p)] if p is not None else []) + [target_owner]
            excluded = {_owner(N, q) for q in parts} - set(core)
            pat = _Pattern(self.order(core, excluded))
            pat.lhs[target_owner][site.name] = (pre, None)
            pat.rhs[target_owner][site.name] = (post, None)
            for q in self.context(pat, {f}):
                out.append(self.finish(q, set(core), _rate(N, action, MOD_RC)))
        return out


def generate_prerules(model: Model, nuggets: Iterable[int], sites: SiteMap, conflicts: ConflictRelation) -> list[PreRule]:
    """Bind, unbind and modification pre-rules, ordered by pre-model action id."""
    grouped: dict = {}
    for i in sorted(nuggets):
        N = model.nuggets[i].graph
        principal = check_nugget(N).principal_action
        if principal is None:
            raise InstantiationError(f"nugget {i} has no principal action")
        act = model.nuggets[i].to_premodel.mapping[principal]
        rb = _RuleBuilder(model, sites, conflicts, i)
        entry = grouped.setdefault(act, {"kind": N.kind(principal), "nuggets": [], "bind": [], "unbind": []})
        entry["nuggets"].append(i)
        if N.kind(principal) == BND:
            b, u = rb.bind(principal)
            entry["bind"].extend(b)
            entry["unbind"].extend(u)
        else:
            entry["bind"].extend(rb.modify(principal))
    out = []
    for act in sorted(grouped, key=id_key):
        e = grouped[act]
        kind = BIND if e["kind"] == BND else MODIFY
        out.append(PreRule(act, kind, tuple(e["nuggets"]), _dedupe(e["bind"])))
        if kind == BIND:
            out.append(PreRule(act, UNBIND, tuple(e["nuggets"]), _dedupe(e["unbind"])))
    return out


def _dedupe(ds: list[Disjunct]) -> list[Disjunct]:
    seen, out = set(), []
    for d in ds:
        k = (d.agents, d.lhs, d.rhs, d.rate)
        if k not in seen:
            seen.add(k)
            out.append(d)
    return out


# -- emission ---------------------------------------------------------------------------------


def format_rate(r: Fraction) -> str:
    r = Fraction(r)
    if r.denominator == 1:
        return str(r.numerator)
    d = r.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d == 1:
        return format((Decimal(r.numerator) / Decimal(r.denominator)).normalize(), "f")
    return repr(float(r))


def _side(d: Disjunct, side: tuple, sites: SiteMap, labels: dict) -> str:
    parts = []
    for agent, tests in zip(d.agents, side):
        toks = []
        for name, (state, bond) in sorted(tests, key=lambda t: sites.position(agent, t[0])):
            tok = name
            if state is not None:
                tok += f"~{state}"
            if bond is not None:
                tok += f"!{labels.setdefault(bond, len(labels))}"
            toks.append(tok)
        parts.append(f"{sites.agent_names[agent]}({','.join(toks)})")
    return ",".join(parts)


def rule_text(d: Disjunct, sites: SiteMap) -> str:
    labels: dict = {}
    lhs = _side(d, d.lhs, sites, labels)
    rhs = _side(d, d.rhs, sites, labels)
    text = f"{lhs} -> {rhs}"
    if d.rate is not None:
        text += f" @ {format_rate(d.rate)}"
    return text


@dataclass
class KappaModel:
    signatures: list[str]
    blocks: list[list[str]]
    header: str = ""

    @property
    def rules(self) -> list[str]:
        return [r for b in self.blocks for r in b]

    def text(self) -> str:
        lines = [self.header] if self.header else []
        lines.extend(self.signatures)
        for b in self.blocks:
            lines.append("")
            lines.extend(b)
        return "\n".join(lines) + "\n"


def emit_kappa(prerules: list[PreRule], sites: SiteMap, version: str | None = None) -> KappaModel:
    """Signatures, then each bind rule followed by its unbind rule."""
    if version is None:
        from . import __version__ as version
    sigs = []
    for a in sorted(sites.agent_names, key=id_key):
        decl = ",".join(s.declaration() for s in sites.of(a))
        sigs.append(f"%agent: {sites.agent_names[a]}({decl})")
    unbind_by_action: dict = {}
    for p in prerules:
        if p.kind == UNBIND:
            unbind_by_action[p.action] = p.disjuncts
    blocks: list[list[str]] = []
    emitted: set = set()

    def add(block: list[str]) -> None:
        block = [r for r in block if r not in emitted]
        if block:
            emitted.update(block)
            blocks.append(block)

    for p in prerules:
        if p.kind == MODIFY:
            for d in p.disjuncts:
                add([rule_text(d, sites)])
        elif p.kind == BIND:
            unb = unbind_by_action.get(p.action, [])
            for d in p.disjuncts:
                pair = [rule_text(d, sites)]
                match = _unbind_for(d, unb)
                if match is not None:
                    pair.append(rule_text(match, sites))
                add(pair)
    return KappaModel(sigs, blocks, f"# generated by nugget-forge {version}")


def _unbind_for(d: Disjunct, unbinds: list[Disjunct]) -> Disjunct | None:
    bound = {(a, n) for a, side in zip(d.agents, d.rhs) for n, (_, b) in side if b == "b"}
    for u in unbinds:
        if u.nugget != d.nugget:
            continue
        ub = {(a, n) for a, side in zip(u.agents, u.lhs) for n, (_, b) in side if b == "b"}
        if ub == bound:
            return u
    return None


# -- driver ---------------------------------------------------------------------------------------


@dataclass
class Instantiation:
    nuggets: list[int]
    sites: SiteMap
    conflicts: ConflictRelation
    prerules: list[PreRule]
    kappa: KappaModel


def instantiate(model: Model, selection: ProteinSelection, merge_cliques: bool = False,
                elide_constants: bool = True) -> Instantiation:
    nuggets = applicable_nuggets(model, selection)
    sites = reify_sites(model, nuggets, selection, elide_constants)
    conflicts = conflict_analysis(model, nuggets, sites)
    if merge_cliques:
        sites, conflicts = merge_conflict_cliques(sites, conflicts)
    prerules = generate_prerules(model, nuggets, sites, conflicts)
    return Instantiation(nuggets, sites, conflicts, prerules, emit_kappa(prerules, sites))


def site_table(sites: SiteMap) -> str:
    rows = [("agent", "site", "origin", "states", "default")]
    for a in sorted(sites.agent_names, key=id_key):
        for s in sites.of(a):
            rows.append((sites.agent_names[a], s.name, s.origin, ",".join(s.states) or "-", s.default or "-"))
    return _table(rows)


def conflict_table(conflicts: ConflictRelation, sites: SiteMap) -> str:
    rows = [("type", "agent", "sites")]
    for c in conflicts.intrinsic:
        partner = ",".join(f"{sites.agent_names[a]}.{n}" for a, n in c.partner_sites) or "-"
        rows.append(("intrinsic", partner, " | ".join(str(p) for p in c.participants)))
    for p in sorted((tuple(sorted(q, key=id_key)) for q in conflicts.extrinsic), key=id_key):
        rows.append(("extrinsic", sites.agent_names[p[0][0]], f"{p[0][1]} x {p[1][1]}"))
    return _table(rows)


def _table(rows: list[tuple]) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


# -- parsing (for checking emitted text) ---------------------------------------------------------

_AGENT_RE = re.compile(r"([A-Za-z][A-Za-z0-9_]*)\(([^()]*)\)")
_SITE_RE = re.compile(r"^([A-Za-z0-9_]+)((?:~[A-Za-z0-9_]+)*)(?:!(\d+))?$")


@dataclass
class ParsedKappa:
    signatures: dict  # agent -> {site: tuple of states}
    rules: list  # (lhs, rhs, rate); sides are [(agent, {site: (state, bond)})]


def _parse_side(text: str, line: str) -> list:
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _AGENT_RE.match(text, pos)
        if m is None:
            raise InstantiationError(f"cannot parse agent pattern in: {line}")
        sites = {}
        for tok in filter(None, m.group(2).split(",")):
            sm = _SITE_RE.match(tok)
            if sm is None:
                raise InstantiationError(f"bad site token {tok!r} in: {line}")
            states = [s for s in sm.group(2).split("~") if s]
            if len(states) > 1:
                raise InstantiationError(f"site {tok!r} tests several states in: {line}")
            sites[sm.group(1)] = (states[0] if states else None, int(sm.group(3)) if sm.group(3) else None)
        out.append((m.group(1), sites))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise InstantiationError(f"expected ',' in: {line}")
            pos += 1
    return out


def parse_kappa(text: str) -> ParsedKappa:
    sigs: dict = {}
    rules = []
    for line in text.split("\n"):
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("%agent:"):
            m = _AGENT_RE.fullmatch(line[len("%agent:"):].strip())
            if m is None:
                raise InstantiationError(f"bad signature: {line}")
            decl = {}
            for tok in filter(None, m.group(2).split(",")):
                name, *states = tok.split("~")
                decl[name] = tuple(states)
            sigs[m.group(1)] = decl
            continue
        body, _, rate = line.partition(" @ ")
        lhs, arrow, rhs = body.partition(" -> ")
        if not arrow:
            raise InstantiationError(f"not a rule: {line}")
        rules.append((_parse_side(lhs, line), _parse_side(rhs, line), rate or None))
    return ParsedKappa(sigs, rules)


def check_declared(parsed: ParsedKappa) -> list[str]:
    """Problems where a rule uses an undeclared agent, site or state."""
    problems = []
    for lhs, rhs, _ in parsed.rules:
        for agent, sites in lhs + rhs:
            decl = parsed.signatures.get(agent)
            if decl is None:
                problems.append(f"agent {agent} undeclared")
                continue
            for name, (state, _) in sites.items():
                if name not in decl:
                    problems.append(f"site {agent}.{name} undeclared")
                elif state is not None and state not in decl[name]:
                    problems.append(f"state {agent}.{name}~{state} undeclared")
    return problems
