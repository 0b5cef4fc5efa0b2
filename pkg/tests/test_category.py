import random

import pytest

from nugget_forge.category import (
    RewriteSpec,
    UnionFind,
    apply_rewrite,
    enumerate_overlaps,
    factorize,
    overlap_from_pairs,
    pullback,
    pullback_complement,
    pullback_mediator,
    pushout,
    pushout_mediator,
)
from nugget_forge.graph import (
    Cospan,
    GraphError,
    Homomorphism,
    StructuredGraph,
    Value,
    check_homomorphism,
    compose,
    identity,
    is_mono,
)

from oracles import (
    brute_homs,
    check_pullback_universal,
    check_pushout_universal,
    mono_cospan_from,
    mono_mediators,
    partial_injections,
    random_cospan_problem,
    random_mono_pair,
    random_over,
    random_span_problem,
    random_type_graph,
    same_map,
)


def check_pbc_square(l, m, result):
    """N± is a commuting pullback square with mono legs."""
    Npm, j1, j2 = result
    assert check_homomorphism(j1).ok and check_homomorphism(j2).ok
    assert is_mono(j1) and is_mono(j2)
    assert same_map(compose(j1, j2), compose(l, m))
    pb = pullback(m, j2)
    med = pullback_mediator(pb, l, j1)
    # the mediator N- -> N ×_{N+} N± is an isomorphism
    assert is_mono(med) and med.image() == set(pb.obj.nodes)
    inv = Homomorphism(pb.obj, l.dom, {v: k for k, v in med.mapping.items()})
    assert check_homomorphism(med).ok and check_homomorphism(inv).ok


class TestUnionFind:
    def test_classes(self):
        uf = UnionFind(range(5))
        uf.union(0, 1)
        uf.union(3, 4)
        uf.union(1, 4)
        assert sorted(sorted(c) for c in uf.classes()) == [[0, 1, 3, 4], [2]]


class TestPullback:
    def test_universal_property(self):
        rng = random.Random(101)
        for _ in range(200):
            T, C, tC, (A, f), (B, g) = random_cospan_problem(rng)
            check_pullback_universal(pullback(f, g), f, g, tC, rng)

    def test_values_intersect(self):
        C = StructuredGraph(["c"], values={"c": [Value.num(1), Value.num(2), Value.num(3)]})
        A = StructuredGraph(["a"], values={"a": [Value.num(1), Value.num(2)]})
        B = StructuredGraph(["b"], values={"b": [Value.num(2), Value.num(3)]})
        pb = pullback(Homomorphism(A, C, {"a": "c"}), Homomorphism(B, C, {"b": "c"}))
        assert pb.obj.values[("a", "b")] == {Value.num(2)}

    def test_mediator_rejects_noncommuting(self):
        C = StructuredGraph(["c1", "c2"])
        A, B, X = StructuredGraph(["a"]), StructuredGraph(["b"]), StructuredGraph(["x"])
        pb = pullback(Homomorphism(A, C, {"a": "c1"}), Homomorphism(B, C, {"b": "c2"}))
        with pytest.raises(GraphError):
            pullback_mediator(pb, Homomorphism(X, A, {"x": "a"}), Homomorphism(X, B, {"x": "b"}))


class TestPushout:
    def test_universal_property(self):
        rng = random.Random(202)
        for _ in range(150):
            T, (A, tA), (B, tB), f, g = random_span_problem(rng)
            check_pushout_universal(pushout(f, g), f, g, tA, tB, rng)

    def test_mono_right_leg_keeps_ids(self):
        K = StructuredGraph(["k"])
        A = StructuredGraph(["x", "y"], [("y", "x")])
        B = StructuredGraph(["x", "z"])
        po = pushout(Homomorphism(K, A, {"k": "x"}), Homomorphism(K, B, {"k": "z"}))
        assert po.right.mapping == {"x": "x", "z": "z"}
        # A's x is glued to B's z; A's y keeps its id
        assert po.left.mapping == {"x": "z", "y": "y"}
        assert ("y", "z") in po.obj.s_edges

    def test_fresh_suffix(self):
        K = StructuredGraph()
        A, B = StructuredGraph(["n"]), StructuredGraph(["n"])
        po = pushout(Homomorphism(K, A, {}), Homomorphism(K, B, {}))
        assert po.obj.nodes == {"n", "n_2"}

    def test_values_join_and_mediator(self):
        K = StructuredGraph(["k"])
        A = StructuredGraph(["a"], values={"a": [Value.num(1)]})
        B = StructuredGraph(["b"], values={"b": [Value.num(2)]})
        po = pushout(Homomorphism(K, A, {"k": "a"}), Homomorphism(K, B, {"k": "b"}))
        assert po.obj.values["b"] == {Value.num(1), Value.num(2)}
        X = StructuredGraph(["x"], values={"x": [Value.num(1), Value.num(2)]})
        med = pushout_mediator(po, Homomorphism(A, X, {"a": "x"}), Homomorphism(B, X, {"b": "x"}))
        assert check_homomorphism(med).ok


class TestPullbackComplement:
    def test_squares(self):
        rng = random.Random(303)
        for _ in range(300):
            T, l, m = random_mono_pair(rng)
            check_pbc_square(l, m, pullback_complement(l, m))

    def test_identity_deprecation_is_refinement(self):
        rng = random.Random(304)
        for _ in range(50):
            T, l, m = random_mono_pair(rng)
            N = l.cod
            Npm, j1, j2 = pullback_complement(identity(N), m)
            assert Npm == m.cod

    def test_node_deletion_removes_incident_edges(self):
        N = StructuredGraph(["a", "b"], [("a", "b")])
        Np = StructuredGraph(["a", "b", "c"], [("a", "b"), ("c", "b")])
        Nm = StructuredGraph(["a"])
        Npm, _, _ = pullback_complement(Homomorphism(Nm, N, {"a": "a"}), Homomorphism(N, Np, {"a": "a", "b": "b"}))
        assert Npm.nodes == {"a", "c"} and not Npm.s_edges

    def test_requires_monos(self):
        N = StructuredGraph(["a", "b"])
        one = StructuredGraph(["x"])
        with pytest.raises(GraphError):
            pullback_complement(identity(N), Homomorphism(N, one, {"a": "x", "b": "x"}))


class TestRewrite:
    def test_trace(self):
        N = StructuredGraph(["a", "b"], [("a", "b")], values={"a": [Value.num(1), Value.num(2)]})
        new = StructuredGraph(["a", "c"], [("c", "a")])
        Nm = StructuredGraph(["a"], values={"a": [Value.num(1)]})
        Np = StructuredGraph(["a", "b", "c"], [("a", "b"), ("c", "a")], values={"a": [Value.num(1), Value.num(2)]})
        spec = RewriteSpec(
            Homomorphism(Nm, N, {"a": "a"}),
            Cospan(Homomorphism(N, Np, {"a": "a", "b": "b"}), Homomorphism(new, Np, {"a": "a", "c": "c"})),
        )
        res = apply_rewrite(spec)
        t = res.trace
        assert t.added_nodes == ["c"] and t.added_s_edges == [("c", "a")]
        assert t.deleted_nodes == ["b"] and t.deleted_s_edges == [("a", "b")]
        assert t.deleted_values == {"a": frozenset({Value.num(2)})}
        assert t.preserved == {"a": "a"}
        assert not t.empty

    def test_flag_move(self):
        # drop flag->agent, add flag->residue; the flag node itself is preserved
        N = StructuredGraph(["A", "R", "F"], [("R", "A"), ("F", "A")])
        Nm = StructuredGraph(["A", "R", "F"], [("R", "A")])
        Np = StructuredGraph(["A", "R", "F"], [("R", "A"), ("F", "A"), ("F", "R")])
        same = {"A": "A", "R": "R", "F": "F"}
        spec = RewriteSpec(Homomorphism(Nm, N, same),
                           Cospan(Homomorphism(N, Np, same), Homomorphism(Np, Np, same)))
        t = apply_rewrite(spec).trace
        assert t.deleted_s_edges == [("F", "A")] and t.added_s_edges == [("F", "R")]
        assert not t.deleted_nodes and t.preserved["F"] == "F"

    def test_spec_rejects_non_mono(self):
        N = StructuredGraph(["a", "b"])
        one = StructuredGraph(["x"])
        with pytest.raises(GraphError):
            RewriteSpec(identity(N), Cospan(Homomorphism(N, one, {"a": "x", "b": "x"}), identity(one)))


class TestOverlaps:
    def test_count_matches_partial_injections(self):
        rng = random.Random(404)
        for _ in range(60):
            T = random_type_graph(rng)
            A, tA = random_over(T, rng, rng.randint(0, 3), "a")
            B, tB = random_over(T, rng, rng.randint(0, 3), "b")
            ovs = enumerate_overlaps(A, B, tA, tB)
            assert len(ovs) == sum(1 for _ in partial_injections(A, B, tA.mapping, tB.mapping))
            assert ovs[0].size == 0

    def test_every_mono_cospan_factors_once(self):
        rng = random.Random(405)
        for _ in range(40):
            T = random_type_graph(rng)
            A, tA = random_over(T, rng, rng.randint(1, 3), "a")
            B, tB = random_over(T, rng, rng.randint(1, 3), "b")
            ovs = enumerate_overlaps(A, B, tA, tB)
            for pairs in partial_injections(A, B, tA.mapping, tB.mapping):
                C, f, g = mono_cospan_from(A, B, tA.mapping, tB.mapping, T, pairs, rng)
                assert sum(mono_mediators(o, f, g) for o in ovs) == 1

    def test_overlap_span_is_pullback_of_cospan(self):
        A = StructuredGraph(["x", "y"], [("x", "y")])
        B = StructuredGraph(["p", "q"], [("q", "p")])
        ov = overlap_from_pairs(A, B, [("x", "p"), ("y", "q")])
        # disagreeing edges are not in the apex but both survive in the glued graph
        assert not ov.span.left.dom.s_edges
        assert len(ov.cospan.left.cod.s_edges) == 2


class TestFactorize:
    def test_matches_brute_force(self):
        rng = random.Random(505)
        for _ in range(80):
            T = random_type_graph(rng)
            M, m = random_over(T, rng, rng.randint(1, 3), "m", density=0.7, full_values=True)
            N, n = random_over(T, rng, rng.randint(0, 3), "n")
            got = {frozenset(h.mapping.items()) for h in factorize(n, m)}
            want = {frozenset(h.mapping.items()) for h in brute_homs(N, M, n, m)}
            assert got == want
