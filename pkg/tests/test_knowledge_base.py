import itertools
import json
import random

import pytest

from nugget_forge.graph import Value, compose, dumps, is_isomorphic
from nugget_forge.knowledge_base import (
    AggregationError,
    AmbiguousUnification,
    FormatError,
    GlueingChoice,
    StaleNugget,
    UnificationError,
    ValidationError,
    add_nugget,
    canonical_unification,
    check_model,
    deprecation,
    empty_model,
    extend_values,
    load_model,
    model_equal,
    prune_premodel,
    rewrite_nugget,
    save_model,
    unification_pairs,
    update_nugget,
)
from nugget_forge.metamodel import GraphBuilder
from nugget_forge.report import Code
from nugget_forge.running_example import (
    GRB2_NUGGET,
    build_running_model,
    egfr_grb2,
    egfr_shc,
    egfr_y1092,
    kinase_mod,
    shc_grb2,
    three_nugget_model,
    update_walkthrough,
)


def assert_factorizes(model):
    for i, e in model.nuggets.items():
        assert compose(e.to_premodel, model.premodel.typing) == e.graph.typing, i
    assert check_model(model).ok, str(check_model(model))


def two_flag_agent(n_flags: int):
    b = GraphBuilder()
    b.agent("A")
    b.agent("B")
    for i in range(n_flags):
        b.flag(f"A.f{i}", "A", "phos", 1)
    b.bnd("bnd", "A", "B")
    return b.build()


class TestAdd:
    def test_into_empty_model(self):
        n = egfr_grb2()
        m = add_nugget(empty_model(), n)
        assert m.nugget_ids() == [1] and m.next_id == 2
        assert is_isomorphic(m.premodel.graph, n.graph, m.premodel.kinds, n.kinds)
        assert_factorizes(m)

    def test_empty_seeds_add_everything(self):
        m = add_nugget(empty_model(), egfr_shc())
        m2 = add_nugget(m, egfr_grb2())
        assert len(m2.premodel.graph.nodes) == len(m.premodel.graph.nodes) + len(egfr_grb2().graph.nodes)
        assert_factorizes(m2)

    def test_identified_action_is_shared(self):
        m = three_nugget_model()
        assert m.nugget_ids() == [1, 2, 3]
        act2 = m.nuggets[2].to_premodel.mapping["bnd"]
        act3 = m.nuggets[3].to_premodel.mapping["bnd"]
        assert act2 == act3
        assert_factorizes(m)

    def test_rejects_non_nugget(self):
        b = GraphBuilder()
        b.agent("A")
        with pytest.raises(ValidationError):
            add_nugget(empty_model(), b.build())

    def test_seeds_must_be_type_compatible(self):
        m = add_nugget(empty_model(), egfr_grb2())
        with pytest.raises(UnificationError):
            add_nugget(m, egfr_shc(), GlueingChoice.of([("EGFR", "SH2")]))
        with pytest.raises(UnificationError):
            add_nugget(m, egfr_shc(), GlueingChoice.of([("nope", "EGFR")]))

    def test_ids_never_reused(self):
        m = add_nugget(add_nugget(empty_model(), egfr_shc()), egfr_grb2(), GlueingChoice.of([("EGFR", "EGFR")]))
        assert m.nugget_ids() == [1, 2]
        m, _ = rewrite_nugget(m, 2, egfr_y1092(), GlueingChoice.of([("EGFR", "EGFR"), ("bnd", "bnd")]))
        assert m.next_id == 3

    def test_never_deletes_premodel_nodes(self):
        rng = random.Random(5)
        pool = [egfr_shc, egfr_grb2, egfr_y1092, shc_grb2, kinase_mod]
        for _ in range(20):
            m = empty_model()
            for build in rng.sample(pool, rng.randint(1, len(pool))):
                n = build()
                seeds = [(x, x) for x in ("EGFR", "Grb2", "Shc")
                         if x in n.graph.nodes and x in m.premodel.graph.nodes and rng.random() < 0.7]
                before = set(m.premodel.graph.nodes)
                m2 = add_nugget(m, n, GlueingChoice.of(seeds))
                assert before <= set(m2.premodel.graph.nodes)
                assert len(m2.nuggets) == len(m.nuggets) + 1
                assert_factorizes(m2)
                m = m2


class TestUnification:
    def test_grb2_and_bnd_seeds(self):
        n, new = update_walkthrough()["base"][0].nuggets[1].graph, shc_grb2()
        h_new, h_old = canonical_unification(new, n, [("Grb2", "Grb2"), ("bnd", "bnd")])
        glued = h_new.cod
        assert h_new.mapping["SH2"] == h_old.mapping["SH2"]
        assert h_new.mapping["bnd.s2"] == h_old.mapping["bnd.s2"]
        assert h_new.mapping["bnd.s1"] == h_old.mapping["bnd.s1"]
        src = h_old.mapping["bnd.s1"]
        assert glued.e_in(src) == {h_old.mapping["EGFR"], h_new.mapping["Shc"]}

    def test_disjoint_without_seeds(self):
        a, b = egfr_shc(), two_flag_agent(1)
        h_a, h_b = canonical_unification(a, b, [])
        assert len(h_a.cod.nodes) == len(a.graph.nodes) + len(b.graph.nodes)

    def test_residue_matched_by_loc(self):
        pairs = dict(unification_pairs(egfr_y1092(), egfr_y1092(), [("EGFR", "EGFR")]))
        assert pairs["EGFR.r1092"] == "EGFR.r1092"
        assert pairs["EGFR.r1092.loc"] == "EGFR.r1092.loc"
        assert pairs["EGFR.r1092.phos"] == "EGFR.r1092.phos"

    def test_ambiguous_flags(self):
        one, two = two_flag_agent(1), two_flag_agent(2)
        # enumeration oracle: injective value-compatible matchings of the single flag
        flags_two = [n for n in two.graph.nodes if two.kind(n) == "flag"]
        expected = len(list(itertools.permutations(flags_two, 1)))
        with pytest.raises(AmbiguousUnification) as exc:
            unification_pairs(one, two, [("A", "A")])
        assert len(exc.value.extensions) == expected == 2
        assert "2 maximal unifications" in str(exc.value)

    def test_seed_resolves_ambiguity(self):
        pairs = dict(unification_pairs(two_flag_agent(1), two_flag_agent(2), [("A", "A"), ("A.f0", "A.f1")]))
        assert pairs["A.f0"] == "A.f1"

    def test_conflicting_seeds(self):
        with pytest.raises(UnificationError):
            unification_pairs(egfr_shc(), egfr_shc(), [("EGFR", "EGFR"), ("Shc", "EGFR")])


class TestUpdate:
    def test_keep_adds_residue(self):
        m, t = update_walkthrough()["keep"]
        g = m.nuggets[1].graph
        assert {"EGFR.phos", "EGFR.r1092", "EGFR.r1092.phos"} <= g.graph.nodes
        assert len(t.added_nodes) == 4 and not t.deleted_nodes
        assert_factorizes(m)

    def test_deprecate_removes_agent_flag(self):
        w = update_walkthrough()
        m, t = w["deprecate"]
        g = m.nuggets[1].graph
        assert "EGFR.phos" not in g.graph.nodes and "EGFR.r1092.phos" in g.graph.nodes
        assert t.deleted_nodes == ["EGFR.phos"]
        # still referenced by the MOD nugget, so retained in the pre-model
        assert "EGFR.phos" in m.premodel.graph.nodes
        assert_factorizes(m)

    def test_move_keeps_mod_wiring(self):
        w = update_walkthrough()
        m, t = w["move"]
        dep, _ = w["deprecate"]
        revised, revised_dep = m.nuggets[1].graph, dep.nuggets[1].graph
        assert is_isomorphic(revised.graph, revised_dep.graph, revised.kinds, revised_dep.kinds)
        pm = m.premodel
        mod_flag = m.nuggets[2].to_premodel.mapping["EGFR.phos"]
        nugget_flag = m.nuggets[1].to_premodel.mapping[t.preserved["EGFR.phos"]]
        assert mod_flag == nugget_flag
        assert pm.graph.e_out("mod.t") == {mod_flag}
        assert "EGFR.r1092" in pm.graph.s_parents(mod_flag)
        assert_factorizes(m)

    def test_gc_drops_unreferenced(self):
        m = add_nugget(empty_model(), egfr_grb2())
        n = m.nuggets[1].graph.graph
        m2, _ = rewrite_nugget(m, 1, egfr_y1092(), GlueingChoice.of([("EGFR", "EGFR"), ("bnd", "bnd")]),
                               deprecation(n, remove_nodes=["EGFR.phos"]))
        assert "EGFR.phos" not in m2.premodel.graph.nodes

    def test_identity_update_is_noop(self):
        for m in (build_running_model(), update_walkthrough()["base"][0]):
            for i in m.nugget_ids():
                n = m.nuggets[i].graph
                seeds = [(x, x) for x in n.graph.nodes]
                m2, t = rewrite_nugget(m, i, n, GlueingChoice.of(seeds))
                assert t.empty
                assert m2.premodel == m.premodel
                assert m2.nuggets[i].graph.graph == n.graph
                assert len(m2.nuggets) == len(m.nuggets)

    def test_count_invariant(self, running_model):
        assert len(running_model.nuggets) == 2

    def test_stale_id(self, running_model):
        with pytest.raises(StaleNugget):
            update_nugget(running_model, 99, egfr_shc(), GlueingChoice())

    def test_reject_principal_context_merge(self):
        b = GraphBuilder()
        b.agent("EGFR")
        b.agent("Grb2")
        b.agent("Shc")
        b.bnd("bnd", "EGFR", "Shc")
        b.bnd("ctx", "EGFR", "Grb2", is_bnd=1)
        new = b.build()
        m = add_nugget(empty_model(), egfr_shc())
        with pytest.raises(AggregationError):
            rewrite_nugget(m, 1, new, GlueingChoice.of([("ctx", "bnd"), ("ctx.s1", "bnd.s1")]))

    def test_value_deprecation(self):
        b = GraphBuilder()
        b.agent("A")
        b.agent("B")
        b.interval("A.int", "A", 1, 10)
        b.bnd("bnd", "A", "B")
        m = add_nugget(empty_model(), b.build())
        n = m.nuggets[1].graph
        b2 = GraphBuilder()
        b2.agent("A")
        b2.agent("B")
        b2.interval("A.int", "A", 3, 8)
        b2.bnd("bnd", "A", "B")
        dep = deprecation(n.graph, remove_values={"A.int": [Value.interval(1, 10)]})
        m2, t = rewrite_nugget(m, 1, b2.build(), GlueingChoice.of([("A", "A"), ("bnd", "bnd")]), dep)
        assert m2.nuggets[1].graph.graph.values["A.int"] == {Value.interval(3, 8)}
        assert m2.premodel.graph.values["A.int"] == {Value.interval(3, 8)}
        assert t.deleted_values == {"A.int": frozenset({Value.interval(1, 10)})}


class TestPremodelEdits:
    def test_extend_values(self, running_model):
        assert running_model.premodel.graph.values["Grb2.r90.aa"] == {Value.aa("S"), Value.aa("D")}
        assert_factorizes(running_model)

    def test_prune(self):
        m = prune_premodel(build_running_model())
        assert m.premodel == build_running_model().premodel
        m = extend_values(m, "Grb2.r90.aa", [Value.aa("T")])
        assert Value.aa("T") in m.premodel.graph.values["Grb2.r90.aa"]


class TestPersistence:
    def test_roundtrip(self, running_model):
        doc = save_model(running_model)
        back = load_model(json.loads(dumps(doc)))
        assert model_equal(back, running_model)
        assert dumps(save_model(back)) == dumps(doc)

    def test_empty_roundtrip(self):
        back = load_model(save_model(empty_model()))
        assert model_equal(back, empty_model())

    def test_broken_factorization_cites_nugget(self, running_model):
        doc = save_model(running_model)
        doc["nuggets"][1]["typing_to_premodel"]["EGFR"] = "Grb2"
        with pytest.raises(ValidationError) as exc:
            load_model(doc)
        assert Code.FACTORIZATION in exc.value.report.codes
        assert "nugget 2" in str(exc.value)

    def test_version_mismatch(self):
        doc = save_model(empty_model())
        doc["version"] = 99
        with pytest.raises(FormatError):
            load_model(doc)

    def test_malformed(self):
        with pytest.raises(FormatError):
            load_model({"version": 1})

    def test_stable_ordering(self, running_model):
        doc = save_model(running_model)
        assert [n["id"] for n in doc["nuggets"]] == [1, GRB2_NUGGET]
        ids = [n["id"] for n in doc["premodel"]["nodes"]]
        assert ids == sorted(ids)
