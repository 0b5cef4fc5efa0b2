"""The EGFR / Grb2 / Shc example knowledge base, built step by step.

Used by the acceptance tests and by ``nugget-forge demo``.
"""

from __future__ import annotations

from .graph import Value
from .knowledge_base import (
    GlueingChoice,
    Model,
    add_nugget,
    deprecation,
    empty_model,
    extend_values,
    rewrite_nugget,
)
from .metamodel import GraphBuilder, TypedGraph


def egfr_shc(egfr_int: tuple[int, int] | None = None) -> TypedGraph:
    """EGFR binds Shc."""
    b = GraphBuilder()
    b.agent("EGFR")
    b.agent("Shc")
    if egfr_int:
        b.interval("EGFR.int", "EGFR", *egfr_int)
    b.bnd("bnd", "EGFR", "Shc")
    return b.build()


def egfr_grb2(egfr_int: tuple[int, int] | None = None) -> TypedGraph:
    """EGFR binds the SH2 domain of Grb2 provided EGFR is phosphorylated and Grb2 residue 90 is S."""
    b = GraphBuilder()
    b.agent("EGFR")
    b.flag("EGFR.phos", "EGFR", "phos", 1)
    if egfr_int:
        b.interval("EGFR.int", "EGFR", *egfr_int)
    b.agent("Grb2")
    b.region("SH2", "Grb2")
    b.residue("Grb2.r90", "Grb2", loc=90, aa="S")
    b.bnd("bnd", "EGFR", "SH2")
    return b.build()


def egfr_y1092() -> TypedGraph:
    """EGFR binds Grb2 provided EGFR is phosphorylated on Y1092."""
    b = GraphBuilder()
    b.agent("EGFR")
    b.residue("EGFR.r1092", "EGFR", loc=1092, aa="Y")
    b.flag("EGFR.r1092.phos", "EGFR.r1092", "phos", 1)
    b.agent("Grb2")
    b.region("SH2", "Grb2")
    b.bnd("bnd", "EGFR", "SH2")
    return b.build()


def shc_grb2() -> TypedGraph:
    """Tyrosine-phosphorylated Shc binds the SH2 domain of Grb2."""
    b = GraphBuilder()
    b.agent("Shc")
    b.flag("Shc.phos", "Shc", "phos", 1)
    b.agent("Grb2")
    b.region("SH2", "Grb2")
    b.bnd("bnd", "Shc", "SH2")
    return b.build()


def kinase_mod(residue_loc: int | None = None) -> TypedGraph:
    """Kinase K phosphorylates EGFR, on the agent flag or on a residue flag."""
    b = GraphBuilder()
    b.agent("K")
    b.agent("EGFR")
    if residue_loc is None:
        flag = b.flag("EGFR.phos", "EGFR", "phos", 1)
    else:
        b.residue(f"EGFR.r{residue_loc}", "EGFR", loc=residue_loc, aa="Y")
        flag = b.flag(f"EGFR.r{residue_loc}.phos", f"EGFR.r{residue_loc}", "phos", 1)
    b.mod("mod", flag, source="K")
    return b.build()


# EGFR footprints for the overlapping-interval variant
SHC_FOOTPRINT = (1050, 1200)
GRB2_FOOTPRINT = (980, 1100)

# ids the pre-model assigns on the path below
GRB2_NUGGET = 2
GRB2_R90_AA = "Grb2.r90.aa"


def build_running_model(intervals: bool = False) -> Model:
    """Two nuggets: EGFR-Shc, and the aggregated "EGFR or Shc binds Grb2 SH2".

    With ``intervals`` EGFR carries overlapping footprints in its two nuggets.
    """
    m = empty_model()
    m = add_nugget(m, egfr_shc(SHC_FOOTPRINT if intervals else None))
    m = add_nugget(m, egfr_grb2(GRB2_FOOTPRINT if intervals else None), GlueingChoice.of([("EGFR", "EGFR")]))
    m, _ = rewrite_nugget(m, GRB2_NUGGET, egfr_y1092(),
                          GlueingChoice.of([("EGFR", "EGFR"), ("Grb2", "Grb2"), ("bnd", "bnd")]))
    m, _ = rewrite_nugget(m, GRB2_NUGGET, shc_grb2(),
                          GlueingChoice.of([("Grb2", "Grb2"), ("bnd", "bnd")]),
                          premodel_seeds=[("Shc", "Shc")])
    return extend_values(m, GRB2_R90_AA, [Value.aa("D")])


WILDTYPE = {("Grb2", "Grb2.r90"): "S"}
SELECTION = ("EGFR", "Grb2", "Shc")


def three_nugget_model() -> Model:
    """EGFR-Shc, EGFR-Grb2 and Shc-Grb2 kept as separate nuggets sharing one BND."""
    m = empty_model()
    m = add_nugget(m, egfr_shc())
    m = add_nugget(m, egfr_grb2(), GlueingChoice.of([("EGFR", "EGFR")]))
    bnd2 = m.nuggets[GRB2_NUGGET].to_premodel.mapping["bnd"]
    m = add_nugget(m, shc_grb2(), GlueingChoice.of([("Shc", "Shc"), ("Grb2", "Grb2"), ("bnd", bnd2)]))
    return extend_values(m, GRB2_R90_AA, [Value.aa("D")])


def update_walkthrough() -> dict:
    """The three single-nugget updates: keep, deprecate, and move the EGFR flag.

    Each entry maps to ``(model, trace)``; the base model also holds a MOD
    nugget acting on the agent-level flag.
    """
    base = empty_model()
    base = add_nugget(base, egfr_grb2())
    base = add_nugget(base, kinase_mod(), GlueingChoice.of([("EGFR", "EGFR"), ("EGFR.phos", "EGFR.phos")]))
    seeds = [("EGFR", "EGFR"), ("Grb2", "Grb2"), ("bnd", "bnd")]
    n = base.nuggets[1].graph.graph
    out = {"base": (base, None)}
    out["keep"] = rewrite_nugget(base, 1, egfr_y1092(), GlueingChoice.of(seeds))
    out["deprecate"] = rewrite_nugget(base, 1, egfr_y1092(), GlueingChoice.of(seeds),
                                      deprecation(n, remove_nodes=["EGFR.phos"]))
    out["move"] = rewrite_nugget(base, 1, egfr_y1092(),
                                 GlueingChoice.of(seeds + [("EGFR.r1092.phos", "EGFR.phos")]))
    return out
