"""Command-line interface.

Exit status: 0 success, 1 validation failure, 2 ambiguous glueing, 3 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .graph import GraphError, Value, dumps
from .instantiator import (
    InstantiationError,
    ProteinSelection,
    conflict_table,
    instantiate,
    resolve_agents,
    site_table,
)
from .knowledge_base import (
    AmbiguousUnification,
    GlueingChoice,
    KnowledgeBaseError,
    add_nugget,
    check_model,
    deprecation,
    empty_model,
    extend_values,
    load_model,
    rewrite_nugget,
    save_model,
)
from .metamodel import check_nugget, check_premodel, typed_from_json, typed_to_json

EXIT_OK, EXIT_INVALID, EXIT_AMBIGUOUS, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _read_json(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from exc


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def model_lock(path: str | Path):
    """Advisory exclusive lock on ``<model>.lock`` for the duration of a write."""
    lock = Path(f"{path}.lock")
    try:
        fh = open(lock, "a")
    except OSError as exc:
        raise CliError(f"cannot open lock file {lock}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        try:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise CliError(f"model {path} is locked by another writer", EXIT_IO) from exc
        yield
    finally:
        fh.close()


def _load(path: str):
    return load_model(_read_json(path))


def _store(path: str, model) -> None:
    try:
        write_atomic(path, dumps(save_model(model)))
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from exc


def _pairs(doc, what: str) -> list[tuple]:
    if doc is None:
        return []
    if not isinstance(doc, list) or not all(isinstance(p, list) and len(p) == 2 for p in doc):
        raise CliError(f"{what} must be a list of [new, existing] pairs")
    return [(a, b) for a, b in doc]


def _seed_sections(path: str | None) -> tuple[list, list]:
    if path is None:
        return [], []
    doc = _read_json(path)
    if isinstance(doc, list):
        return _pairs(doc, "seeds"), []
    if not isinstance(doc, dict):
        raise CliError("seeds file must be a list or an object")
    return _pairs(doc.get("nugget"), "nugget seeds"), _pairs(doc.get("premodel"), "premodel seeds")


# -- commands -------------------------------------------------------------------------


def cmd_validate(args) -> int:
    doc = _read_json(args.path)
    kind = args.kind
    if kind == "auto":
        kind = "model" if isinstance(doc, dict) and "nuggets" in doc else "nugget"
    if kind == "model":
        model = load_model(doc)
        rep = check_model(model)
    else:
        tg = typed_from_json(doc)
        rep = check_nugget(tg) if kind == "nugget" else check_premodel(tg)
    print(rep)
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_init(args) -> int:
    if Path(args.model).exists() and not args.force:
        raise CliError(f"{args.model} exists (use --force to overwrite)", EXIT_IO)
    with model_lock(args.model):
        _store(args.model, empty_model())
    print(f"initialised empty model {args.model}")
    return EXIT_OK


def cmd_add(args) -> int:
    nugget = typed_from_json(_read_json(args.nugget))
    nseeds, pseeds = _seed_sections(args.seeds)
    with model_lock(args.model):
        model = _load(args.model)
        new = add_nugget(model, nugget, GlueingChoice.of(nseeds + pseeds))
        _store(args.model, new)
    grown = len(new.premodel.graph.nodes) - len(model.premodel.graph.nodes)
    print(f"added nugget {model.next_id}; pre-model +{grown} nodes")
    return EXIT_OK


def _deprecation(path: str | None, graph):
    if path is None:
        return None
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise CliError("deprecate file must be an object")
    values = {n: [Value.from_json(v) for v in vs] for n, vs in doc.get("remove_values", {}).items()}
    return deprecation(
        graph,
        doc.get("remove_nodes", []),
        [tuple(e) for e in doc.get("remove_s_edges", [])],
        [tuple(e) for e in doc.get("remove_e_edges", [])],
        values,
    )


def cmd_aggregate(args) -> int:
    nugget = typed_from_json(_read_json(args.nugget))
    nseeds, pseeds = _seed_sections(args.seeds)
    with model_lock(args.model):
        model = _load(args.model)
        if args.target not in model.nuggets:
            raise CliError(f"no nugget with id {args.target}")
        dep = _deprecation(args.deprecate, model.nuggets[args.target].graph.graph)
        new, trace = rewrite_nugget(model, args.target, nugget, GlueingChoice.of(nseeds), dep, pseeds)
        _store(args.model, new)
    print(f"updated nugget {args.target}: {trace.summary()}")
    return EXIT_OK


def cmd_widen(args) -> int:
    values = [Value.aa(c.strip()) for c in args.aa.split(",") if c.strip()]
    with model_lock(args.model):
        model = _load(args.model)
        _store(args.model, extend_values(model, args.node, values))
    print(f"widened {args.node} by {','.join(v.text() for v in values)}")
    return EXIT_OK


def cmd_instantiate(args) -> int:
    model = _load(args.model)
    agents = resolve_agents(model, [a.strip() for a in args.agents.split(",") if a.strip()])
    wildtype = {}
    if args.wildtype:
        doc = _read_json(args.wildtype)
        if not isinstance(doc, list):
            raise CliError("wildtype file must be a list of {agent, residue, aa}")
        for entry in doc:
            (agent,) = resolve_agents(model, [entry["agent"]])
            wildtype[(agent, entry["residue"])] = entry["aa"]
    result = instantiate(model, ProteinSelection(agents, wildtype), args.merge_cliques, not args.keep_constant_sites)
    text = result.kappa.text()
    if args.out:
        try:
            write_atomic(args.out, text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc.strerror or exc}", EXIT_IO) from exc
        print(f"wrote {args.out} ({len(result.kappa.rules)} rules from nuggets {result.nuggets})")
    else:
        sys.stdout.write(text)
    print("\nsites")
    print(site_table(result.sites))
    print("\nconflicts")
    print(conflict_table(result.conflicts, result.sites))
    for line in result.sites.collisions:
        print(f"note: {line}")
    return EXIT_OK


def cmd_example(args) -> int:
    from . import running_example as ex

    out = Path(args.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        shc_int, grb2_int = (ex.SHC_FOOTPRINT, ex.GRB2_FOOTPRINT) if args.intervals else (None, None)
        files = {
            "egfr_shc.json": typed_to_json(ex.egfr_shc(shc_int)),
            "egfr_grb2.json": typed_to_json(ex.egfr_grb2(grb2_int)),
            "egfr_y1092.json": typed_to_json(ex.egfr_y1092()),
            "shc_grb2.json": typed_to_json(ex.shc_grb2()),
            "seeds_grb2.json": {"premodel": [["EGFR", "EGFR"]]},
            "seeds_y1092.json": {"nugget": [["EGFR", "EGFR"], ["Grb2", "Grb2"], ["bnd", "bnd"]]},
            "seeds_shc.json": {"nugget": [["Grb2", "Grb2"], ["bnd", "bnd"]], "premodel": [["Shc", "Shc"]]},
            "wildtype.json": [{"agent": "Grb2", "residue": "Grb2.r90", "aa": "S"}],
            "model.json": save_model(ex.build_running_model(args.intervals)),
        }
        for name, doc in files.items():
            write_atomic(out / name, dumps(doc))
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc.strerror or exc}", EXIT_IO) from exc
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nugget-forge", description="Curate interaction nuggets and compile them to Kappa.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a nugget, pre-model or model file")
    v.add_argument("path")
    v.add_argument("--as", dest="kind", choices=("auto", "nugget", "premodel", "model"), default="auto")
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("init", help="create an empty model file")
    i.add_argument("--model", required=True)
    i.add_argument("--force", action="store_true")
    i.set_defaults(func=cmd_init)

    a = sub.add_parser("add", help="add a nugget, glueing it onto the pre-model")
    a.add_argument("--model", required=True)
    a.add_argument("--nugget", required=True)
    a.add_argument("--seeds", help="JSON: [[nugget node, pre-model node], ...] or {\"premodel\": [...]}")
    a.set_defaults(func=cmd_add)

    g = sub.add_parser("aggregate", help="update an existing nugget with new information")
    g.add_argument("--model", required=True)
    g.add_argument("--target", required=True, type=int, help="id of the nugget to update")
    g.add_argument("--nugget", required=True)
    g.add_argument("--seeds", help="JSON: {\"nugget\": [[new, old], ...], \"premodel\": [[new, pre-model], ...]}")
    g.add_argument("--deprecate", help="JSON: {remove_nodes, remove_s_edges, remove_e_edges, remove_values}")
    g.set_defaults(func=cmd_aggregate)

    w = sub.add_parser("widen", help="admit more amino acids at a pre-model aa attribute")
    w.add_argument("--model", required=True)
    w.add_argument("--node", required=True)
    w.add_argument("--aa", required=True, help="comma-separated one-letter codes")
    w.set_defaults(func=cmd_widen)

    k = sub.add_parser("instantiate", help="compile the model to Kappa for a set of agents")
    k.add_argument("--model", required=True)
    k.add_argument("--agents", required=True, help="comma-separated pre-model agent ids or labels")
    k.add_argument("--wildtype", help="JSON: [{agent, residue, aa}, ...]")
    k.add_argument("--merge-cliques", action="store_true", help="conflate isolated cliques of conflicting sites")
    k.add_argument("--keep-constant-sites", action="store_true",
                   help="reify residues and flags even when their value cannot vary")
    k.add_argument("--out")
    k.set_defaults(func=cmd_instantiate)

    e = sub.add_parser("example", help="write the EGFR/Grb2/Shc example files")
    e.add_argument("dir")
    e.add_argument("--intervals", action="store_true", help="give EGFR overlapping footprints")
    e.set_defaults(func=cmd_example)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AmbiguousUnification as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("add seeds to choose one of the extensions above", file=sys.stderr)
        return EXIT_AMBIGUOUS
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KnowledgeBaseError, InstantiationError, GraphError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
