"""Validation reports and the error codes shared by every checker."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator


class Code(str, enum.Enum):
    # structural graph invariants
    DANGLING_EDGE = "DANGLING_EDGE"
    VALUES_NOT_TOTAL = "VALUES_NOT_TOTAL"
    S_CYCLE = "S_CYCLE"
    # homomorphisms and typings
    NOT_TOTAL = "NOT_TOTAL"
    BAD_CODOMAIN = "BAD_CODOMAIN"
    S_EDGE_NOT_PRESERVED = "S_EDGE_NOT_PRESERVED"
    E_EDGE_NOT_PRESERVED = "E_EDGE_NOT_PRESERVED"
    VALUE_INCLUSION = "VALUE_INCLUSION"
    # typed-graph invariants
    DUPLICATE_ATTRIBUTE = "DUPLICATE_ATTRIBUTE"
    EMPTY_VALUES = "EMPTY_VALUES"
    # nugget clauses, one code per clause
    NOT_CONNECTED = "A"
    NOT_SINGLETON = "B"
    NOT_TRANSITIVE = "C"
    PRINCIPAL_ACTION = "D"
    CONTEXT_ACTION = "E"
    BND_SOURCES = "F"
    MOD_ARITY = "G"
    LINK_KIND = "H"
    ORPHAN_SCAFFOLD = "ORPHAN_SCAFFOLD"
    # models
    FACTORIZATION = "FACTORIZATION"
    BAD_NUGGET = "BAD_NUGGET"
    BAD_PREMODEL = "BAD_PREMODEL"


@dataclass(frozen=True)
class Issue:
    code: Code
    message: str
    nodes: tuple[Hashable, ...] = ()

    def __str__(self) -> str:
        return f"[{self.code.value}] {self.message}"


@dataclass
class Report:
    """An ordered list of issues; empty means the subject is valid."""

    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    @property
    def codes(self) -> set[Code]:
        return {i.code for i in self.issues}

    def add(self, code: Code, message: str, *nodes: Hashable) -> None:
        self.issues.append(Issue(code, message, tuple(nodes)))

    def extend(self, issues: Iterable[Issue]) -> None:
        self.issues.extend(issues)

    def __iter__(self) -> Iterator[Issue]:
        return iter(self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(str(i) for i in self.issues)
