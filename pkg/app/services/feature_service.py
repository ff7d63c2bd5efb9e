"""
目標的特徵抽取：常數、型別建構子、一階子項、變數名稱、頂層邏輯結構、高階子項六類。
"""
import logging
from functools import lru_cache
from typing import FrozenSet, Iterable, NamedTuple, Optional, Set, Tuple

from app.models.term import (
    App, Const, Goal, LOGICAL_CONSTANTS, Term, Theorem, Var, dest_binder, dest_neg, strip_app,
    subterms,
)
from app.utils.syntax import print_term

logger = logging.getLogger(__name__)

FEATURE_CLASSES = ("const", "tycon", "fosub", "var", "top", "hosub")
ALL_CLASSES = frozenset(FEATURE_CLASSES)

_BINARY_LOGICAL = ("/\\", "\\/", "==>", "<=>")


class Feature(NamedTuple):
    kind: str
    payload: str

    def __str__(self):
        return f"{self.kind}:{self.payload}"

    @classmethod
    def parse(cls, text: str) -> "Feature":
        kind, sep, payload = text.partition(":")
        if not sep or kind not in ALL_CLASSES:
            raise ValueError(f"malformed feature {text!r}")
        return cls(kind, payload)


FeatureSet = FrozenSet[Feature]


def _walk_atoms(term: Term, consts: Set[str], typed: list, names: Set[str]):
    if isinstance(term, Const):
        consts.add(term.name)
        typed.append(term.ty)
    elif isinstance(term, Var):
        names.add(term.name)
        typed.append(term.ty)
    elif isinstance(term, App):
        _walk_atoms(term.fn, consts, typed, names)
        _walk_atoms(term.arg, consts, typed, names)
    else:
        names.add(term.bound.name)
        typed.append(term.bound.ty)
        _walk_atoms(term.body, consts, typed, names)


def _skeleton(term: Term):
    """頂層邏輯骨架：回傳 (文字, 是否為原子 A)"""
    binder = dest_binder(term)
    if binder is not None:
        body, atomic = _skeleton(binder[2])
        return f"{binder[0]} {body if atomic else f'({body})'}", False
    negated = dest_neg(term)
    if negated is not None:
        inner, atomic = _skeleton(negated)
        return f"~{inner if atomic else f'({inner})'}", False
    head, args = strip_app(term)
    if isinstance(head, Const) and head.name in _BINARY_LOGICAL and len(args) == 2:
        parts = []
        for arg in args:
            text, atomic = _skeleton(arg)
            parts.append(text if atomic else f"({text})")
        return f"{parts[0]} {head.name} {parts[1]}", False
    return "A", True


def _skeleton_subtrees(term: Term, out: Set[str]):
    text, atomic = _skeleton(term)
    out.add(text)
    if atomic:
        return
    binder = dest_binder(term)
    if binder is not None:
        _skeleton_subtrees(binder[2], out)
        return
    negated = dest_neg(term)
    if negated is not None:
        _skeleton_subtrees(negated, out)
        return
    for arg in strip_app(term)[1]:
        _skeleton_subtrees(arg, out)


def features_of_term(term: Term, classes: FrozenSet[str] = ALL_CLASSES) -> Set[Feature]:
    features: Set[Feature] = set()
    consts: Set[str] = set()
    names: Set[str] = set()
    typed: list = []
    _walk_atoms(term, consts, typed, names)

    if "const" in classes:
        features |= {Feature("const", name) for name in consts}
    if "tycon" in classes:
        tycons = set()
        for ty in typed:
            tycons |= ty.constructors()
        features |= {Feature("tycon", name) for name in tycons}
    if "var" in classes:
        features |= {Feature("var", name) for name in names}
    if "fosub" in classes:
        features |= {Feature("fosub", print_term(sub, placeholder=True)) for sub in subterms(term)}
    if "hosub" in classes:
        features |= {Feature("hosub", print_term(sub, placeholder=True))
                     for sub in subterms(term, curried=True)}
    if "top" in classes:
        skeletons: Set[str] = set()
        _skeleton_subtrees(term, skeletons)
        features |= {Feature("top", text) for text in skeletons}
    return features


def features_of_goal(goal: Goal, classes: Optional[Iterable[str]] = None) -> FeatureSet:
    """
    抽取目標的特徵集合；結論與所有假設的特徵合併成一個集合。

    :param classes: 只保留這些類別（None 表示全部）
    """
    classes = ALL_CLASSES if classes is None else frozenset(classes)
    # 以結構（而非 alpha）相等做快取，var 類特徵依賴綁定變數名稱
    return _features_of_terms((*goal.assumptions, goal.conclusion), classes)


@lru_cache(maxsize=16384)
def _features_of_terms(terms: Tuple[Term, ...], classes: FrozenSet[str]) -> FeatureSet:
    features: Set[Feature] = set()
    for term in terms:
        features |= features_of_term(term, classes)
    return frozenset(features)


def features_of_statement(theorem: Theorem, classes: Optional[Iterable[str]] = None) -> FeatureSet:
    return features_of_goal(theorem.statement, classes)


def mask(features: Iterable[Feature], classes: Optional[Iterable[str]]) -> FeatureSet:
    if classes is None:
        return frozenset(features)
    classes = frozenset(classes)
    return frozenset(f for f in features if f.kind in classes)


def is_logical_skeleton(payload: str) -> bool:
    """top 類特徵只能含邏輯常數與 A"""
    stripped = payload
    for symbol in sorted(LOGICAL_CONSTANTS, key=len, reverse=True):
        stripped = stripped.replace(symbol, "")
    return set(stripped) <= set("A() ")


def serialize(features: Iterable[Feature]) -> str:
    return ",".join(sorted(str(f) for f in features))


def deserialize(text: str) -> FeatureSet:
    if not text:
        return frozenset()
    return frozenset(Feature.parse(item) for item in text.split(","))
