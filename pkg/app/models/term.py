"""
簡單型別高階語法的核心：型別、項、目標與定理。

項是不可變的值，可以在執行緒之間共用。項的結構相等（==）不等於 alpha 相等，
快取、迴圈偵測與假設比對一律使用 alpha_equal / alpha_key。
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from app.errors import SubstitutionError, TermError

LOGICAL_CONSTANTS = frozenset({"!", "?", "/\\", "\\/", "==>", "~", "<=>"})
BINDERS = frozenset({"!", "?"})


@dataclass(frozen=True)
class Type:
    name: str
    args: Tuple["Type", ...] = ()

    def __post_init__(self):
        arity = {"fun": 2, "bool": 0, "num": 0, "list": 1}.get(self.name)
        if arity is not None and len(self.args) != arity:
            raise TermError(f"type constructor {self.name} expects {arity} arguments, got {len(self.args)}")

    @property
    def is_fun(self) -> bool:
        return self.name == "fun"

    @property
    def domain(self) -> "Type":
        return self.args[0]

    @property
    def codomain(self) -> "Type":
        return self.args[1]

    def constructors(self) -> FrozenSet[str]:
        """型別中出現的所有型別建構子名稱"""
        names = {self.name}
        for arg in self.args:
            names |= arg.constructors()
        return frozenset(names)

    def __str__(self):
        from app.utils.syntax import print_type
        return print_type(self)


BOOL = Type("bool")
NUM = Type("num")


def fun_ty(domain: Type, codomain: Type) -> Type:
    return Type("fun", (domain, codomain))


def list_ty(element: Type) -> Type:
    return Type("list", (element,))


class Term:
    """項的共同基底；具體形式為 Var / Const / App / Abs"""
    ty: Type

    def __str__(self):
        from app.utils.syntax import print_term
        return print_term(self)


@dataclass(frozen=True, repr=False)
class Var(Term):
    name: str
    ty: Type

    def __repr__(self):
        return f"Var({self.name!r}, {self.ty})"


@dataclass(frozen=True, repr=False)
class Const(Term):
    name: str
    ty: Type

    def __repr__(self):
        return f"Const({self.name!r}, {self.ty})"


@dataclass(frozen=True, repr=False)
class App(Term):
    fn: Term
    arg: Term
    ty: Type = field(init=False, compare=False)

    def __post_init__(self):
        fn_ty = self.fn.ty
        if not fn_ty.is_fun:
            raise TermError(f"cannot apply a term of type {fn_ty}")
        if fn_ty.domain != self.arg.ty:
            raise TermError(f"argument of type {self.arg.ty} given where {fn_ty.domain} is expected")
        object.__setattr__(self, "ty", fn_ty.codomain)

    def __repr__(self):
        return f"App({self.fn!r}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Abs(Term):
    bound: Var
    body: Term
    ty: Type = field(init=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.bound, Var):
            raise TermError("abstraction must bind a variable")
        object.__setattr__(self, "ty", fun_ty(self.bound.ty, self.body.ty))

    def __repr__(self):
        return f"Abs({self.bound!r}, {self.body!r})"


TRUE = Const("T", BOOL)
FALSE = Const("F", BOOL)
ZERO = Const("0", NUM)
SUC = Const("SUC", fun_ty(NUM, NUM))
NUM_LIST = list_ty(NUM)
NIL = Const("NIL", NUM_LIST)
CONS = Const("CONS", fun_ty(NUM, fun_ty(NUM_LIST, NUM_LIST)))

_CONNECTIVE_TY = fun_ty(BOOL, fun_ty(BOOL, BOOL))


def connective(name: str) -> Const:
    return Const(name, _CONNECTIVE_TY)


NEG = Const("~", fun_ty(BOOL, BOOL))


# ---------------------------------------------------------------------------
# 建構與拆解
# ---------------------------------------------------------------------------

def mk_app(fn: Term, *args: Term) -> Term:
    term = fn
    for arg in args:
        term = App(term, arg)
    return term


def strip_app(term: Term) -> Tuple[Term, List[Term]]:
    """把 App 串列攤平成 (head, [arg1, ..., argn])"""
    args = []
    while isinstance(term, App):
        args.append(term.arg)
        term = term.fn
    args.reverse()
    return term, args


def mk_eq(lhs: Term, rhs: Term) -> Term:
    if lhs.ty != rhs.ty:
        raise TermError(f"equation sides differ in type: {lhs.ty} vs {rhs.ty}")
    eq = Const("=", fun_ty(lhs.ty, fun_ty(lhs.ty, BOOL)))
    return App(App(eq, lhs), rhs)


def mk_binary(name: str, lhs: Term, rhs: Term) -> Term:
    return App(App(connective(name), lhs), rhs)


def mk_conj(lhs: Term, rhs: Term) -> Term:
    return mk_binary("/\\", lhs, rhs)


def mk_disj(lhs: Term, rhs: Term) -> Term:
    return mk_binary("\\/", lhs, rhs)


def mk_imp(lhs: Term, rhs: Term) -> Term:
    return mk_binary("==>", lhs, rhs)


def mk_iff(lhs: Term, rhs: Term) -> Term:
    return mk_binary("<=>", lhs, rhs)


def mk_neg(term: Term) -> Term:
    return App(NEG, term)


def mk_binder(quantifier: str, var: Var, body: Term) -> Term:
    if body.ty != BOOL:
        raise TermError(f"quantified body must be boolean, got {body.ty}")
    q = Const(quantifier, fun_ty(fun_ty(var.ty, BOOL), BOOL))
    return App(q, Abs(var, body))


def mk_forall(var: Var, body: Term) -> Term:
    return mk_binder("!", var, body)


def mk_exists(var: Var, body: Term) -> Term:
    return mk_binder("?", var, body)


def list_mk_forall(variables: Iterable[Var], body: Term) -> Term:
    for var in reversed(list(variables)):
        body = mk_forall(var, body)
    return body


def mk_suc(term: Term) -> Term:
    return App(SUC, term)


def mk_cons(head: Term, tail: Term) -> Term:
    return App(App(CONS, head), tail)


def dest_binary(term: Term, name: str) -> Optional[Tuple[Term, Term]]:
    """若 term 形如 `l name r` 則回傳 (l, r)，否則 None"""
    if isinstance(term, App) and isinstance(term.fn, App):
        head = term.fn.fn
        if isinstance(head, Const) and head.name == name:
            return term.fn.arg, term.arg
    return None


def dest_eq(term: Term) -> Optional[Tuple[Term, Term]]:
    return dest_binary(term, "=")


def dest_neg(term: Term) -> Optional[Term]:
    if isinstance(term, App) and isinstance(term.fn, Const) and term.fn.name == "~":
        return term.arg
    return None


def dest_binder(term: Term, quantifier: Optional[str] = None) -> Optional[Tuple[str, Var, Term]]:
    if isinstance(term, App) and isinstance(term.fn, Const) and term.fn.name in BINDERS \
            and isinstance(term.arg, Abs):
        if quantifier is None or term.fn.name == quantifier:
            return term.fn.name, term.arg.bound, term.arg.body
    return None


def strip_forall(term: Term) -> Tuple[List[Var], Term]:
    variables = []
    while True:
        parts = dest_binder(term, "!")
        if parts is None:
            return variables, term
        variables.append(parts[1])
        term = parts[2]


def is_const(term: Term, name: str) -> bool:
    return isinstance(term, Const) and term.name == name


# ---------------------------------------------------------------------------
# 自由變數、代換、alpha 相等
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def free_vars(term: Term) -> FrozenSet[Var]:
    if isinstance(term, Var):
        return frozenset((term,))
    if isinstance(term, Const):
        return frozenset()
    if isinstance(term, App):
        return free_vars(term.fn) | free_vars(term.arg)
    return free_vars(term.body) - {term.bound}


def variant(var: Var, avoid: Iterable[str]) -> Var:
    """在名稱後面加上 prime，直到不與 avoid 衝突"""
    taken = set(avoid)
    name = var.name
    while name in taken:
        name += "'"
    return var if name == var.name else Var(name, var.ty)


def subst(term: Term, binding: Dict[Var, Term]) -> Term:
    """同時且避免捕獲的代換"""
    for var, replacement in binding.items():
        if var.ty != replacement.ty:
            raise SubstitutionError(
                f"cannot substitute {replacement.ty} term for variable {var.name}:{var.ty}")
    binding = {var: replacement for var, replacement in binding.items() if var != replacement}
    if not binding:
        return term
    return _subst(term, binding)


def _subst(term: Term, binding: Dict[Var, Term]) -> Term:
    if isinstance(term, Var):
        return binding.get(term, term)
    if isinstance(term, Const):
        return term
    if isinstance(term, App):
        fn = _subst(term.fn, binding)
        arg = _subst(term.arg, binding)
        if fn is term.fn and arg is term.arg:
            return term
        return App(fn, arg)
    body_free = free_vars(term.body)
    relevant = {var: rep for var, rep in binding.items() if var != term.bound and var in body_free}
    if not relevant:
        return term
    incoming = set()
    for replacement in relevant.values():
        incoming |= {v.name for v in free_vars(replacement)}
    if term.bound.name in incoming:
        avoid = incoming | {v.name for v in body_free} | {v.name for v in relevant}
        fresh = variant(term.bound, avoid)
        return Abs(fresh, _subst(term.body, {**relevant, term.bound: fresh}))
    return Abs(term.bound, _subst(term.body, relevant))


def alpha_key(term: Term, env: Tuple[Var, ...] = ()) -> tuple:
    """alpha 不變的可雜湊鍵（de Bruijn 表示）"""
    if isinstance(term, Var):
        for depth, bound in enumerate(reversed(env)):
            if bound == term:
                return ("b", depth)
        return ("v", term.name, term.ty)
    if isinstance(term, Const):
        return ("c", term.name, term.ty)
    if isinstance(term, App):
        return ("a", alpha_key(term.fn, env), alpha_key(term.arg, env))
    return ("l", term.bound.ty, alpha_key(term.body, env + (term.bound,)))


def alpha_equal(a: Term, b: Term) -> bool:
    if a is b:
        return True
    return _alpha_eq(a, b, {}, {})


def _alpha_eq(a: Term, b: Term, left: Dict[Var, int], right: Dict[Var, int]) -> bool:
    if isinstance(a, Var) and isinstance(b, Var):
        la, rb = left.get(a), right.get(b)
        if la is None and rb is None:
            return a == b
        return la == rb
    if isinstance(a, Const) and isinstance(b, Const):
        return a == b
    if isinstance(a, App) and isinstance(b, App):
        return _alpha_eq(a.fn, b.fn, left, right) and _alpha_eq(a.arg, b.arg, left, right)
    if isinstance(a, Abs) and isinstance(b, Abs):
        if a.bound.ty != b.bound.ty:
            return False
        level = len(left)
        return _alpha_eq(a.body, b.body, {**left, a.bound: level}, {**right, b.bound: level})
    return False


def occurs_in(sub: Term, term: Term) -> bool:
    """sub 是否（alpha 意義下）出現在 term 中且未被綁定捕獲"""
    if alpha_equal(sub, term):
        return True
    if isinstance(term, App):
        return occurs_in(sub, term.fn) or occurs_in(sub, term.arg)
    if isinstance(term, Abs):
        if term.bound in free_vars(sub):
            return False
        return occurs_in(sub, term.body)
    return False


def replace_all(term: Term, old: Term, new: Term) -> Term:
    """把 term 中所有（不受捕獲的）old 換成 new"""
    if alpha_equal(term, old):
        return new
    if isinstance(term, App):
        fn, arg = replace_all(term.fn, old, new), replace_all(term.arg, old, new)
        return term if fn is term.fn and arg is term.arg else App(fn, arg)
    if isinstance(term, Abs):
        if term.bound in free_vars(old):
            return term
        if term.bound in free_vars(new):
            fresh = variant(term.bound, {v.name for v in free_vars(new) | free_vars(term.body)})
            body = _subst(term.body, {term.bound: fresh})
            return Abs(fresh, replace_all(body, old, new))
        body = replace_all(term.body, old, new)
        return term if body is term.body else Abs(term.bound, body)
    return term


def subterms(term: Term, curried: bool = False) -> List[Term]:
    """
    依前序列出所有子項位置。

    :param curried: False 時把 App 串列視為 head + 完整參數（完全套用檢視），
                    True 時列出每個 App 節點，包含部分套用與 head 本身
    """
    out: List[Term] = []
    if curried:
        _walk_curried(term, out)
    else:
        _walk_applied(term, out)
    return out


def _walk_curried(term: Term, out: List[Term]):
    out.append(term)
    if isinstance(term, App):
        _walk_curried(term.fn, out)
        _walk_curried(term.arg, out)
    elif isinstance(term, Abs):
        _walk_curried(term.body, out)


def _walk_applied(term: Term, out: List[Term]):
    out.append(term)
    binder = dest_binder(term)
    if binder is not None:
        _walk_applied(binder[2], out)
        return
    if isinstance(term, App):
        head, args = strip_app(term)
        if isinstance(head, Abs):
            _walk_applied(head, out)
        for arg in args:
            _walk_applied(arg, out)
    elif isinstance(term, Abs):
        _walk_applied(term.body, out)


def type_check(term: Term) -> None:
    """重新檢查整個項的型別（建構時已檢查，這裡供測試與讀入資料使用）"""
    if isinstance(term, App):
        type_check(term.fn)
        type_check(term.arg)
        App(term.fn, term.arg)
    elif isinstance(term, Abs):
        type_check(term.body)


# ---------------------------------------------------------------------------
# 目標與定理
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Goal:
    assumptions: Tuple[Term, ...]
    conclusion: Term

    def __post_init__(self):
        object.__setattr__(self, "assumptions", tuple(self.assumptions))
        for term in (*self.assumptions, self.conclusion):
            if term.ty != BOOL:
                raise TermError(f"goal member is not boolean: {term.ty}")

    @cached_property
    def key(self) -> tuple:
        return alpha_key(self.conclusion), frozenset(alpha_key(a) for a in self.assumptions)

    def __eq__(self, other):
        if not isinstance(other, Goal):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def free_vars(self) -> FrozenSet[Var]:
        result = free_vars(self.conclusion)
        for assumption in self.assumptions:
            result |= free_vars(assumption)
        return result

    def with_conclusion(self, conclusion: Term, extra: Iterable[Term] = ()) -> "Goal":
        return Goal(add_assumptions(self.assumptions, extra), conclusion)

    def has_assumption(self, term: Term) -> bool:
        return any(alpha_equal(term, a) for a in self.assumptions)

    def __str__(self):
        from app.utils.syntax import print_goal
        return print_goal(self)

    def __repr__(self):
        return f"Goal({str(self)!r})"


def add_assumptions(assumptions: Tuple[Term, ...], extra: Iterable[Term]) -> Tuple[Term, ...]:
    result = list(assumptions)
    for term in extra:
        if not any(alpha_equal(term, a) for a in result):
            result.append(term)
    return tuple(result)


def goal_set_key(goals: Iterable[Goal]) -> FrozenSet[tuple]:
    return frozenset(goal.key for goal in goals)


@dataclass(frozen=True)
class Theorem:
    name: str
    statement: Goal
    dependencies: Tuple[str, ...] = ()
    sequence_index: int = 0
    theory: str = ""
    is_axiom: bool = False

    def __post_init__(self):
        if self.statement.assumptions:
            raise TermError(f"theorem {self.name} has assumptions")
        object.__setattr__(self, "dependencies", tuple(self.dependencies))
