"""
小型 hammer：前提選擇加上內建的一階歸結證明器。

子句化把目標的結論取否定，與假設、前提一起轉成合取範式；等號以公理處理
（自反、對稱、遞移與各符號的同餘）。證明器是以 (大小, 年齡) 排序的 given-clause 迴圈。
"""
import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from app.errors import BudgetExceeded, TacticError, UnsupportedFragmentError
from app.models.feature_db import FeatureDb
from app.models.search import HammerConfig
from app.models.tactic import Budget, Subgoals, Tactic, Timeout
from app.models.term import (
    BOOL, Const, FALSE, Goal, TRUE, Term, Theorem, Var, dest_binary, dest_binder, dest_eq,
    dest_neg, free_vars, list_mk_forall, mk_conj, mk_disj, mk_imp, strip_app, subst,
)
from app.services.feature_service import features_of_goal, features_of_statement
from app.services.knn_service import DEFAULT_TAU1, tactic_score_1, weights

logger = logging.getLogger(__name__)

# 一階項：變數為 str，函數套用為 (符號, 參數...)
FoTerm = Union[str, tuple]
Literal = Tuple[bool, tuple]

WEIGHT_LIMIT = 40
MAX_CLAUSES = 20000
# 項語法無法產生的前綴，Skolem 函數不會與使用者的名稱相撞
SKOLEM_PREFIX = "#sk"


@dataclass(frozen=True)
class Clause:
    literals: Tuple[Literal, ...]
    source: str = ""
    parents: Tuple[int, ...] = ()
    id: int = field(default=-1, compare=False)

    @property
    def is_empty(self) -> bool:
        return not self.literals

    def weight(self) -> int:
        return sum(_size(atom) for _, atom in self.literals)

    def __str__(self):
        if not self.literals:
            return "[]"
        return " | ".join(("" if polarity else "~") + _show(atom) for polarity, atom in self.literals)


@dataclass(frozen=True)
class Proof:
    used_premises: Tuple[str, ...]
    clause_count: int
    derivation: Tuple[Clause, ...] = ()


@dataclass(frozen=True)
class GaveUp:
    clause_count: int = 0


def _size(term) -> int:
    if isinstance(term, str):
        return 1
    return 1 + sum(_size(arg) for arg in term[1:])


def _show(term) -> str:
    if isinstance(term, str):
        return term
    if len(term) == 1:
        return term[0]
    return f"{term[0]}({', '.join(_show(arg) for arg in term[1:])})"


# ---------------------------------------------------------------------------
# 前提選擇
# ---------------------------------------------------------------------------

def preselect_theorems(db: FeatureDb, conjecture: Goal, n: int = 500,
                       tau1: float = DEFAULT_TAU1) -> List[Theorem]:
    """
    依特徵相似度排序定理敘述；每個定理被選入時，它的每個相依定理獲得
    「自身分數 / 相依數」的加分，然後重新排序剩下的定理。
    """
    f_o = features_of_goal(conjecture)
    weight = weights(db, f_o, tau1)
    theorems = sorted(db.statements.values(), key=lambda t: (t.sequence_index, t.name))
    scores = {t.name: tactic_score_1(db, f_o, features_of_statement(t), tau1, weight) for t in theorems}
    remaining = {t.name: t for t in theorems}
    selected: List[Theorem] = []
    while remaining and len(selected) < n:
        best = min(remaining.values(), key=lambda t: (-scores[t.name], t.sequence_index, t.name))
        del remaining[best.name]
        selected.append(best)
        deps = [dep for dep in best.dependencies if dep in remaining]
        if best.dependencies:
            bonus = scores[best.name] / len(best.dependencies)
            for dep in deps:
                scores[dep] += bonus
    return selected


def select_premises(preselected: Sequence[Theorem], goal: Goal, n: int, db: FeatureDb,
                    tau1: float = DEFAULT_TAU1) -> List[Theorem]:
    if n <= 0:
        return []
    f_o = features_of_goal(goal)
    weight = weights(db, f_o, tau1)
    ranked = sorted(enumerate(preselected),
                    key=lambda item: (-tactic_score_1(db, f_o, features_of_statement(item[1]), tau1, weight),
                                      item[0]))
    return [theorem for _, theorem in ranked[:n]]


# ---------------------------------------------------------------------------
# 子句化
# ---------------------------------------------------------------------------

class _Clausifier:
    def __init__(self, budget: Optional[Budget]):
        self.budget = budget
        self.variables = itertools.count()
        self.skolems = itertools.count()

    def tick(self):
        if self.budget is not None:
            self.budget.tick()

    def clauses(self, term: Term, positive: bool, env: Dict[Var, FoTerm], universals: Tuple[str, ...]):
        """回傳子句（文字列表）的列表"""
        if term == TRUE:
            return [] if positive else [[]]
        if term == FALSE:
            return [[]] if positive else []
        negated = dest_neg(term)
        if negated is not None:
            return self.clauses(negated, not positive, env, universals)
        for name, both in (("/\\", True), ("\\/", False)):
            parts = dest_binary(term, name)
            if parts is not None:
                left = self.clauses(parts[0], positive, env, universals)
                right = self.clauses(parts[1], positive, env, universals)
                return left + right if both == positive else self.disjoin(left, right)
        parts = dest_binary(term, "==>")
        if parts is not None:
            left = self.clauses(parts[0], not positive, env, universals)
            right = self.clauses(parts[1], positive, env, universals)
            return self.disjoin(left, right) if positive else left + right
        parts = dest_binary(term, "<=>") or self._bool_eq(term)
        if parts is not None:
            a, b = parts
            return self.clauses(mk_conj(mk_imp(a, b), mk_imp(b, a)), positive, env, universals)
        binder = dest_binder(term)
        if binder is not None:
            return self._quantifier(binder, positive, env, universals)
        return [[(positive, self.atom(term, env))]]

    @staticmethod
    def _bool_eq(term: Term):
        parts = dest_eq(term)
        if parts is not None and parts[0].ty == BOOL:
            return parts
        return None

    def _quantifier(self, binder, positive, env, universals):
        quantifier, var, body = binder
        if var.ty == BOOL:
            instances = [subst(body, {var: TRUE}), subst(body, {var: FALSE})]
            combine = mk_conj if quantifier == "!" else mk_disj
            return self.clauses(combine(*instances), positive, env, universals)
        if var.ty.is_fun:
            raise UnsupportedFragmentError(f"quantification over function variable {var.name}")
        universal = (quantifier == "!") == positive
        inner = dict(env)
        if universal:
            name = f"X{next(self.variables)}"
            inner[var] = name
            return self.clauses(body, positive, inner, universals + (name,))
        inner[var] = (f"{SKOLEM_PREFIX}{next(self.skolems)}",) + universals
        return self.clauses(body, positive, inner, universals)

    def disjoin(self, left, right):
        out = []
        for a in left:
            for b in right:
                self.tick()
                out.append(a + b)
                if len(out) > MAX_CLAUSES:
                    raise UnsupportedFragmentError("clause normal form too large")
        return out

    def atom(self, term: Term, env) -> tuple:
        parts = dest_eq(term)
        if parts is not None:
            return ("=", self.term(parts[0], env), self.term(parts[1], env))
        head, args = strip_app(term)
        if isinstance(head, Var) and head in env:
            raise UnsupportedFragmentError(f"quantified predicate variable {head.name}")
        if not isinstance(head, (Var, Const)):
            raise UnsupportedFragmentError("atom with a non-symbol head")
        return (_symbol(head),) + tuple(self.term(arg, env) for arg in args)

    def term(self, term: Term, env) -> FoTerm:
        if term.ty.is_fun:
            raise UnsupportedFragmentError(f"partial application {term}")
        if isinstance(term, Var) and term in env:
            return env[term]
        head, args = strip_app(term)
        if isinstance(head, Var) and head in env:
            raise UnsupportedFragmentError(f"applied bound variable {head.name}")
        if not isinstance(head, (Var, Const)):
            raise UnsupportedFragmentError("lambda abstraction inside a term")
        if term.ty == BOOL and args:
            raise UnsupportedFragmentError(f"formula used as a term argument: {term}")
        return (_symbol(head),) + tuple(self.term(arg, env) for arg in args)


def _symbol(head: Union[Var, Const]) -> str:
    """自由變數以「名稱:型別」為符號，同名不同型別的變數不會被合一"""
    if isinstance(head, Var):
        return f"{head.name}:{head.ty}"
    return head.name


def clausify(goal: Goal, premises: Sequence[Theorem], budget: Optional[Budget] = None) -> List[Clause]:
    """
    前提、假設與結論的否定轉成子句集合；目標中的自由變數視為常數，
    前提中的自由變數視為全稱。
    """
    clausifier = _Clausifier(budget)
    raw: List[Tuple[list, str]] = []
    for theorem in premises:
        statement = theorem.statement.conclusion
        closed = list_mk_forall(sorted(free_vars(statement), key=lambda v: v.name), statement)
        raw += [(c, theorem.name) for c in clausifier.clauses(closed, True, {}, ())]
    for assumption in goal.assumptions:
        raw += [(c, "assumption") for c in clausifier.clauses(assumption, True, {}, ())]
    raw += [(c, "goal") for c in clausifier.clauses(goal.conclusion, False, {}, ())]

    out: List[Clause] = []
    seen = set()
    for literals, source in raw:
        normal = _normalize(literals)
        if normal is None or normal in seen:
            continue
        seen.add(normal)
        out.append(Clause(normal, source))
    if any(atom[0] == "=" for clause in out for _, atom in clause.literals):
        for literals in equality_axioms(out):
            normal = _normalize(literals)
            if normal not in seen:
                seen.add(normal)
                out.append(Clause(normal, "equality"))
    return [Clause(c.literals, c.source, (), i) for i, c in enumerate(out)]


def _symbols(term, functions: Dict[str, int]):
    if isinstance(term, str):
        return
    functions.setdefault(term[0], len(term) - 1)
    for arg in term[1:]:
        _symbols(arg, functions)


def equality_axioms(clauses: Sequence[Clause]) -> List[List[Literal]]:
    functions: Dict[str, int] = {}
    predicates: Dict[str, int] = {}
    for clause in clauses:
        for _, atom in clause.literals:
            if atom[0] != "=":
                predicates.setdefault(atom[0], len(atom) - 1)
            for arg in atom[1:]:
                _symbols(arg, functions)
    axioms = [
        [(True, ("=", "X", "X"))],
        [(False, ("=", "X", "Y")), (True, ("=", "Y", "X"))],
        [(False, ("=", "X", "Y")), (False, ("=", "Y", "Z")), (True, ("=", "X", "Z"))],
    ]
    for symbols, is_predicate in ((functions, False), (predicates, True)):
        for name in sorted(symbols):
            arity = symbols[name]
            for position in range(arity):
                xs = [f"A{i}" for i in range(arity)]
                ys = list(xs)
                ys[position] = "B"
                left, right = (name,) + tuple(xs), (name,) + tuple(ys)
                premise = (False, ("=", xs[position], "B"))
                if is_predicate:
                    axioms.append([premise, (False, left), (True, right)])
                else:
                    axioms.append([premise, (True, ("=", left, right))])
    return axioms


# ---------------------------------------------------------------------------
# 合一與歸結
# ---------------------------------------------------------------------------

def _walk(term, binding):
    while isinstance(term, str) and term in binding:
        term = binding[term]
    return term


def _occurs(var, term, binding) -> bool:
    term = _walk(term, binding)
    if isinstance(term, str):
        return term == var
    return any(_occurs(var, arg, binding) for arg in term[1:])


def unify(a, b, binding: Optional[dict] = None) -> Optional[dict]:
    binding = dict(binding or {})
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        x, y = _walk(x, binding), _walk(y, binding)
        if x == y:
            continue
        if isinstance(x, str):
            if _occurs(x, y, binding):
                return None
            binding[x] = y
        elif isinstance(y, str):
            if _occurs(y, x, binding):
                return None
            binding[y] = x
        elif x[0] != y[0] or len(x) != len(y):
            return None
        else:
            stack.extend(zip(x[1:], y[1:]))
    return binding


def _apply(term, binding):
    term = _walk(term, binding)
    if isinstance(term, str):
        return term
    return (term[0],) + tuple(_apply(arg, binding) for arg in term[1:])


def _rename(term, mapping: Dict[str, str]):
    if isinstance(term, str):
        return mapping.setdefault(term, f"V{len(mapping)}")
    return (term[0],) + tuple(_rename(arg, mapping) for arg in term[1:])


def _normalize(literals) -> Optional[Tuple[Literal, ...]]:
    """去除重複文字並正規化變數名稱；恆真子句回傳 None"""
    unique = sorted(set(literals), key=repr)
    atoms = {}
    for polarity, atom in unique:
        if atoms.get(atom, polarity) != polarity:
            return None
        atoms[atom] = polarity
    mapping: Dict[str, str] = {}
    return tuple((polarity, _rename(atom, mapping)) for polarity, atom in unique)


def _suffix(term, suffix):
    if isinstance(term, str):
        return term + suffix
    return (term[0],) + tuple(_suffix(arg, suffix) for arg in term[1:])


def _resolvents(given: Clause, other: Clause):
    other_literals = [(p, _suffix(atom, "'")) for p, atom in other.literals]
    for i, (p1, a1) in enumerate(given.literals):
        for j, (p2, a2) in enumerate(other_literals):
            if p1 == p2 or a1[0] != a2[0] or len(a1) != len(a2):
                continue
            binding = unify(a1, a2)
            if binding is None:
                continue
            rest = [lit for k, lit in enumerate(given.literals) if k != i]
            rest += [lit for k, lit in enumerate(other_literals) if k != j]
            yield [(p, _apply(atom, binding)) for p, atom in rest]


def _factors(clause: Clause):
    literals = clause.literals
    for i, j in itertools.combinations(range(len(literals)), 2):
        (p1, a1), (p2, a2) = literals[i], literals[j]
        if p1 != p2 or a1[0] != a2[0]:
            continue
        binding = unify(a1, a2)
        if binding is not None:
            yield [(p, _apply(atom, binding)) for k, (p, atom) in enumerate(literals) if k != j]


def resolve(clauses: Sequence[Clause], budget: Budget):
    """
    given-clause 歸結：每次取出 (大小, 年齡) 最小的子句，與所有已啟用子句做二元歸結並做因式分解。

    :return: Proof / GaveUp / Timeout
    """
    store: List[Clause] = []
    seen = set()
    passive: list = []

    def add(literals, source, parents):
        normal = _normalize(literals)
        if normal is None or normal in seen:
            return None
        clause = Clause(normal, source, parents, len(store))
        if clause.weight() > WEIGHT_LIMIT and not clause.is_empty:
            return None
        seen.add(normal)
        store.append(clause)
        heapq.heappush(passive, (clause.weight(), clause.id))
        return clause

    try:
        for clause in clauses:
            budget.tick()
            added = add(clause.literals, clause.source, ())
            if added is not None and added.is_empty:
                return _proof(store, added)
        active: List[Clause] = []
        while passive:
            budget.tick()
            _, given_id = heapq.heappop(passive)
            given = store[given_id]
            active.append(given)
            for literals in _factors(given):
                budget.tick()
                add(literals, "factor", (given.id,))
            for other in active:
                for literals in _resolvents(given, other):
                    budget.tick()
                    new = add(literals, "resolution", (given.id, other.id))
                    if new is not None and new.is_empty:
                        return _proof(store, new)
            if len(store) > MAX_CLAUSES:
                return GaveUp(len(store))
        return GaveUp(len(store))
    except BudgetExceeded:
        return Timeout()


def _proof(store: List[Clause], empty: Clause) -> Proof:
    used_ids, todo = set(), [empty.id]
    while todo:
        current = todo.pop()
        if current in used_ids:
            continue
        used_ids.add(current)
        todo.extend(store[current].parents)
    derivation = tuple(store[i] for i in sorted(used_ids))
    inputs = [c.source for c in derivation if not c.parents]
    premises = tuple(dict.fromkeys(s for s in inputs if s not in ("assumption", "goal", "equality",
                                                                   "factor", "resolution")))
    return Proof(premises, len(store), derivation)


# ---------------------------------------------------------------------------
# hammer 戰術
# ---------------------------------------------------------------------------

def refute(goal: Goal, premises: Sequence[Theorem], budget: Budget) -> Proof:
    clauses = clausify(goal, premises, budget)
    result = resolve(clauses, budget)
    if isinstance(result, Timeout):
        raise BudgetExceeded("prover ran out of budget")
    if isinstance(result, GaveUp):
        raise TacticError(f"prover gave up after {result.clause_count} clauses")
    return result


def hammer_tactic(db: FeatureDb, preselection: Sequence[Theorem], config: HammerConfig,
                  tau1: float = DEFAULT_TAU1) -> Tactic:
    """
    搜尋用的 hammer：每個目標挑選 final_n 個前提後呼叫證明器。
    成功時的證書是 `hammer_tac [實際用到的前提]`，可由戰術庫重播。
    """
    premise_order = {t.name: i for i, t in enumerate(preselection)}

    def run(goal: Goal, budget: Budget):
        premises = select_premises(preselection, goal, config.final_n, db, tau1)
        proof = refute(goal, premises, budget)
        used = sorted(proof.used_premises, key=lambda name: premise_order.get(name, 0))
        logger.debug(f"Hammer closed {goal} with {len(used)} premises")
        return Subgoals((), certificate=f"hammer_tac [{', '.join(used)}]")

    return Tactic("hammer_tac", run, is_hammer=True)


def hammer_replay(theorems: Sequence[Theorem]):
    """`hammer_tac [names]` 的執行：只用列出的前提重新證明（預算為戰術庫的 hammer_timeout）"""
    def run(goal: Goal, budget: Budget):
        refute(goal, theorems, budget)
        return ()
    return run
