"""
項與型別的具體語法。

解析分兩步：parsy 文法先產生未定型別的語法樹，再依 Signature 與綁定範圍加上型別。
印出必須逐位元組穩定，腳本重播與特徵資料庫都依賴它。
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from parsy import ParseError as ParsyError
from parsy import eof, fail, generate, index, regex, seq, string

from app.errors import ParseError, TermError
from app.models.term import (
    Abs, App, BOOL, Const, Goal, NUM, Term, Type, Var,
    dest_binder, fun_ty, list_ty, mk_binder, mk_eq, strip_app,
)

logger = logging.getLogger(__name__)

# 中綴運算子：記號 -> (常數名稱, 優先序, 結合性)
INFIX = {
    "<=>": ("<=>", 10, "right"),
    "==>": ("==>", 20, "right"),
    "\\/": ("\\/", 30, "right"),
    "/\\": ("/\\", 40, "right"),
    "=": ("=", 60, "none"),
    "::": ("CONS", 70, "right"),
    "+": ("+", 80, "left"),
    "*": ("*", 90, "left"),
}
INFIX_BY_CONST = {const: (token, prec, assoc) for token, (const, prec, assoc) in INFIX.items()}
NEG_PREC = 50
APP_PREC = 100
ATOM_PREC = 110

# 需要 `$` 前綴才能當一般常數出現的名稱
SYMBOLIC = {"<=>", "==>", "\\/", "/\\", "=", "+", "*", "~", "!", "?"}


class Signature:
    """常數名稱到型別的對照表；`=`、`!`、`?` 是多型常數，由解析器依運算元決定型別"""

    BUILTIN = {
        "T": BOOL,
        "F": BOOL,
        "~": fun_ty(BOOL, BOOL),
        "/\\": fun_ty(BOOL, fun_ty(BOOL, BOOL)),
        "\\/": fun_ty(BOOL, fun_ty(BOOL, BOOL)),
        "==>": fun_ty(BOOL, fun_ty(BOOL, BOOL)),
        "<=>": fun_ty(BOOL, fun_ty(BOOL, BOOL)),
        "0": NUM,
        "SUC": fun_ty(NUM, NUM),
        "+": fun_ty(NUM, fun_ty(NUM, NUM)),
        "*": fun_ty(NUM, fun_ty(NUM, NUM)),
        "NIL": list_ty(NUM),
        "CONS": fun_ty(NUM, fun_ty(list_ty(NUM), list_ty(NUM))),
    }
    POLYMORPHIC = frozenset({"=", "!", "?"})

    def __init__(self, constants: Optional[Dict[str, Type]] = None):
        self.constants: Dict[str, Type] = dict(self.BUILTIN)
        self.declared: Dict[str, Type] = {}
        for name, ty in (constants or {}).items():
            self.declare(name, ty)

    def declare(self, name: str, ty: Type):
        current = self.constants.get(name)
        if name in self.POLYMORPHIC or (current is not None and current != ty):
            raise TermError(f"constant {name} already declared with type {current}")
        self.constants[name] = ty
        if name not in self.BUILTIN:
            self.declared[name] = ty

    def get(self, name: str) -> Optional[Type]:
        return self.constants.get(name)

    def __contains__(self, name):
        return name in self.constants or name in self.POLYMORPHIC

    def copy(self) -> "Signature":
        return Signature(dict(self.declared))

    def __eq__(self, other):
        return isinstance(other, Signature) and self.constants == other.constants


# ---------------------------------------------------------------------------
# 未定型別的語法樹
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RIdent:
    name: str
    annotation: Optional[Type]
    pos: int


@dataclass(frozen=True)
class RConst:
    name: str
    pos: int


@dataclass(frozen=True)
class RApp:
    fn: object
    arg: object


@dataclass(frozen=True)
class RBinary:
    op: str
    lhs: object
    rhs: object
    pos: int


@dataclass(frozen=True)
class RNeg:
    operand: object


@dataclass(frozen=True)
class RBinder:
    quantifier: str
    variables: Tuple[Tuple[str, Type], ...]
    body: object
    pos: int


whitespace = regex(r"\s*")


def lexeme(p):
    return p << whitespace


def token(s):
    return lexeme(string(s))


IDENT_RE = r"[A-Za-z_][A-Za-z0-9_']*|[0-9]+"
ident = lexeme(regex(IDENT_RE)).desc("identifier")


@generate
def type_expr():
    atom = yield type_atom
    arrow = yield (token("->") >> type_expr).optional()
    return fun_ty(atom, arrow) if arrow is not None else atom


@generate
def type_atom():
    paren = yield (token("(") >> type_expr << token(")")).optional()
    if paren is not None:
        return paren
    name = yield ident
    if name == "list":
        element = yield token("(") >> type_expr << token(")")
        return list_ty(element)
    if name in ("bool", "num"):
        return Type(name)
    return (yield fail(f"known type name instead of {name}"))


SYMBOL_RE = r"<=>|==>|\\/|/\\|=|\+|\*|~|!|\?"


@generate
def atom():
    pos = yield index
    dollar = yield token("$").optional()
    if dollar is not None:
        name = yield lexeme(regex(SYMBOL_RE + "|" + IDENT_RE))
        return RConst(name, pos)
    paren = yield (token("(") >> term_expr << token(")")).optional()
    if paren is not None:
        return paren
    name = yield ident
    annotation = yield (lexeme(regex(r":(?!:)")) >> type_expr).optional()
    return RIdent(name, annotation, pos)


@generate
def application():
    parts = yield atom.at_least(1)
    result = parts[0]
    for part in parts[1:]:
        result = RApp(result, part)
    return result


def _left_chain(operand, op_token):
    @generate
    def chain():
        result = yield operand
        while True:
            pos = yield index
            op = yield token(op_token).optional()
            if op is None:
                return result
            rhs = yield operand
            result = RBinary(op, result, rhs, pos)
    return chain


mul_level = _left_chain(application, "*")
add_level = _left_chain(mul_level, "+")


def _right_level(operand, op_token):
    @generate
    def level():
        lhs = yield operand
        pos = yield index
        op = yield token(op_token).optional()
        if op is None:
            return lhs
        rhs = yield (binder | level)
        return RBinary(op, lhs, rhs, pos)
    return level


cons_level = _right_level(add_level, "::")


@generate
def eq_level():
    lhs = yield cons_level
    pos = yield index
    # `==>` 以 `=` 開頭，必須排除
    op = yield (regex(r"=(?!=>)") << whitespace).optional()
    if op is None:
        return lhs
    rhs = yield (binder | cons_level)
    return RBinary("=", lhs, rhs, pos)


@generate
def neg_level():
    tilde = yield token("~").optional()
    if tilde is None:
        return (yield eq_level)
    operand = yield (binder | neg_level)
    return RNeg(operand)


conj_level = _right_level(neg_level, "/\\")
disj_level = _right_level(conj_level, "\\/")
imp_level = _right_level(disj_level, "==>")
iff_level = _right_level(imp_level, "<=>")


@generate
def binder():
    pos = yield index
    quantifier = yield lexeme(regex(r"[!?]|\\(?!/)"))
    variables = yield seq(ident, token(":") >> type_expr).at_least(1)
    yield token(".")
    body = yield term_expr
    return RBinder(quantifier, tuple(variables), body, pos)


term_expr = binder | iff_level

full_term = whitespace >> term_expr << eof
full_type = whitespace >> type_expr << eof


# ---------------------------------------------------------------------------
# 型別附加
# ---------------------------------------------------------------------------

class _Elaborator:
    def __init__(self, signature: Signature, text: str, free: Optional[Dict[str, Var]] = None):
        self.signature = signature
        self.text = text
        self.free: Dict[str, Var] = free if free is not None else {}

    def error(self, message, pos):
        line, column = line_col(self.text, pos)
        return ParseError(message, line, column)

    def run(self, raw, scope: Dict[str, Var]) -> Term:
        try:
            return self._elab(raw, scope)
        except TermError as ex:
            raise ParseError(f"ill-typed term: {ex}") from ex

    def _elab(self, raw, scope) -> Term:
        if isinstance(raw, RIdent):
            return self._ident(raw, scope)
        if isinstance(raw, RConst):
            ty = self.signature.get(raw.name)
            if ty is None:
                if raw.name in Signature.POLYMORPHIC:
                    raise self.error(f"polymorphic constant ${raw.name} needs an argument", raw.pos)
                raise self.error(f"unknown constant {raw.name}", raw.pos)
            return Const(raw.name, ty)
        if isinstance(raw, RApp):
            return self._app(raw, scope)
        if isinstance(raw, RNeg):
            return App(Const("~", fun_ty(BOOL, BOOL)), self._elab(raw.operand, scope))
        if isinstance(raw, RBinary):
            lhs = self._elab(raw.lhs, scope)
            rhs = self._elab(raw.rhs, scope)
            if raw.op == "=":
                return mk_eq(lhs, rhs)
            name = INFIX[raw.op][0]
            return App(App(Const(name, self.signature.get(name)), lhs), rhs)
        if isinstance(raw, RBinder):
            return self._binder(raw, scope)
        raise self.error("unexpected syntax", 0)

    def _ident(self, raw: RIdent, scope) -> Term:
        name, annotation = raw.name, raw.annotation
        if name in scope and annotation is None:
            return scope[name]
        if name in scope:
            bound = scope[name]
            if bound.ty != annotation:
                raise self.error(f"variable {name} annotated {annotation} but bound with {bound.ty}", raw.pos)
            return bound
        if annotation is not None:
            var = Var(name, annotation)
            self.free[name] = var
            return var
        if name in self.free:
            return self.free[name]
        ty = self.signature.get(name)
        if ty is not None:
            return Const(name, ty)
        raise self.error(f"unknown constant or untyped free variable {name}", raw.pos)

    def _app(self, raw: RApp, scope) -> Term:
        spine = []
        head = raw
        while isinstance(head, RApp):
            spine.append(head.arg)
            head = head.fn
        spine.reverse()
        args = [self._elab(arg, scope) for arg in spine]
        if isinstance(head, RConst) and head.name in Signature.POLYMORPHIC:
            first = args[0]
            if head.name == "=":
                fn = Const("=", fun_ty(first.ty, fun_ty(first.ty, BOOL)))
            else:
                fn = Const(head.name, fun_ty(first.ty, BOOL))
        else:
            fn = self._elab(head, scope)
        result = fn
        for arg in args:
            result = App(result, arg)
        return result

    def _binder(self, raw: RBinder, scope) -> Term:
        inner = dict(scope)
        variables = []
        for name, ty in raw.variables:
            var = Var(name, ty)
            inner[name] = var
            variables.append(var)
        body = self._elab(raw.body, inner)
        for var in reversed(variables):
            if raw.quantifier == "\\":
                body = Abs(var, body)
            else:
                body = mk_binder(raw.quantifier, var, body)
        return body


def line_col(text: str, index: int) -> Tuple[int, int]:
    """0 起算的索引轉成 1 起算的 (行, 欄)"""
    line = text.count("\n", 0, index) + 1
    column = index - (text.rfind("\n", 0, index) + 1) + 1
    return line, column


def _run_parser(parser, text: str):
    try:
        return parser.parse(text)
    except ParsyError as ex:
        line, column = line_col(text, ex.index)
        raise ParseError(f"expected {', '.join(sorted(ex.expected))}", line, column) from None


def parse_type(text: str) -> Type:
    return _run_parser(full_type, text)


def parse_term(text: str, signature: Optional[Signature] = None,
               free: Optional[Dict[str, Var]] = None) -> Term:
    """
    解析一個項。

    :param free: 已知的自由變數（名稱 -> Var），會被更新
    """
    signature = signature or DEFAULT_SIGNATURE
    raw = _run_parser(full_term, text)
    return _Elaborator(signature, text, free).run(raw, {})


def parse_goal(text: str, signature: Optional[Signature] = None) -> Goal:
    """`a1, a2 |- c` 或單獨的結論"""
    free: Dict[str, Var] = {}
    if "|-" in text:
        left, right = text.split("|-", 1)
        assumptions = [parse_term(part, signature, free) for part in _split_top_commas(left)]
        return Goal(tuple(assumptions), parse_term(right, signature, free))
    return Goal((), parse_term(text, signature, free))


def _split_top_commas(text: str) -> List[str]:
    parts, depth, current = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if "".join(current).strip():
        parts.append("".join(current))
    return [part for part in parts if part.strip()]


DEFAULT_SIGNATURE = Signature()


# ---------------------------------------------------------------------------
# 印出
# ---------------------------------------------------------------------------

def print_type(ty: Type) -> str:
    if ty.name == "fun":
        domain = print_type(ty.domain)
        if ty.domain.name == "fun":
            domain = f"({domain})"
        return f"{domain}->{print_type(ty.codomain)}"
    if ty.args:
        return f"{ty.name}({','.join(print_type(arg) for arg in ty.args)})"
    return ty.name


class _Printer:
    def __init__(self, placeholder: bool, signature: Signature):
        self.placeholder = placeholder
        self.signature = signature
        self.last_free: Dict[str, Var] = {}

    def show(self, term: Term, bound: frozenset = frozenset()) -> Tuple[str, int]:
        """回傳 (文字, 優先序)"""
        parts = dest_binder(term)
        if parts is not None:
            quantifier, var, body = parts
            return self._binder(quantifier, var, body, bound)
        if isinstance(term, Abs):
            return self._binder("\\", term.bound, term.body, bound)
        if isinstance(term, Var):
            return self._var(term, bound), ATOM_PREC
        if isinstance(term, Const):
            return self._const(term.name), ATOM_PREC
        head, args = strip_app(term)
        if isinstance(head, Const):
            if head.name in INFIX_BY_CONST and len(args) == 2:
                return self._infix(head.name, args[0], args[1], bound)
            if head.name == "~" and len(args) == 1:
                text, prec = self.show(args[0], bound)
                if prec < NEG_PREC:
                    text = f"({text})"
                return f"~{text}", NEG_PREC
        head_text, head_prec = self.show(head, bound)
        if head_prec < ATOM_PREC:
            head_text = f"({head_text})"
        pieces = [head_text]
        for arg in args:
            text, prec = self.show(arg, bound)
            if prec < ATOM_PREC:
                text = f"({text})"
            pieces.append(text)
        return " ".join(pieces), APP_PREC

    def _binder(self, quantifier, var, body, bound):
        body_text, _ = self.show(body, bound | {var})
        if self.placeholder:
            return f"{quantifier}V. {body_text}", 0
        return f"{quantifier}{var.name}:{print_type(var.ty)}. {body_text}", 0

    def _var(self, var: Var, bound) -> str:
        if self.placeholder:
            return "V"
        if var in bound:
            return var.name
        previous = self.last_free.get(var.name)
        self.last_free[var.name] = var
        if previous == var and var.name not in self.signature:
            return var.name
        return f"({var.name}:{print_type(var.ty)})"

    def _const(self, name: str) -> str:
        if name in SYMBOLIC:
            return f"${name}"
        return name

    def _infix(self, name, lhs, rhs, bound):
        token_text, prec, assoc = INFIX_BY_CONST[name]
        left_text, left_prec = self.show(lhs, bound)
        right_text, right_prec = self.show(rhs, bound)
        if left_prec < prec or (left_prec == prec and assoc != "left"):
            left_text = f"({left_text})"
        if right_prec < prec or (right_prec == prec and assoc != "right"):
            right_text = f"({right_text})"
        return f"{left_text} {token_text} {right_text}", prec


def print_term(term: Term, placeholder: bool = False, signature: Optional[Signature] = None) -> str:
    """
    印出項。

    :param placeholder: True 時所有變數印成 `V` 且省略型別標註（特徵序列化用）
    """
    return _Printer(placeholder, signature or DEFAULT_SIGNATURE).show(term)[0]


def print_goal(goal: Goal, signature: Optional[Signature] = None) -> str:
    printer = _Printer(False, signature or DEFAULT_SIGNATURE)
    assumptions = [printer.show(a)[0] for a in goal.assumptions]
    conclusion = printer.show(goal.conclusion)[0]
    if not assumptions:
        return conclusion
    return f"{', '.join(assumptions)} |- {conclusion}"
