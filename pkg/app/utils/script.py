"""
戰術腳本的語法、印出與執行。

只支援 THEN 與 THENL 兩個組合子：重建證明只會產生這兩種，人寫的證明也限制在同樣的形式。
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

from parsy import ParseError as ParsyError
from parsy import eof, generate, index, regex, string

from app.errors import InvariantViolation, ParseError, ScriptError, UnsupportedTacticalError
from app.models.tactic import Failure, Subgoals, Timeout
from app.models.term import Goal
from app.utils.syntax import line_col

logger = logging.getLogger(__name__)

# 其他證明助理常見、但這裡不支援的組合子
UNSUPPORTED_TACTICALS = frozenset({
    "ORELSE", "THEN1", "REVERSE", "VALID", "by", "suffices_by", "THEN_LT", "ORELSE_LT",
    "EVERY", "FIRST", "REPEAT", "TRY", ">>", ">-", "\\\\",
})


@dataclass(frozen=True)
class Atomic:
    tactic: str


@dataclass(frozen=True)
class Then:
    first: "ScriptAst"
    second: "ScriptAst"


@dataclass(frozen=True)
class Thenl:
    first: "ScriptAst"
    branches: Tuple["ScriptAst", ...]


ScriptAst = Union[Atomic, Then, Thenl]


@dataclass(frozen=True)
class TacticCall:
    """單一戰術呼叫的結構：名稱加上（選擇性的）定理名稱列表或項參數"""
    name: str
    theorems: Optional[Tuple[str, ...]] = None
    term: Optional[str] = None

    def __str__(self):
        if self.theorems is not None:
            return f"{self.name} [{', '.join(self.theorems)}]"
        if self.term is not None:
            return f"{self.name} `{self.term}`"
        return self.name


class _Unsupported(Exception):
    def __init__(self, word, pos):
        super().__init__(word)
        self.word = word
        self.pos = pos


whitespace = regex(r"\s*")


def lexeme(p):
    return p << whitespace


def token(s):
    return lexeme(string(s))


word = lexeme(regex(r"[A-Za-z_][A-Za-z0-9_']*"))
symbolic_tactical = lexeme(regex(r">>|>-|\\\\"))


@generate
def tactic_call():
    pos = yield index
    name = yield word
    if name in UNSUPPORTED_TACTICALS:
        raise _Unsupported(name, pos)
    if name in ("THEN", "THENL"):
        return (yield regex(r"(?!)").desc("tactic name"))
    theorems = yield (token("[") >> word.sep_by(token(",")) << token("]")).optional()
    if theorems is not None:
        return TacticCall(name, theorems=tuple(theorems))
    term = yield (string("`") >> regex(r"[^`]*") << token("`")).optional()
    if term is not None:
        return TacticCall(name, term=term.strip())
    return TacticCall(name)


@generate
def script_atom():
    paren = yield (token("(") >> script << token(")")).optional()
    if paren is not None:
        return paren
    call = yield tactic_call
    return Atomic(str(call))


@generate
def script():
    result = yield script_atom
    while True:
        pos = yield index
        symbol = yield symbolic_tactical.optional()
        if symbol is not None:
            raise _Unsupported(symbol, pos)
        keyword = yield word.optional()
        if keyword is None:
            return result
        if keyword == "THEN":
            result = Then(result, (yield script_atom))
        elif keyword == "THENL":
            branches = yield token("[") >> script.sep_by(token(","), min=1) << token("]")
            result = Thenl(result, tuple(branches))
        elif keyword in UNSUPPORTED_TACTICALS:
            raise _Unsupported(keyword, pos)
        else:
            return (yield regex(r"(?!)").desc("THEN or THENL"))


full_script = whitespace >> script << eof
full_call = whitespace >> tactic_call << eof


def _parse(parser, text: str):
    try:
        return parser.parse(text)
    except _Unsupported as ex:
        line, column = line_col(text, ex.pos)
        raise UnsupportedTacticalError(f"unsupported tactical {ex.word}", line, column) from None
    except ParsyError as ex:
        line, column = line_col(text, ex.index)
        raise ParseError(f"expected {', '.join(sorted(ex.expected))}", line, column) from None


def parse_script(text: str) -> ScriptAst:
    return _parse(full_script, text)


def parse_tactic_call(text: str) -> TacticCall:
    return _parse(full_call, text)


def print_script(ast: ScriptAst) -> str:
    if isinstance(ast, Atomic):
        return ast.tactic
    if isinstance(ast, Then):
        second = print_script(ast.second)
        if not isinstance(ast.second, Atomic):
            second = f"({second})"
        return f"{print_script(ast.first)} THEN {second}"
    branches = ", ".join(print_script(branch) for branch in ast.branches)
    return f"{print_script(ast.first)} THENL [{branches}]"


def atomic_tactics(ast: ScriptAst) -> List[str]:
    """依出現順序列出腳本中所有的原子戰術字串"""
    if isinstance(ast, Atomic):
        return [ast.tactic]
    if isinstance(ast, Then):
        return atomic_tactics(ast.first) + atomic_tactics(ast.second)
    out = atomic_tactics(ast.first)
    for branch in ast.branches:
        out += atomic_tactics(branch)
    return out


# recorder(goal, canonical_tactic_string, outcome)
Recorder = Callable[[Goal, str, Subgoals], None]


def run_script(ast: ScriptAst, goal: Goal, library, recorder: Optional[Recorder] = None,
               seconds: Optional[float] = None):
    """
    依 THEN / THENL 語意執行腳本。

    :param library: TacticLibrary，負責把戰術字串轉成 Tactic 並在預算內執行
    :param recorder: 每次原子戰術成功時以 (目標, 正規戰術字串, 結果) 呼叫
    :param seconds: 每個原子戰術的預算，預設為 library 的重播預算
    :return: Subgoals / Failure / Timeout
    """
    if isinstance(ast, Atomic):
        return _run_atomic(ast.tactic, goal, library, recorder, seconds)

    first = run_script(ast.first, goal, library, recorder, seconds)
    if not isinstance(first, Subgoals):
        return first

    if isinstance(ast, Then):
        remaining = []
        for subgoal in first.goals:
            outcome = run_script(ast.second, subgoal, library, recorder, seconds)
            if not isinstance(outcome, Subgoals):
                return outcome
            remaining.extend(outcome.goals)
        return Subgoals(tuple(remaining))

    if len(first.goals) != len(ast.branches):
        raise ScriptError(
            f"THENL after `{print_script(ast.first)}` has {len(ast.branches)} branches "
            f"but {len(first.goals)} goals were produced")
    remaining = []
    for position, (subgoal, branch) in enumerate(zip(first.goals, ast.branches), start=1):
        outcome = run_script(branch, subgoal, library, recorder, seconds)
        if not isinstance(outcome, Subgoals):
            logger.debug(f"THENL branch {position} `{print_script(branch)}` did not succeed")
            return outcome
        remaining.extend(outcome.goals)
    return Subgoals(tuple(remaining))


def _run_atomic(text, goal, library, recorder, seconds):
    tactic = library.tactic(text)
    outcome = library.apply(tactic, goal, seconds)
    if isinstance(outcome, Failure):
        return Failure(f"{tactic.canonical_string}: {outcome.reason}")
    if isinstance(outcome, Timeout):
        return outcome
    label = outcome.certificate or tactic.canonical_string
    if recorder is not None:
        # 正規字串重新解析後必須有相同效果
        again = library.apply(library.tactic(label), goal, seconds)
        if not outcome.same_effect(again):
            raise InvariantViolation(f"tactic `{label}` does not reproduce its effect on {goal}")
        recorder(goal, label, outcome)
    return outcome


def replay(conjecture: Goal, script_text: str, library, seconds: Optional[float] = None) -> bool:
    """
    重播腳本並確認目標被完全關閉。

    解析錯誤會以 ParseError 丟出，與「重播失敗（回傳 False）」區分。
    """
    ast = parse_script(script_text)
    try:
        outcome = run_script(ast, conjecture, library, seconds=seconds)
    except ScriptError as ex:
        logger.debug(f"replay of `{script_text}` failed: {ex}")
        return False
    return isinstance(outcome, Subgoals) and outcome.closed
