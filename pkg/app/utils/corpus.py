"""
語料檔解析。

語料檔（UTF-8，`#` 開頭為註解）由以下各行組成::

    theory nat
    requires prop
    const LENGTH : list(num) -> num
    axiom LENGTH_NIL: "LENGTH NIL = 0"
    thm ADD_0_R: "!n:num. n + 0 = n"
    proof: induct_num_tac THENL [rewrite_tac [ADD_0], rewrite_tac [ADD_SUC]]

`proof:` 之後以空白縮排的行視為同一份腳本的延續。
"""
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from app.errors import CorpusError, ParseError, TermError
from app.models.term import BOOL, Goal, Theorem
from app.services.tactic_service import THEOREM_ARGUMENT, TacticLibrary
from app.utils.script import atomic_tactics, parse_script, parse_tactic_call
from app.utils.syntax import Signature, parse_term, parse_type

logger = logging.getLogger(__name__)

CORPUS_SUFFIX = ".thy"

THEORY_RE = re.compile(r"theory\s+(\w+)\s*$")
REQUIRES_RE = re.compile(r"requires\s+(.*)$")
CONST_RE = re.compile(r"const\s+(\S+)\s*:\s*(.+)$")
STATEMENT_RE = re.compile(r"(thm|axiom)\s+(\w+)\s*:\s*\"(.*)\"\s*$")
PROOF_RE = re.compile(r"proof\s*:(.*)$")


@dataclass
class CorpusEntry:
    theorem: Theorem
    # 公理沒有證明
    proof: Optional[str]
    source: str = ""
    line: int = 0

    @property
    def is_axiom(self) -> bool:
        return self.theorem.is_axiom


@dataclass
class CorpusTheory:
    name: str
    requires: Tuple[str, ...] = ()
    entries: List[CorpusEntry] = field(default_factory=list)
    source: str = ""


@dataclass
class Corpus:
    theories: List[CorpusTheory]
    signature: Signature

    def __iter__(self) -> Iterator[CorpusTheory]:
        return iter(self.theories)

    def __len__(self):
        return len(self.theories)

    def entries(self) -> List[CorpusEntry]:
        """依時間序排列的所有條目（含公理）"""
        return [entry for theory in self.theories for entry in theory.entries]

    def theorems(self) -> Dict[str, Theorem]:
        return {entry.theorem.name: entry.theorem for entry in self.entries()}

    def library(self, clock: str = "steps", steps_per_second: int = 100000,
                replay_timeout: float = 1.0, tactic_timeout: float = 0.02) -> TacticLibrary:
        return TacticLibrary(self.theorems(), self.signature, clock=clock, steps_per_second=steps_per_second,
                             replay_timeout=replay_timeout, tactic_timeout=tactic_timeout)


# ---------------------------------------------------------------------------
# 第一階段：切出各理論的原始條目
# ---------------------------------------------------------------------------

@dataclass
class _RawTheory:
    name: str
    source: str
    line: int
    requires: List[str] = field(default_factory=list)
    # (種類, 行號, 欄位...)
    items: List[tuple] = field(default_factory=list)


def _error(source: str, line: int, message: str, column: Optional[int] = None) -> CorpusError:
    where = f"{source}:{line}:{column}" if column is not None else f"{source}:{line}"
    return CorpusError(f"{where}: {message}")


def _logical_lines(text: str) -> List[Tuple[int, str]]:
    """去掉註解與空行，並把縮排的延續行接到前一行"""
    lines: List[Tuple[int, str]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].rstrip()
        if not content.strip():
            continue
        if raw[:1].isspace() and lines:
            previous_number, previous = lines[-1]
            lines[-1] = (previous_number, f"{previous} {content.strip()}")
        else:
            lines.append((number, content.strip()))
    return lines


def _split_theories(text: str, source: str) -> List[_RawTheory]:
    theories: List[_RawTheory] = []
    for number, line in _logical_lines(text):
        match = THEORY_RE.match(line)
        if match:
            theories.append(_RawTheory(match.group(1), source, number))
            continue
        if not theories:
            raise _error(source, number, "entry outside of a theory")
        current = theories[-1]
        match = REQUIRES_RE.match(line)
        if match:
            current.requires.extend(name for name in re.split(r"[,\s]+", match.group(1)) if name)
            continue
        match = CONST_RE.match(line)
        if match:
            current.items.append(("const", number, match.group(1), match.group(2)))
            continue
        match = STATEMENT_RE.match(line)
        if match:
            column = line.index('"') + 2
            current.items.append((match.group(1), number, match.group(2), match.group(3), column))
            continue
        match = PROOF_RE.match(line)
        if match:
            if not current.items or current.items[-1][0] != "thm" or len(current.items[-1]) > 5:
                raise _error(source, number, "proof without a preceding thm")
            current.items[-1] = current.items[-1] + (match.group(1).strip(), number)
            continue
        raise _error(source, number, f"cannot parse line: {line}")
    return theories


# ---------------------------------------------------------------------------
# 第二階段：時間序與型別化
# ---------------------------------------------------------------------------

def _chronological(theories: List[_RawTheory]) -> List[_RawTheory]:
    """依 requires 做拓撲排序；沒有相依關係的理論保持出現順序"""
    by_name: Dict[str, _RawTheory] = {}
    for theory in theories:
        if theory.name in by_name:
            raise _error(theory.source, theory.line, f"theory {theory.name} defined twice")
        by_name[theory.name] = theory
    for theory in theories:
        for required in theory.requires:
            if required not in by_name:
                raise _error(theory.source, theory.line, f"theory {theory.name} requires unknown theory {required}")

    ordered: List[_RawTheory] = []
    done = set()
    while len(ordered) < len(theories):
        ready = [t for t in theories if t.name not in done and all(r in done for r in t.requires)]
        if not ready:
            stuck = sorted(t.name for t in theories if t.name not in done)
            raise CorpusError(f"cyclic requires between theories: {', '.join(stuck)}")
        ordered.append(ready[0])
        done.add(ready[0].name)
    return ordered


def _references(script_text: str) -> List[str]:
    names: List[str] = []
    for text in atomic_tactics(parse_script(script_text)):
        call = parse_tactic_call(text)
        if call.name in THEOREM_ARGUMENT and call.theorems:
            names.extend(call.theorems)
    return list(dict.fromkeys(names))


def _elaborate(ordered: List[_RawTheory]) -> Corpus:
    signature = Signature()
    known: Dict[str, int] = {}
    theories: List[CorpusTheory] = []
    index = 0
    for raw in ordered:
        theory = CorpusTheory(raw.name, tuple(raw.requires), source=raw.source)
        for item in raw.items:
            kind, number = item[0], item[1]
            if kind == "const":
                try:
                    signature.declare(item[2], parse_type(item[3]))
                except (ParseError, TermError) as ex:
                    raise _error(raw.source, number, f"bad constant declaration: {ex}") from ex
                continue

            _, _, name, statement_text, column = item[:5]
            if name in known:
                raise _error(raw.source, number, f"theorem {name} defined twice")
            try:
                conclusion = parse_term(statement_text, signature)
            except ParseError as ex:
                raise _error(raw.source, number, ex.reason, column + (ex.column or 1) - 1) from ex
            except TermError as ex:
                raise _error(raw.source, number, str(ex)) from ex
            if conclusion.ty != BOOL:
                raise _error(raw.source, number, f"statement of {name} is not a formula")

            proof = None
            dependencies: List[str] = []
            if kind == "thm":
                if len(item) < 7:
                    raise _error(raw.source, number, f"theorem {name} has no proof")
                proof, proof_line = item[5], item[6]
                try:
                    dependencies = _references(proof)
                except ParseError as ex:
                    raise _error(raw.source, proof_line, f"proof of {name}: {ex.reason}", ex.column) from ex
                for dependency in dependencies:
                    if dependency not in known:
                        raise _error(raw.source, proof_line,
                                     f"proof of {name} refers to unknown or later theorem {dependency}")

            theorem = Theorem(name, Goal((), conclusion), tuple(dependencies), index, raw.name, kind == "axiom")
            theory.entries.append(CorpusEntry(theorem, proof, raw.source, number))
            known[name] = index
            index += 1
        theories.append(theory)
    return Corpus(theories, signature)


def _corpus_files(path: str) -> List[str]:
    if os.path.isdir(path):
        files = sorted(os.path.join(path, name) for name in os.listdir(path) if name.endswith(CORPUS_SUFFIX))
        if not files:
            raise CorpusError(f"no {CORPUS_SUFFIX} files in {path}")
        return files
    if not os.path.isfile(path):
        raise CorpusError(f"corpus path {path} does not exist")
    return [path]


def parse_corpus_text(text: str, source: str = "<corpus>") -> Corpus:
    return _elaborate(_chronological(_split_theories(text, source)))


def parse_corpus(path: str) -> Corpus:
    """
    讀取單一 .thy 檔或整個目錄，回傳依時間序排列的理論。

    :raises CorpusError: 格式錯誤（附檔名與行號）、requires 循環、引用未知或較晚的定理
    """
    theories: List[_RawTheory] = []
    for file_path in _corpus_files(path):
        with open(file_path, encoding="utf-8") as handle:
            theories.extend(_split_theories(handle.read(), file_path))
    corpus = _elaborate(_chronological(theories))
    total = len(corpus.entries())
    axioms = sum(1 for entry in corpus.entries() if entry.is_axiom)
    logger.info(f"Loaded corpus from {path}: {len(corpus)} theories, {total - axioms} theorems, {axioms} axioms")
    return corpus


def default_corpus_path() -> str:
    return os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "corpus")
