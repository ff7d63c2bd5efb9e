"""例外類別與 CLI 結束代碼"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CORPUS = 2
EXIT_INVARIANT = 3


class TacsearchError(Exception):
    """所有自訂錯誤的基底類別"""
    exit_code = EXIT_USAGE


class TermError(TacsearchError):
    """項的型別不正確"""


class SubstitutionError(TermError):
    """代換時變數與替換項的型別不一致"""


class ParseError(TacsearchError):
    """帶有位置資訊的解析錯誤"""

    def __init__(self, message, line=None, column=None, source=None):
        self.reason = message
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:{column}: " if column is not None else f"{line}: "
        super().__init__(f"{where}{message}")


class UnsupportedTacticalError(ParseError):
    """腳本使用了 THEN / THENL 以外的組合子"""


class ScriptError(TacsearchError):
    """腳本執行錯誤（THENL 分支數不符、戰術名稱無法解析）"""


class TacticError(TacsearchError):
    """戰術本身的失敗原因，會被轉成 Failure"""


class BudgetExceeded(TacsearchError):
    """超出步數或時間預算，會被轉成 Timeout"""


class UnsupportedFragmentError(TacsearchError):
    """公式超出一階子集，無法子句化"""


class CorpusError(TacsearchError):
    exit_code = EXIT_CORPUS


class DatabaseFormatError(TacsearchError):
    exit_code = EXIT_CORPUS

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InvariantViolation(TacsearchError):
    exit_code = EXIT_INVARIANT


class ContractViolation(InvariantViolation):
    """呼叫端違反前置條件（例如重建尚未解完的證明樹）"""


def exit_code_for(error):
    """根據例外類別決定 CLI 結束代碼"""
    if isinstance(error, TacsearchError):
        return error.exit_code
    return EXIT_INVARIANT
