"""
`tacsearch` 命令列：record / prove / eval / serve。

結束代碼：0 成功、1 用法錯誤、2 語料或資料庫錯誤、3 內部不變量被破壞。
"""
import logging
from dataclasses import replace
from typing import List, Optional

import click

from app.config import config_value
from app.errors import EXIT_OK, EXIT_USAGE, CorpusError, TacsearchError, exit_code_for
from app.logger import setup_logger
from app.models.feature_db import load_db, save_db
from app.models.search import CoDistance, HammerConfig, StrategyConfig
from app.services.harness_service import PRESETS, evaluate, record_corpus, report, strategy
from app.services.search_service import search
from app.services.tactic_service import TacticLibrary
from app.utils.corpus import parse_corpus
from app.utils.syntax import parse_goal

logger = logging.getLogger(__name__)


def _library_options(ctx) -> dict:
    return {
        "clock": ctx.obj["clock"],
        "steps_per_second": config_value("TACSEARCH_STEPS_PER_SECOND"),
        "replay_timeout": config_value("TACSEARCH_REPLAY_TIMEOUT"),
        "tactic_timeout": config_value("TACSEARCH_TACTIC_TIMEOUT"),
    }


def _load_db(path):
    try:
        return load_db(path)
    except OSError as ex:
        raise CorpusError(f"cannot read feature db {path}: {ex}") from ex


def strategy_options(command):
    """prove 與 eval 共用的策略參數"""
    options = [
        click.option("--codist", type=click.IntRange(1, 5), help="co-distance 變體"),
        click.option("--k1", type=float),
        click.option("--k2", type=float),
        click.option("--tau1", type=float, help="TF-IDF 權重指數"),
        click.option("--preselect-n", type=int, help="搜尋前預選的戰術數"),
        click.option("--tactic-timeout", type=float, help="每次戰術呼叫的預算（秒）"),
        click.option("--search-timeout", type=float, help="每次搜尋的預算（秒）"),
        click.option("--hammer-premises", type=click.Choice(["0", "8", "16"]), help="hammer 前提數，0 表示關閉"),
        click.option("--hammer-timeout", type=float),
        click.option("--ortho", is_flag=True, default=None, help="紀錄時啟用正交化"),
        click.option("--self-learn", is_flag=True, default=None, help="紀錄自己找到的證明"),
        click.option("--no-cache", is_flag=True, default=False, help="關閉預測與戰術結果快取"),
        click.option("--seed", type=int, help="只影響測試資料產生器；引擎本身是決定性的"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def build_strategy(name: str, codist=None, k1=None, k2=None, tau1=None, preselect_n=None, tactic_timeout=None,
                   search_timeout=None, hammer_premises=None, hammer_timeout=None, ortho=None, self_learn=None,
                   no_cache=False, seed=None) -> StrategyConfig:
    """由預設名稱與命令列參數組出策略；參數優先於設定檔，設定檔優先於內建值"""
    if name in PRESETS:
        base = strategy(name)
    elif codist is not None:
        logger.warning(f"Unknown preset {name}, building the strategy from flags")
        base = StrategyConfig(name)
    else:
        raise click.UsageError(f"unknown strategy {name}; known presets: {', '.join(PRESETS)}")
    if seed is not None:
        logger.debug(f"Seed {seed} has no effect on the search engine")

    changes = {
        "search_budget": search_timeout or config_value("TACSEARCH_SEARCH_TIMEOUT"),
        "tau1": tau1 or config_value("TACSEARCH_TAU1"),
        "preselect_n": preselect_n or config_value("TACSEARCH_PRESELECT_N"),
    }
    if tactic_timeout is not None:
        changes["tactic_budget"] = tactic_timeout
    if ortho:
        changes["ortho"] = True
    if self_learn:
        changes["self_learn"] = True
    if no_cache:
        changes["cache"] = False
    try:
        if codist is not None or k1 is not None or k2 is not None:
            current = base.codist
            changes["codist"] = CoDistance(codist or current.variant, k1 or current.k1, k2 or current.k2,
                                           current.score_variant)
        if hammer_premises is not None:
            premises = int(hammer_premises)
            budget = hammer_timeout or (base.hammer.budget if base.hammer else 0.1)
            changes["hammer"] = HammerConfig(final_n=premises, budget=budget) if premises else None
        elif hammer_timeout is not None and base.hammer is not None:
            changes["hammer"] = replace(base.hammer, budget=hammer_timeout)
        return replace(base, **changes)
    except ValueError as ex:
        raise click.UsageError(str(ex)) from ex


@click.group()
@click.option("--log-level", default=None, help="DEBUG / INFO / WARNING / ERROR")
@click.option("--clock", type=click.Choice(["steps", "wall"]), default=None,
              help="steps 為可重現的步數時鐘，wall 為實際時間")
@click.pass_context
def tacsearch(ctx, log_level, clock):
    """學習導向的戰術層級證明搜尋"""
    setup_logger(log_level=log_level or config_value("LOG_LEVEL"))
    ctx.ensure_object(dict)
    ctx.obj["clock"] = clock or config_value("TACSEARCH_CLOCK")


@tacsearch.command()
@click.argument("corpus", type=click.Path())
@click.option("--db", "db_path", required=True, type=click.Path(), help="輸出的特徵資料庫")
@click.option("--ortho", is_flag=True, default=False, help="紀錄時啟用正交化")
@click.option("--neighborhood", type=int, default=None, help="正交化競賽的鄰居數")
@click.pass_context
def record(ctx, corpus, db_path, ortho, neighborhood):
    """重播語料中的人類證明並寫出特徵資料庫"""
    loaded = parse_corpus(corpus)
    library = loaded.library(**_library_options(ctx))
    db = record_corpus(loaded, library, ortho=ortho,
                       neighborhood=neighborhood or config_value("TACSEARCH_ORTHO_NEIGHBORHOOD"),
                       tau1=config_value("TACSEARCH_TAU1"))
    save_db(db, db_path)
    click.echo(f"recorded {db.total_docs} goal vectors, {len(db.theorem_vectors)} theorems, "
               f"{db.tactic_count()} distinct tactics -> {db_path}")


@tacsearch.command()
@click.argument("goal")
@click.option("--db", "db_path", required=True, type=click.Path(), help="特徵資料庫")
@click.option("--strategy", "strategy_name", default=None, help="預設策略名稱")
@strategy_options
@click.pass_context
def prove(ctx, goal, db_path, strategy_name, **flags):
    """搜尋單一目標的證明，例如 `!n:num. n + 0 = n`"""
    db = _load_db(db_path)
    library = TacticLibrary(db.statements, db.signature, **_library_options(ctx))
    conjecture = parse_goal(goal, db.signature)
    cfg = build_strategy(strategy_name or config_value("TACSEARCH_DEFAULT_STRATEGY"), **flags)
    result = search(conjecture, db, library, cfg)
    click.echo(f"outcome: {result.outcome}")
    if result.proved:
        click.echo(f"script: {result.script}")
    stats = result.stats
    click.echo(f"nodes: {stats.node_count}  proof size: {stats.proof_size}  time: {stats.elapsed:.3f}s")


@tacsearch.command("eval")
@click.argument("corpus", type=click.Path())
@click.option("--strategies", default=None, help="以逗號分隔的策略名稱，例如 nh,sh")
@click.option("--stride", type=click.IntRange(min=1), default=1, help="每 N 個定理嘗試一次")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="報表輸出目錄")
@click.option("--reference", default=None, help="U(X) 的參考策略（預設為第一個）")
@click.option("--audit", is_flag=True, default=False, help="稽核每次搜尋的節點與展開順序")
@strategy_options
@click.pass_context
def eval_command(ctx, corpus, strategies, stride, out_dir, reference, audit, **flags):
    """依時間序重新證明語料並輸出 CSV 報表"""
    names = [name.strip() for name in (strategies or config_value("TACSEARCH_DEFAULT_STRATEGY")).split(",")
             if name.strip()]
    configs = [build_strategy(name, **flags) for name in names]
    if reference is not None and reference not in names:
        raise click.UsageError(f"reference strategy {reference} is not being evaluated")
    loaded = parse_corpus(corpus)
    library = loaded.library(**_library_options(ctx))
    evaluation = evaluate(loaded, configs, library, stride=stride,
                          neighborhood=config_value("TACSEARCH_ORTHO_NEIGHBORHOOD"), audit=audit,
                          reference=reference)
    report(evaluation.records, out_dir, reference)
    for row in evaluation.table.rows:
        click.echo(f"{row.strategy:<8} {row.solved:>4}/{row.attempted:<4} {row.solved_pct:6.2f}%  "
                   f"U({evaluation.table.reference})={row.unique}")


@tacsearch.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--db", "db_path", default=None, type=click.Path(), help="覆寫 TACSEARCH_DB_PATH")
def serve(host, port, db_path):
    """啟動 HTTP 服務"""
    from app import create_app

    app = create_app({"TACSEARCH_DB_PATH": db_path} if db_path else None)
    app.run(host=host or app.config.get("SERVER_HOST"), port=port or app.config.get("PORT", 5000), debug=False)


def main(argv: Optional[List[str]] = None) -> int:
    """以自訂結束代碼執行命令列"""
    try:
        tacsearch.main(args=argv, prog_name="tacsearch", standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as ex:
        ex.show()
        return EXIT_USAGE
    except TacsearchError as ex:
        logger.error(f"{type(ex).__name__}: {ex}")
        click.echo(f"Error: {ex}", err=True)
        return exit_code_for(ex)
    return EXIT_OK
