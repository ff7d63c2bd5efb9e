import logging
import os

from dotenv import load_dotenv

from app.utils.corpus import default_corpus_path

# 載入 .env
load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    SERVER_HOST = os.getenv('SERVER_HOST', '127.0.0.1')
    PORT = int(os.getenv('PORT', 5000))
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()
    TACSEARCH_DB_PATH = os.getenv('TACSEARCH_DB_PATH')
    TACSEARCH_CORPUS_PATH = os.getenv('TACSEARCH_CORPUS_PATH', default_corpus_path())
    TACSEARCH_CLOCK = os.getenv('TACSEARCH_CLOCK', 'steps').lower()
    TACSEARCH_STEPS_PER_SECOND = int(os.getenv('TACSEARCH_STEPS_PER_SECOND', 100000))
    TACSEARCH_TACTIC_TIMEOUT = float(os.getenv('TACSEARCH_TACTIC_TIMEOUT', 0.02))
    TACSEARCH_SEARCH_TIMEOUT = float(os.getenv('TACSEARCH_SEARCH_TIMEOUT', 5.0))
    TACSEARCH_REPLAY_TIMEOUT = float(os.getenv('TACSEARCH_REPLAY_TIMEOUT', 1.0))
    TACSEARCH_TAU1 = float(os.getenv('TACSEARCH_TAU1', 6.0))
    TACSEARCH_PRESELECT_N = int(os.getenv('TACSEARCH_PRESELECT_N', 500))
    TACSEARCH_ORTHO_NEIGHBORHOOD = int(os.getenv('TACSEARCH_ORTHO_NEIGHBORHOOD', 20))
    TACSEARCH_DEFAULT_STRATEGY = os.getenv('TACSEARCH_DEFAULT_STRATEGY', 'nh')


def load_app_config(app, profile):
    print("Loading config for profile:", profile)

    # 從 .env 與環境變數載入
    app.config.from_object(Config)
    logger.info(f"Running in {profile} mode with .env configuration")

    if app.config['TACSEARCH_CLOCK'] not in ('steps', 'wall'):
        exit_with_error(f"TACSEARCH_CLOCK must be 'steps' or 'wall', got {app.config['TACSEARCH_CLOCK']}")

    return {key: value for key, value in app.config.items() if not key.startswith('_')}


def config_value(key):
    """不經過 Flask app 取得設定值（CLI 使用）"""
    return getattr(Config, key)


def exit_with_error(message):
    logger.error(f"FATAL ERROR: {message}")
    exit(1)


def print_config_info(app):
    print("-" * 60)

    custom_keys = [attr for attr in dir(Config) if not attr.startswith("_") and attr.isupper()]
    for key in custom_keys:
        value = app.config.get(key)
        if value is not None:
            print(f"{key:<30} : {value}")

    print("-" * 60)
