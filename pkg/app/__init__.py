import logging
import os

from flask import Flask

from app.api import init_app
from app.config import load_app_config
from app.config import print_config_info
from app.extensions import init_feature_db
from app.logger import setup_logger

logger = logging.getLogger(__name__)


def create_app(test_config=None):
    """創建並配置Flask應用程式"""
    app = Flask(__name__)

    # 加載配置
    profile = os.getenv("TACSEARCH_PROFILE", "local").lower()
    load_app_config(app, profile)
    if test_config:
        app.config.update(test_config)
    else:
        print_config_info(app)

    # 設定日誌
    log_level = setup_logger(app)
    logger.info(f"Application started in {profile} environment with log level: {log_level}")

    # 載入特徵資料庫
    initialize_feature_db(app.config)

    # 初始化API路由
    init_app(app)
    logger.info("API routes initialized")

    return app


def initialize_feature_db(config):
    """載入特徵資料庫；沒有資料庫時服務仍可啟動，只是無法預測"""
    loaded = init_feature_db(
        config.get("TACSEARCH_DB_PATH"),
        clock=config.get("TACSEARCH_CLOCK"),
        steps_per_second=config.get("TACSEARCH_STEPS_PER_SECOND"),
        replay_timeout=config.get("TACSEARCH_REPLAY_TIMEOUT"),
        tactic_timeout=config.get("TACSEARCH_TACTIC_TIMEOUT"),
    )
    if loaded:
        logger.info("Feature db initialized successfully")
