# app/extensions.py
import logging

from app.errors import DatabaseFormatError
from app.models.feature_db import FeatureDb, load_db
from app.services.tactic_service import TacticLibrary

feature_db = None
tactic_library = None
logger = logging.getLogger(__name__)


def init_feature_db(db_path, clock="steps", steps_per_second=100000, replay_timeout=1.0, tactic_timeout=0.02):
    """
    載入特徵資料庫，並以資料庫中的定理敘述建立戰術庫。

    :return: 是否成功載入
    """
    global feature_db, tactic_library
    feature_db = None
    tactic_library = None

    if not db_path:
        logger.warning("TACSEARCH_DB_PATH not provided, prediction endpoints are unavailable")
        return False

    try:
        db = load_db(db_path)
    except OSError as e:
        logger.error(f"Cannot read feature db {db_path}: {e}")
        return False
    except DatabaseFormatError as e:
        logger.error(f"Malformed feature db {db_path}: {e}")
        return False

    set_feature_db(db, TacticLibrary(db.statements, db.signature, clock=clock, steps_per_second=steps_per_second,
                                     replay_timeout=replay_timeout, tactic_timeout=tactic_timeout))
    return True


def set_feature_db(db: FeatureDb, library: TacticLibrary):
    global feature_db, tactic_library
    feature_db = db
    tactic_library = library
    logger.info(f"Feature db ready: {db.total_docs} goal vectors, {len(db.statements)} theorems")


def get_feature_db():
    return feature_db


def get_tactic_library():
    return tactic_library
