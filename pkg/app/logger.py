import logging

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']


def setup_logger(app=None, log_level=None):
    """
    設定 root logger；CLI 沒有 Flask app 時直接傳入 log_level。
    """
    if log_level is None:
        log_level = app.config.get('LOG_LEVEL', 'INFO') if app is not None else 'INFO'
    log_level = log_level.upper()

    if log_level not in LOG_LEVELS:
        log_level = 'INFO'

    # 設置 root logger 的格式與等級
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=getattr(logging, log_level)
    )
    logging.getLogger().setLevel(log_level)

    if app is not None:
        # 設置 Flask logger 的等級
        app.logger.setLevel(log_level)

        # 防止重複輸出
        app.logger.propagate = False
    return log_level
