from app import create_app

# Gunicorn 入口：gunicorn wsgi:app
# 特徵資料庫由 TACSEARCH_DB_PATH 指定，未設定時 /v1/predict 與 /v1/prove 回傳 503
app = create_app()
