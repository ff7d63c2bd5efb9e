"""v1 JSON API：特徵、戰術預測與證明搜尋"""
from .routes import api_v1_blueprint
