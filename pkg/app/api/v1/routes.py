import logging

from flask import Blueprint, current_app, jsonify, request

from app.errors import InvariantViolation, ParseError, TacsearchError, TermError
from app.extensions import get_feature_db, get_tactic_library
from app.services.feature_service import features_of_goal
from app.services.harness_service import strategy
from app.services.knn_service import preselect_tactics, score_tactics
from app.services.search_service import search
from app.utils.syntax import parse_goal

api_v1_blueprint = Blueprint('api_v1', __name__)
logger = logging.getLogger(__name__)


def _error(message, status):
    return jsonify({"error": message}), status


def _goal_from_request(db):
    payload = request.get_json(silent=True) or {}
    text = payload.get("goal")
    if not isinstance(text, str) or not text.strip():
        raise ParseError("request needs a 'goal' string")
    return parse_goal(text, db.signature if db is not None else None), payload


@api_v1_blueprint.errorhandler(ParseError)
@api_v1_blueprint.errorhandler(TermError)
def handle_bad_goal(ex):
    logger.warning(f"Rejected goal: {ex}")
    return _error(str(ex), 400)


@api_v1_blueprint.errorhandler(InvariantViolation)
def handle_invariant(ex):
    logger.error(f"Invariant violation while serving {request.path}: {ex}")
    return _error(str(ex), 500)


@api_v1_blueprint.route('/features', methods=['POST'])
def features():
    goal, _ = _goal_from_request(get_feature_db())
    return jsonify({"features": sorted(str(f) for f in features_of_goal(goal))}), 200


@api_v1_blueprint.route('/predict', methods=['POST'])
def predict():
    db = get_feature_db()
    if db is None:
        return _error("no feature database loaded", 503)
    goal, payload = _goal_from_request(db)
    n = int(payload.get("n", 10))
    tau1 = current_app.config["TACSEARCH_TAU1"]
    candidates = preselect_tactics(db, goal, current_app.config["TACSEARCH_PRESELECT_N"], tau1)
    scored = score_tactics(db, goal, candidates, tau1=tau1)[:n]
    return jsonify({"tactics": [{"tactic": s.tactic, "score": s.norm_score} for s in scored]}), 200


@api_v1_blueprint.route('/prove', methods=['POST'])
def prove():
    db = get_feature_db()
    if db is None:
        return _error("no feature database loaded", 503)
    goal, payload = _goal_from_request(db)
    name = payload.get("strategy") or current_app.config["TACSEARCH_DEFAULT_STRATEGY"]
    try:
        cfg = strategy(name, search_budget=current_app.config["TACSEARCH_SEARCH_TIMEOUT"],
                       tau1=current_app.config["TACSEARCH_TAU1"],
                       preselect_n=current_app.config["TACSEARCH_PRESELECT_N"])
    except TacsearchError as ex:
        return _error(str(ex), 400)

    result = search(goal, db, get_tactic_library(), cfg)
    logger.info(f"Prove request with {cfg.name}: {result.outcome}")
    stats = result.stats
    return jsonify({
        "outcome": result.outcome,
        "script": result.script,
        "stats": {
            "node_count": stats.node_count,
            "proof_size": stats.proof_size,
            "elapsed": stats.elapsed,
            "time_breakdown": stats.time_breakdown,
        },
    }), 200
