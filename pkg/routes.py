from flask import Blueprint, Response, abort, current_app, jsonify, request
from checkpoint import CheckpointError, load_checkpoint
from exceptions import SequenceTooLong, UnknownEncoder
from models import StageRun
from pipeline import lift_scored
from tokenizer import load_vocab
import os

# Create blueprint
lifter_bp = Blueprint('lifter', __name__)

MAX_BEAM = 5


def _served_model():
    """Model and vocabulary named by LIFTER_CHECKPOINT / LIFTER_VOCAB, loaded once per app."""
    cache = current_app.extensions.setdefault('lifter', {})
    if 'model' not in cache:
        ckpt_path = current_app.config.get('LIFTER_CHECKPOINT')
        vocab_path = current_app.config.get('LIFTER_VOCAB')
        if not ckpt_path or not vocab_path:
            return None, None
        model = load_checkpoint(ckpt_path).to_model()
        model.eval()
        cache['model'] = model
        cache['vocab'] = load_vocab(vocab_path)
        current_app.logger.info(f"Serving {ckpt_path} with encoders {model.encoder_names}")
    return cache['model'], cache['vocab']


@lifter_bp.route('/health')
def health():
    model = current_app.extensions.get('lifter', {}).get('model')
    return jsonify({
        'status': 'ok',
        'model_loaded': model is not None,
        'encoders': model.encoder_names if model is not None else [],
    })


@lifter_bp.route('/lift', methods=['POST'])
def lift_asm():
    data = request.get_json(silent=True) or {}
    isa = data.get('isa')
    asm = data.get('asm')
    if not isa or not isinstance(asm, str):
        return jsonify({'status': 'error', 'message': 'isa and asm are required'}), 400
    beam = data.get('beam', MAX_BEAM)
    if not isinstance(beam, int) or not 1 <= beam <= MAX_BEAM:
        return jsonify({'status': 'error', 'message': f'beam must be between 1 and {MAX_BEAM}'}), 400

    try:
        model, vocab = _served_model()
    except (CheckpointError, OSError) as e:
        current_app.logger.error(f"Error loading served model: {str(e)}")
        return jsonify({'status': 'error', 'message': 'model could not be loaded'}), 503
    if model is None:
        return jsonify({'status': 'error', 'message': 'no model configured'}), 503

    try:
        scored = lift_scored(model, isa, asm, vocab, beam=beam)
    except UnknownEncoder as e:
        return jsonify({'status': 'error', 'message': str(e)}), 400
    except SequenceTooLong as e:
        return jsonify({'status': 'error', 'message': str(e)}), 413
    except Exception as e:
        current_app.logger.error(f"Error lifting {isa} input: {e}")
        return jsonify({'status': 'error', 'message': str(e)}), 500

    return jsonify({
        'status': 'success',
        'hypotheses': [text for text, _ in scored],
        'scores': [score for _, score in scored],
    })


@lifter_bp.route('/runs')
def runs():
    limit = request.args.get('limit', 100, type=int)
    stage = request.args.get('stage')
    query = StageRun.query
    if stage:
        query = query.filter_by(stage=stage)
    rows = query.order_by(StageRun.id.desc()).limit(max(1, min(limit, 1000))).all()
    return jsonify({'runs': [run.to_dict() for run in rows]})


def _latest_report_path():
    configured = current_app.config.get('LIFTER_REPORT')
    if configured:
        return configured
    run = StageRun.latest_success('evaluate')
    if run is None:
        return None
    return next((p for p in run.output_manifest if p.endswith('.md')), None)


@lifter_bp.route('/report')
def latest_report():
    path = _latest_report_path()
    if not path or not os.path.exists(path):
        abort(404)
    with open(path, 'r', encoding='utf-8') as f:
        return Response(f.read(), mimetype='text/markdown')
