import json
import logging

from config import TestingConfig
from extensions import db
from main import SERVICE_LOG_HANDLER, create_app
from models import StageRun
from transformer import LifterModel

from conftest import tiny_config


def _serve(app, tiny_vocab):
    model = LifterModel(tiny_config(vocab_size=len(tiny_vocab), max_positions=64))
    model.eval()
    app.extensions['lifter'] = {'model': model, 'vocab': tiny_vocab}
    return model


def test_health_without_model(client):
    response = client.get('/health')
    assert response.status_code == 200
    assert response.get_json() == {'status': 'ok', 'model_loaded': False, 'encoders': []}


def test_lift_validates_request(client):
    assert client.post('/lift', json={'isa': 'x86_64'}).status_code == 400
    assert client.post('/lift', json={'isa': 'x86_64', 'asm': 'retq', 'beam': 6}).status_code == 400
    assert client.post('/lift', data='not json').status_code == 400


def test_lift_without_model_is_unavailable(client):
    response = client.post('/lift', json={'isa': 'x86_64', 'asm': 'f:\nretq'})
    assert response.status_code == 503


def test_lift_with_served_model(app, client, tiny_vocab):
    _serve(app, tiny_vocab)
    assert client.get('/health').get_json()['encoders'] == ['x86_64']

    response = client.post('/lift', json={'isa': 'x86_64', 'asm': 'f:\nretq', 'beam': 2})
    assert response.status_code == 200
    data = response.get_json()
    assert data['status'] == 'success'
    assert 1 <= len(data['hypotheses']) <= 2
    assert len(data['scores']) == len(data['hypotheses'])

    assert client.post('/lift', json={'isa': 'riscv64', 'asm': 'f:\nret'}).status_code == 400
    too_long = {'isa': 'x86_64', 'asm': 'f:\n' + 'addl %esi, %edi\n' * 40}
    assert client.post('/lift', json=too_long).status_code == 413


def test_runs_listing(client):
    db.session.add_all([
        StageRun(stage='train', input_hash='a' * 64, status='success', outputs=json.dumps({'x.ckpt': 'b' * 64})),
        StageRun(stage='lift', input_hash='c' * 64, status='failed', error='boom'),
    ])
    db.session.commit()

    runs = client.get('/runs').get_json()['runs']
    assert [r['stage'] for r in runs] == ['lift', 'train']
    assert runs[1]['outputs'] == {'x.ckpt': 'b' * 64}
    filtered = client.get('/runs?stage=lift').get_json()['runs']
    assert len(filtered) == 1 and filtered[0]['error'] == 'boom'


def test_report(app, client, tmp_path):
    assert client.get('/report').status_code == 404

    path = tmp_path / 'report.md'
    path.write_text('# Lifting results\n')
    db.session.add(StageRun(stage='evaluate', input_hash='d' * 64, status='success',
                            outputs=json.dumps({str(path): 'e' * 64, str(tmp_path / 'report.csv'): 'f' * 64})))
    db.session.commit()
    response = client.get('/report')
    assert response.status_code == 200
    assert response.mimetype == 'text/markdown'
    assert response.get_data(as_text=True) == '# Lifting results\n'

    other = tmp_path / 'other.md'
    other.write_text('# Configured\n')
    app.config['LIFTER_REPORT'] = str(other)
    assert client.get('/report').get_data(as_text=True) == '# Configured\n'


def test_service_log_collects_module_loggers(tmp_path):
    class Cfg(TestingConfig):
        TESTING = False
        LOG_DIR = str(tmp_path / 'logs')
        LOG_LEVEL = 'warning'

    root = logging.getLogger()
    level = root.level
    create_app(Cfg)
    create_app(Cfg)
    handlers = [h for h in root.handlers if h.get_name() == SERVICE_LOG_HANDLER]
    try:
        assert len(handlers) == 1
        logging.getLogger('verify').warning('firejail not available')
        logging.getLogger('verify').info('not written')
        handlers[0].flush()
        text = (tmp_path / 'logs' / 'lifter.log').read_text(encoding='utf-8')
        assert ' WARNING verify: firejail not available' in text
        assert 'not written' not in text
    finally:
        for handler in handlers:
            root.removeHandler(handler)
            handler.close()
        root.setLevel(level)
