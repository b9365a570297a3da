"""
Application factory: stage manifest database, result-table filters, the
lifting blueprint and the service log.
"""

import logging
import os
from logging.handlers import RotatingFileHandler

from flask import Flask

import filters
from config import LOG_FORMAT, Config
from extensions import db

SERVICE_LOG_HANDLER = 'lifter-service'


def _attach_service_log(app):
    """Send every module logger (stages, verifier, HTTP service) to ``<LOG_DIR>/lifter.log``."""
    log_dir = app.config['LOG_DIR']
    os.makedirs(log_dir, exist_ok=True)
    root = logging.getLogger()
    for existing in [h for h in root.handlers if h.get_name() == SERVICE_LOG_HANDLER]:
        root.removeHandler(existing)
        existing.close()
    handler = RotatingFileHandler(os.path.join(log_dir, 'lifter.log'), maxBytes=1024 * 1024, backupCount=5,
                                  encoding='utf-8')
    handler.set_name(SERVICE_LOG_HANDLER)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    level = logging.getLevelName(str(app.config['LOG_LEVEL']).upper())
    if not isinstance(level, int):
        level = logging.INFO
    handler.setLevel(level)
    root.addHandler(handler)
    if root.level == logging.NOTSET or root.level > level:
        root.setLevel(level)
    app.logger.info(f"Lifter service: checkpoint={app.config.get('LIFTER_CHECKPOINT') or '-'} "
                    f"vocab={app.config.get('LIFTER_VOCAB') or '-'} "
                    f"manifest={app.config['SQLALCHEMY_DATABASE_URI']}")
    return handler


def create_app(config_class=Config):
    app = Flask(__name__)
    app.config.from_object(config_class)

    db.init_app(app)
    filters.init_app(app)

    if not app.debug and not app.testing:
        _attach_service_log(app)

    from routes import lifter_bp
    app.register_blueprint(lifter_bp)

    # Stage manifest tables
    with app.app_context():
        db_uri = app.config.get('SQLALCHEMY_DATABASE_URI', '')
        if db_uri.startswith('sqlite:///'):
            db_path = db_uri.replace('sqlite:///', '', 1)
            os.makedirs(os.path.dirname(os.path.abspath(db_path)), exist_ok=True)
        import models  # noqa: F401  registers the tables
        db.create_all()

    return app


if __name__ == '__main__':
    app = create_app()
    app.run(debug=True)
