import json
from datetime import datetime

from extensions import db


class StageRun(db.Model):
    """One execution of a pipeline stage and the manifest of what it produced."""

    __tablename__ = 'stage_runs'

    id = db.Column(db.Integer, primary_key=True)
    stage = db.Column(db.String(32), nullable=False, index=True)
    input_hash = db.Column(db.String(64), nullable=False, index=True)
    outputs = db.Column(db.Text, default='{}')  # JSON: path -> sha256
    wall_time = db.Column(db.Float, default=0.0)
    status = db.Column(db.String(16), default='running')  # 'running', 'success', 'failed'
    log_path = db.Column(db.String(512))
    error = db.Column(db.Text)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)
    finished_at = db.Column(db.DateTime)

    artifacts = db.relationship('ArtifactRecord', backref='run', lazy='dynamic',
                                cascade='all, delete-orphan')

    @property
    def output_manifest(self):
        return json.loads(self.outputs or '{}')

    @classmethod
    def latest_success(cls, stage):
        return cls.query.filter_by(stage=stage, status='success') \
            .order_by(cls.id.desc()).first()

    def to_dict(self):
        return {
            'id': self.id,
            'stage': self.stage,
            'input_hash': self.input_hash,
            'outputs': self.output_manifest,
            'wall_time': self.wall_time,
            'status': self.status,
            'log_path': self.log_path,
            'error': self.error,
            'created_at': self.created_at.isoformat() if self.created_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None,
        }

    def __repr__(self):
        return f'<StageRun {self.stage} {self.status}>'


class ArtifactRecord(db.Model):
    __tablename__ = 'artifacts'

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey('stage_runs.id'), nullable=False)
    path = db.Column(db.String(512), nullable=False, index=True)
    sha256 = db.Column(db.String(64), nullable=False)
    size = db.Column(db.Integer, default=0)
    stage = db.Column(db.String(32), nullable=False)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    def to_dict(self):
        return {'path': self.path, 'sha256': self.sha256, 'size': self.size, 'stage': self.stage}
