from flask_sqlalchemy import SQLAlchemy

# Stage manifest store (StageRun, ArtifactRecord rows); bound in main.create_app
db = SQLAlchemy()
