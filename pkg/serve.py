"""Launcher for the lifter HTTP service."""
import os

# Ensure we're in the right directory
os.chdir(os.path.dirname(os.path.abspath(__file__)))

from main import create_app

app = create_app()

if __name__ == '__main__':
    host = os.environ.get('LIFTER_HOST', '127.0.0.1')
    port = int(os.environ.get('LIFTER_PORT', '5000'))
    print(f"\n{'='*50}")
    print(f"  Lifter service running")
    print(f"  Checkpoint: {app.config.get('LIFTER_CHECKPOINT') or '(none)'}")
    print(f"  Local:      http://{host}:{port}")
    print(f"{'='*50}\n")
    app.run(host=host, port=port, debug=False)
