import hashlib
import json
import logging
import os
import tempfile

from werkzeug.utils import secure_filename

logger = logging.getLogger(__name__)


def sha256_text(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def sha256_file(path, chunk_size=1 << 20):
    """Content hash of a file, or None if it does not exist."""
    if not path or not os.path.exists(path):
        return None
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        while True:
            chunk = f.read(chunk_size)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


def derive_seed(root_seed, stage):
    """Split the root seed into an independent, reproducible seed per stage."""
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


def ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def atomic_write_text(path, text):
    """Write text through a temp file in the same directory and rename over the target."""
    ensure_parent(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def dumps_line(obj):
    return json.dumps(obj, sort_keys=True, ensure_ascii=True)


def write_jsonl(path, rows):
    atomic_write_text(path, ''.join(dumps_line(row) + '\n' for row in rows))


def read_jsonl(path):
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                logger.error(f"Skipping malformed line {lineno} in {path}: {e}")
    return rows


def artifact_dir(base, *parts):
    """
    Create a directory for per-item artifacts.

    Item identifiers come from user-supplied datasets, so every component is
    passed through secure_filename before touching the filesystem.

    Args:
        base (str): Artifacts root
        parts (str): Path components (function id, hypothesis index, ...)

    Returns:
        str: Absolute path of the created directory
    """
    safe = [secure_filename(str(p)) or '_' for p in parts]
    path = os.path.join(base, *safe)
    os.makedirs(path, exist_ok=True)
    return path
