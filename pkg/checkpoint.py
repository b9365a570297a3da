"""
Versioned binary checkpoint container.

Layout:
    8 bytes   magic b'LIFTCKPT'
    u32       format version (little-endian)
    u64       manifest length in bytes
    manifest  UTF-8 JSON: config, vocab_version, encoder names, step,
              validation nll and a tensor index (name, dtype, shape, offset, nbytes)
    payload   raw little-endian tensors, concatenated in index order
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from exceptions import LifterError
from transformer import LifterModel, ModelConfig
from utils import ensure_parent

logger = logging.getLogger(__name__)

MAGIC = b'LIFTCKPT'
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct('<8sIQ')

_DTYPES = {
    torch.float32: '<f4',
    torch.float64: '<f8',
    torch.float16: '<f2',
    torch.int64: '<i8',
    torch.int32: '<i4',
    torch.bool: '|b1',
}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


class CheckpointError(LifterError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    encoder_names: list
    tensors: dict  # parameter name -> torch.Tensor
    vocab_version: int = 1
    step: int = 0
    valid_nll: float = None
    extra: dict = field(default_factory=dict)
    encoder_vocab: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, vocab_version=1, step=0, valid_nll=None, extra=None):
        tensors = {name: t.detach().clone() for name, t in model.state_dict().items()}
        return cls(config=model.cfg, encoder_names=model.encoder_names, tensors=tensors,
                   vocab_version=vocab_version, step=step, valid_nll=valid_nll, extra=dict(extra or {}),
                   encoder_vocab=dict(model.encoder_vocab))

    def to_model(self):
        model = LifterModel(self.config, encoder_names=self.encoder_names)
        dtype = next(iter(self.tensors.values())).dtype if self.tensors else torch.float32
        model.to(dtype)
        model.load_state_dict(self.tensors, strict=True)
        model.encoder_vocab.update(self.encoder_vocab)
        return model


def _tensor_bytes(tensor):
    if tensor.dtype not in _DTYPES:
        raise CheckpointError(f"unsupported tensor dtype {tensor.dtype}")
    array = tensor.detach().cpu().contiguous().numpy()
    return np.ascontiguousarray(array, dtype=np.dtype(_DTYPES[tensor.dtype])).tobytes()


def save_checkpoint(path, checkpoint):
    """
    Write a checkpoint atomically.

    Args:
        path (str): Destination file
        checkpoint (Checkpoint): What to write
    """
    index = []
    blobs = []
    offset = 0
    for name in sorted(checkpoint.tensors):
        tensor = checkpoint.tensors[name]
        blob = _tensor_bytes(tensor)
        index.append({'name': name, 'dtype': _DTYPES[tensor.dtype], 'shape': list(tensor.shape),
                      'offset': offset, 'nbytes': len(blob)})
        blobs.append(blob)
        offset += len(blob)

    manifest = json.dumps({
        'config': checkpoint.config.to_dict(),
        'vocab_version': checkpoint.vocab_version,
        'encoders': list(checkpoint.encoder_names),
        'step': checkpoint.step,
        'valid_nll': checkpoint.valid_nll,
        'extra': checkpoint.extra,
        'encoder_vocab': checkpoint.encoder_vocab,
        'tensors': index,
    }, sort_keys=True).encode('utf-8')

    ensure_parent(path)
    tmp = f"{path}.tmp"
    with open(tmp, 'wb') as f:
        f.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint {path} (step {checkpoint.step}, {len(index)} tensors, {offset} bytes)")


def load_checkpoint(path):
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: Bad magic, unknown version or truncated payload
    """
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < _PREAMBLE.size:
        raise CheckpointError(f"{path}: file too short")
    magic, version, manifest_len = _PREAMBLE.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a lifter checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = _PREAMBLE.size
    manifest = json.loads(data[start:start + manifest_len].decode('utf-8'))
    payload = memoryview(data)[start + manifest_len:]

    tensors = {}
    for entry in manifest['tensors']:
        end = entry['offset'] + entry['nbytes']
        if end > len(payload):
            raise CheckpointError(f"{path}: tensor {entry['name']} truncated")
        array = np.frombuffer(payload[entry['offset']:end], dtype=np.dtype(entry['dtype']))
        array = array.reshape(entry['shape']).astype(array.dtype.newbyteorder('='), copy=True)
        tensors[entry['name']] = torch.from_numpy(array).to(_TORCH_DTYPES[entry['dtype']])

    return Checkpoint(config=ModelConfig(**manifest['config']), encoder_names=manifest['encoders'],
                      tensors=tensors, vocab_version=manifest.get('vocab_version', 1),
                      step=manifest.get('step', 0), valid_nll=manifest.get('valid_nll'),
                      extra=manifest.get('extra') or {},
                      encoder_vocab=manifest.get('encoder_vocab') or {})
