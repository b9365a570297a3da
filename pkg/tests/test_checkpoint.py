import pytest
import torch

from checkpoint import MAGIC, Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from transformer import LifterModel

from conftest import tiny_config


def test_round_trip(tmp_path, tiny_model):
    tiny_model.encoder_vocab['x86_64'] = 12
    path = tmp_path / 'model.ckpt'
    save_checkpoint(str(path), Checkpoint.from_model(tiny_model, vocab_version=3, step=7, valid_nll=1.5,
                                                     extra={'note': 'x'}))
    loaded = load_checkpoint(str(path))
    assert loaded.config == tiny_model.cfg
    assert loaded.encoder_names == ['x86_64']
    assert (loaded.vocab_version, loaded.step, loaded.valid_nll) == (3, 7, 1.5)
    assert loaded.extra == {'note': 'x'}
    model = loaded.to_model()
    assert model.encoder_vocab == {'x86_64': 12}
    for name, tensor in tiny_model.state_dict().items():
        assert torch.equal(model.state_dict()[name], tensor), name
        assert model.state_dict()[name].dtype == torch.float64


def test_float32_round_trip(tmp_path):
    model = LifterModel(tiny_config(), encoder_names=('x86_64', 'aarch64'))
    path = tmp_path / 'model.ckpt'
    save_checkpoint(str(path), Checkpoint.from_model(model))
    restored = load_checkpoint(str(path)).to_model()
    assert restored.encoder_names == ['x86_64', 'aarch64']
    for name, tensor in model.state_dict().items():
        assert torch.equal(restored.state_dict()[name], tensor), name


def test_rejects_other_files(tmp_path, tiny_model):
    path = tmp_path / 'bad.ckpt'
    path.write_bytes(b'not a checkpoint at all, just bytes')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
    path.write_bytes(b'LIFT')
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_detects_truncation(tmp_path, tiny_model):
    path = tmp_path / 'model.ckpt'
    save_checkpoint(str(path), Checkpoint.from_model(tiny_model))
    data = path.read_bytes()
    assert data.startswith(MAGIC)
    path.write_bytes(data[:-16])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
