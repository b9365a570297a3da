import pytest
import torch

from checkpoint import Checkpoint
from exceptions import DuplicateEncoder, UnknownEncoder
from extend import ExtensionPlan, clone_encoder, compare_convergence, extend, freeze_set, steps_to_reach
from tokenizer import BOS_ID, EOS_ID
from training import TrainHyper, TrainingPair, train
from transformer import LifterModel, beam_search

from conftest import tiny_config

BASE_PAIRS = [
    TrainingPair(src_ids=[5, 6, EOS_ID], tgt_ids=[BOS_ID, 8, 9, EOS_ID], encoder='x86_64'),
    TrainingPair(src_ids=[6, 7, EOS_ID], tgt_ids=[BOS_ID, 9, 10, EOS_ID], encoder='x86_64'),
]
NEW_PAIRS = [
    TrainingPair(src_ids=[16, 17, EOS_ID], tgt_ids=[BOS_ID, 8, 9, EOS_ID], encoder='aarch64'),
    TrainingPair(src_ids=[17, 7, EOS_ID], tgt_ids=[BOS_ID, 9, 10, EOS_ID], encoder='aarch64'),
]
SHARD = [[5, 6, EOS_ID], [6, 7, EOS_ID], [11, 12, 13, EOS_ID]]


def _hyper(max_steps=20):
    return TrainHyper(lr=1e-2, warmup=2, batch=2, max_steps=max_steps, eval_every=10, checkpoint_every=0)


@pytest.fixture
def base_checkpoint():
    model = LifterModel(tiny_config())
    train(model, BASE_PAIRS, _hyper(), progress=False)
    return Checkpoint.from_model(model, vocab_version=1, step=20)


def _predictions(model, encoder_id):
    model.eval()
    return [[ids for ids, _ in beam_search(model, encoder_id, src, beam=3, max_len=6)] for src in SHARD]


def test_extension_leaves_prior_isa_untouched(base_checkpoint):
    base = base_checkpoint.to_model()
    before = _predictions(base, 'x86_64')
    plan = ExtensionPlan(base_checkpoint=base_checkpoint, source_encoder='x86_64', new_encoder='aarch64',
                         new_token_ids={16, 17}, hyper=_hyper(), vocab_size=18)
    ckpt, result = extend(plan, NEW_PAIRS, progress=False)
    model = ckpt.to_model()

    assert model.encoder_names == ['x86_64', 'aarch64']
    assert model.cfg.vocab_size == 18
    for name, tensor in base_checkpoint.tensors.items():
        if name == 'embeddings.weight':
            assert torch.equal(model.state_dict()[name][:16], tensor)
        else:
            assert torch.equal(model.state_dict()[name], tensor), name
    assert _predictions(model, 'x86_64') == before
    assert model.encoder_vocab == {'x86_64': 16, 'aarch64': 18}
    assert ckpt.extra['lineage'] == [{'from': 'x86_64', 'to': 'aarch64', 'new_tokens': 2, 'full_ft': False}]
    assert result.best_valid_nll is not None


def test_new_encoder_and_rows_are_trained(base_checkpoint):
    plan = ExtensionPlan(base_checkpoint=base_checkpoint, source_encoder='x86_64', new_encoder='aarch64',
                         new_token_ids={16, 17}, hyper=_hyper(), vocab_size=18)
    ckpt, _ = extend(plan, NEW_PAIRS, progress=False)
    cloned = {k.replace('encoders.x86_64.', 'encoders.aarch64.'): v
              for k, v in base_checkpoint.tensors.items() if k.startswith('encoders.x86_64.')}
    changed = [name for name, tensor in cloned.items() if not torch.equal(ckpt.tensors[name], tensor)]
    assert changed


def test_full_fine_tuning_moves_the_decoder(base_checkpoint):
    plan = ExtensionPlan(base_checkpoint=base_checkpoint, source_encoder='x86_64', new_encoder='aarch64',
                         new_token_ids={16, 17}, hyper=_hyper(), vocab_size=18, full_ft=True)
    ckpt, _ = extend(plan, NEW_PAIRS, progress=False)
    decoder = [n for n in base_checkpoint.tensors if n.startswith('decoder.')]
    assert any(not torch.equal(ckpt.tensors[n], base_checkpoint.tensors[n]) for n in decoder)


def test_clone_errors():
    model = LifterModel(tiny_config())
    with pytest.raises(UnknownEncoder):
        clone_encoder(model, 'arm', 'riscv64')
    clone_encoder(model, 'x86_64', 'aarch64')
    with pytest.raises(DuplicateEncoder):
        clone_encoder(model, 'x86_64', 'aarch64')
    for a, b in zip(model.encoders['x86_64'].parameters(), model.encoders['aarch64'].parameters()):
        assert torch.equal(a, b)
        assert a.data_ptr() != b.data_ptr()


def test_freeze_set():
    model = LifterModel(tiny_config(), encoder_names=('x86_64', 'aarch64'))
    mask = freeze_set(model, {3, 4})
    names = [n for n, _ in model.named_parameters()]
    assert all(mask.is_frozen(n) for n in names if n.startswith('decoder.'))
    assert all(mask.is_frozen(n) for n in names if n.startswith('encoders.x86_64.'))
    assert not any(mask.covers(n) for n in names if n.startswith('encoders.aarch64.'))
    rows = mask.frozen_rows['embeddings.weight']
    assert not rows[3] and not rows[4] and bool(rows[5])
    assert freeze_set(model, set()).is_frozen('embeddings.weight')


def test_convergence_comparison():
    incremental = [{'step': 10, 'valid_nll': 2.0}, {'step': 20, 'valid_nll': 1.0}]
    scratch = [{'step': 10, 'valid_nll': 3.0}, {'step': 20, 'valid_nll': 2.0}, {'step': 40, 'valid_nll': 1.5}]
    assert steps_to_reach(incremental, 1.5) == 20
    assert steps_to_reach(scratch, 0.5) is None
    summary = compare_convergence(incremental, scratch)
    assert summary == {'level': 1.5, 'incremental_steps': 20, 'scratch_steps': 40, 'speedup': 2.0}
