"""
Maximum-likelihood training for LifterModel.

Usage:
    pairs = build_pairs(records, vocab, source_spec, TARGET_SPEC, split='train')
    result = train(model, pairs, TrainHyper(max_steps=200), encoder_id='x86_64')
"""

import copy
import logging
import math
import os
from dataclasses import dataclass, field

import torch
from tqdm import tqdm

from checkpoint import Checkpoint, save_checkpoint
from exceptions import EmptyDataset
from tokenizer import BOS_ID, EOS_ID, encode
from transformer import forward, pad_batch

logger = logging.getLogger(__name__)


@dataclass
class TrainingPair:
    src_ids: list
    tgt_ids: list  # wrapped in bos/eos
    id: str = ''
    encoder: str = ''


@dataclass
class TrainHyper:
    lr: float = 1e-4
    warmup: int = 10000
    batch: int = 16
    weight_decay: float = 5e-3
    max_steps: int = 2000
    eval_every: int = 100
    checkpoint_every: int = 500
    seed: int = 0
    betas: tuple = (0.9, 0.98)
    eps: float = 1e-9

    @classmethod
    def from_profile(cls, profile, seed=0):
        return cls(lr=profile.lr, warmup=profile.warmup, batch=profile.batch,
                   weight_decay=profile.weight_decay, max_steps=profile.max_steps,
                   eval_every=profile.eval_every, checkpoint_every=profile.checkpoint_every, seed=seed)


@dataclass
class FreezeMask:
    """
    Parameters excluded from updates.

    ``frozen`` holds whole tensors by parameter name; ``frozen_rows`` maps a
    parameter name to a boolean row mask (True = frozen row) for tensors that
    are only partly trainable, such as the tied embedding table.
    """
    frozen: set = field(default_factory=set)
    frozen_rows: dict = field(default_factory=dict)

    @classmethod
    def everything(cls, model):
        return cls(frozen={name for name, _ in model.named_parameters()})

    def is_frozen(self, name):
        return name in self.frozen

    def covers(self, name):
        return name in self.frozen or name in self.frozen_rows


@dataclass
class TrainResult:
    model: object
    curve: list  # dicts: step, lr, train_nll, valid_nll (valid only at eval points)
    best_step: int = 0
    best_valid_nll: float = None
    checkpoints: list = field(default_factory=list)

    def valid_curve(self):
        return [(p['step'], p['valid_nll']) for p in self.curve if p.get('valid_nll') is not None]


def lr_at(step, base, warmup):
    """Inverse square-root schedule with linear warmup."""
    if step < 1 or warmup < 1:
        raise ValueError("step and warmup must be >= 1")
    return base * min(step / warmup, math.sqrt(warmup / step))


def build_pairs(records, vocab, source_spec, target_spec, split=None, max_positions=2048, encoder=None,
                target_vocab=None):
    """
    Tokenise (source, target) text pairs out of parallel records.

    ``target_vocab`` encodes the target side when it differs from the source
    vocabulary (an extended encoder still decodes with the base IR tokens).

    Records missing either representation, or whose sequences would not fit
    max_positions, are skipped.

    Returns:
        list: TrainingPair
    """
    pairs = []
    too_long = 0
    for record in records:
        if split is not None and record.split != split:
            continue
        src_text = record.texts.get(source_spec)
        tgt_text = record.texts.get(target_spec)
        if src_text is None or tgt_text is None:
            continue
        src = encode(vocab, src_text) + [EOS_ID]
        tgt = [BOS_ID] + encode(target_vocab or vocab, tgt_text) + [EOS_ID]
        if len(src) > max_positions or len(tgt) > max_positions:
            too_long += 1
            continue
        pairs.append(TrainingPair(src_ids=src, tgt_ids=tgt, id=record.function_id,
                                  encoder=encoder or source_spec.isa.value))
    if too_long:
        logger.warning(f"Skipped {too_long} pairs longer than {max_positions} tokens")
    return pairs


def _batches(n, batch, generator):
    while True:
        order = torch.randperm(n, generator=generator).tolist()
        for i in range(0, n, batch):
            yield order[i:i + batch]


def _batch_nll(model, encoder_id, pairs):
    src = pad_batch([p.src_ids for p in pairs])
    tgt = pad_batch([p.tgt_ids for p in pairs])
    _, nll = forward(model, encoder_id, src, tgt)
    tokens = sum(len(p.tgt_ids) - 1 for p in pairs)
    return nll, tokens


@torch.no_grad()
def evaluate_nll(model, encoder_id, pairs, batch=16):
    """Mean per-token nll over pairs with dropout off."""
    if not pairs:
        raise EmptyDataset("no pairs to evaluate")
    was_training = model.training
    model.eval()
    total, tokens = 0.0, 0
    for i in range(0, len(pairs), batch):
        nll, n = _batch_nll(model, encoder_id, pairs[i:i + batch])
        total += float(nll)
        tokens += n
    model.train(was_training)
    return total / max(tokens, 1)


def train(model, pairs, hyper=None, encoder_id=None, freeze_mask=None, valid_pairs=None,
          checkpoint_dir=None, vocab_version=1, progress=True):
    """
    Train with AdamW and the inverse square-root schedule.

    Tensors named in ``freeze_mask.frozen`` are left out of the optimizer;
    rows flagged in ``freeze_mask.frozen_rows`` are restored from a snapshot
    after every step, so frozen values stay bitwise identical. The returned
    model carries the weights of the best validation point.

    Args:
        model (LifterModel): Model to train in place
        pairs (list): TrainingPair list
        hyper (TrainHyper): Hyperparameters
        encoder_id (str): Encoder to train through (defaults to the pairs' encoder)
        freeze_mask (FreezeMask): Parameters to keep fixed
        valid_pairs (list): Held-out pairs for model selection (train pairs if None)
        checkpoint_dir (str): Where periodic and best checkpoints go (skipped if None)
        vocab_version (int): Recorded in checkpoints

    Returns:
        TrainResult
    """
    if not pairs:
        raise EmptyDataset("training set is empty")
    hyper = hyper or TrainHyper()
    freeze_mask = freeze_mask or FreezeMask()
    encoder_id = encoder_id or pairs[0].encoder
    valid_pairs = valid_pairs or pairs
    model.encoder(encoder_id)

    torch.manual_seed(hyper.seed)
    generator = torch.Generator().manual_seed(hyper.seed)

    named = dict(model.named_parameters())
    saved_flags = {name: p.requires_grad for name, p in named.items()}
    trainable = []
    for name, param in named.items():
        if freeze_mask.is_frozen(name):
            param.requires_grad_(False)
        else:
            param.requires_grad_(True)
            trainable.append(param)
    row_snapshots = {}
    for name, rows in freeze_mask.frozen_rows.items():
        if name in named and not freeze_mask.is_frozen(name):
            rows = torch.as_tensor(rows, dtype=torch.bool)
            row_snapshots[name] = (rows, named[name].detach().clone())

    optimizer = None
    if trainable:
        optimizer = torch.optim.AdamW(trainable, lr=hyper.lr, betas=hyper.betas, eps=hyper.eps,
                                      weight_decay=hyper.weight_decay)
    else:
        logger.warning("Every parameter is frozen; training only evaluates")

    result = TrainResult(model=model, curve=[])
    best_state = None
    batches = _batches(len(pairs), hyper.batch, generator)
    model.train()

    steps = tqdm(range(1, hyper.max_steps + 1), desc=f"train[{encoder_id}]", disable=not progress)
    try:
        for step in steps:
            rate = lr_at(step, hyper.lr, hyper.warmup)
            batch = [pairs[i] for i in next(batches)]
            if optimizer is not None:
                for group in optimizer.param_groups:
                    group['lr'] = rate
                optimizer.zero_grad(set_to_none=True)
                nll, tokens = _batch_nll(model, encoder_id, batch)
                loss = nll / max(tokens, 1)
                loss.backward()
                optimizer.step()
                with torch.no_grad():
                    for name, (rows, snapshot) in row_snapshots.items():
                        named[name][rows] = snapshot[rows]
            else:
                with torch.no_grad():
                    nll, tokens = _batch_nll(model, encoder_id, batch)
                    loss = nll / max(tokens, 1)

            point = {'step': step, 'lr': rate, 'train_nll': float(loss)}
            if step % hyper.eval_every == 0 or step == hyper.max_steps:
                point['valid_nll'] = evaluate_nll(model, encoder_id, valid_pairs, hyper.batch)
                logger.info(f"step {step}: train {point['train_nll']:.4f} valid {point['valid_nll']:.4f}")
                if result.best_valid_nll is None or point['valid_nll'] < result.best_valid_nll:
                    result.best_valid_nll = point['valid_nll']
                    result.best_step = step
                    best_state = copy.deepcopy(model.state_dict())
                    if checkpoint_dir:
                        path = os.path.join(checkpoint_dir, 'best.ckpt')
                        save_checkpoint(path, Checkpoint.from_model(model, vocab_version, step, point['valid_nll']))
            result.curve.append(point)
            steps.set_postfix(nll=f"{point['train_nll']:.3f}")

            if checkpoint_dir and hyper.checkpoint_every and step % hyper.checkpoint_every == 0:
                path = os.path.join(checkpoint_dir, f"step_{step:07d}.ckpt")
                save_checkpoint(path, Checkpoint.from_model(model, vocab_version, step, point.get('valid_nll')))
                result.checkpoints.append(path)
    finally:
        for name, param in named.items():
            param.requires_grad_(saved_flags[name])

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


def grad_check(model, pair, eps=1e-5, n_entries=200, seed=0, encoder_id=None):
    """
    Compare analytic gradients of the nll against central differences.

    The model should be in double precision and small enough for finite
    differences. Entries are sampled uniformly across all parameters,
    including frozen ones.

    Returns:
        float: max |analytic - numeric| / max(|analytic| + |numeric|, 1e-6)
    """
    if n_entries < 1:
        raise ValueError("grad_check needs at least one entry")
    encoder_id = encoder_id or pair.encoder or model.encoder_names[0]
    was_training = model.training
    model.eval()
    params = list(model.named_parameters())
    saved_flags = [p.requires_grad for _, p in params]
    for _, p in params:
        p.requires_grad_(True)
        p.grad = None

    try:
        _, nll = forward(model, encoder_id, pair.src_ids, pair.tgt_ids)
        nll.backward()

        sizes = [p.numel() for _, p in params]
        total = sum(sizes)
        generator = torch.Generator().manual_seed(seed)
        picks = torch.randperm(total, generator=generator)[:min(n_entries, total)].tolist()

        worst = 0.0
        with torch.no_grad():
            for flat in picks:
                k = 0
                while flat >= sizes[k]:
                    flat -= sizes[k]
                    k += 1
                _, param = params[k]
                view = param.view(-1)
                analytic = float(param.grad.view(-1)[flat])
                original = view[flat].item()
                view[flat] = original + eps
                plus = float(forward(model, encoder_id, pair.src_ids, pair.tgt_ids)[1])
                view[flat] = original - eps
                minus = float(forward(model, encoder_id, pair.src_ids, pair.tgt_ids)[1])
                view[flat] = original
                numeric = (plus - minus) / (2 * eps)
                rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
                worst = max(worst, rel)
    finally:
        for (_, p), flag in zip(params, saved_flags):
            p.grad = None
            p.requires_grad_(flag)
        model.train(was_training)
    return worst
