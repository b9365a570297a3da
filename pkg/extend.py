"""
Add a source ISA (or compiler) to a trained lifter.

The most recent encoder is cloned under a new name; the shared decoder, every
prior encoder and the embedding rows of old tokens stay frozen, so all
previously supported inputs keep producing identical predictions.
"""

import copy
import logging
from dataclasses import dataclass, field

import torch

from checkpoint import Checkpoint, load_checkpoint
from exceptions import DuplicateEncoder, UnknownEncoder
from training import FreezeMask, TrainHyper, train
from transformer import resize_embeddings

logger = logging.getLogger(__name__)

EMBEDDING_PARAM = 'embeddings.weight'


@dataclass
class ExtensionPlan:
    base_checkpoint: object  # path or Checkpoint
    source_encoder: str
    new_encoder: str
    new_token_ids: set = field(default_factory=set)
    hyper: TrainHyper = field(default_factory=lambda: TrainHyper(lr=5e-5, warmup=5000, max_steps=1000))
    full_ft: bool = False
    vocab_size: int = None
    vocab_version: int = None

    def load_base(self):
        if isinstance(self.base_checkpoint, Checkpoint):
            return self.base_checkpoint
        return load_checkpoint(self.base_checkpoint)


def clone_encoder(model, from_isa, to_isa):
    """Deep-copy one encoder stack under a new name; nothing else changes."""
    if from_isa not in model.encoders:
        raise UnknownEncoder(f"no encoder named '{from_isa}'")
    if to_isa in model.encoders:
        raise DuplicateEncoder(f"encoder '{to_isa}' already exists")
    model.encoders[to_isa] = copy.deepcopy(model.encoders[from_isa])
    model.encoder_vocab[to_isa] = model.cfg.vocab_size
    logger.info(f"Cloned encoder {from_isa} -> {to_isa}")
    return model


def freeze_set(model, new_token_ids, trainable_encoder=None):
    """
    Build the freeze mask for an extension run.

    Frozen: the whole decoder, every encoder except ``trainable_encoder`` and
    all embedding rows except ``new_token_ids``. When no encoder is named the
    most recently added one is trainable.

    Returns:
        FreezeMask
    """
    trainable_encoder = trainable_encoder or model.encoder_names[-1]
    mask = FreezeMask()
    for name, _ in model.named_parameters():
        if name.startswith('decoder.'):
            mask.frozen.add(name)
        elif name.startswith('encoders.') and not name.startswith(f"encoders.{trainable_encoder}."):
            mask.frozen.add(name)

    new_ids = sorted(int(i) for i in new_token_ids)
    if not new_ids:
        mask.frozen.add(EMBEDDING_PARAM)
    else:
        rows = torch.ones(model.embeddings.weight.shape[0], dtype=torch.bool)
        rows[new_ids] = False
        mask.frozen_rows[EMBEDDING_PARAM] = rows
    return mask


def extend(plan, pairs, valid_pairs=None, checkpoint_dir=None, progress=True):
    """
    Run one extension step.

    Args:
        plan (ExtensionPlan): What to add and how to train it
        pairs (list): TrainingPair list for the new ISA, tokenised with the merged vocabulary
        valid_pairs (list): Held-out pairs for model selection
        checkpoint_dir (str): Where to write checkpoints (None to skip)

    Returns:
        tuple: (Checkpoint, TrainResult)
    """
    base = plan.load_base()
    model = base.to_model()
    if plan.source_encoder not in model.encoders:
        raise UnknownEncoder(f"base checkpoint has no encoder '{plan.source_encoder}'")

    needed = max([plan.vocab_size or 0] + [int(i) + 1 for i in plan.new_token_ids])
    if needed > model.cfg.vocab_size:
        resize_embeddings(model, needed)
        logger.info(f"Embedding table grown to {needed} rows")

    clone_encoder(model, plan.source_encoder, plan.new_encoder)
    mask = FreezeMask() if plan.full_ft else freeze_set(model, plan.new_token_ids, plan.new_encoder)
    if plan.full_ft:
        logger.info("Full fine-tuning: decoder and embeddings are trainable")

    for pair in pairs:
        pair.encoder = plan.new_encoder
    result = train(model, pairs, plan.hyper, encoder_id=plan.new_encoder, freeze_mask=mask,
                   valid_pairs=valid_pairs, checkpoint_dir=checkpoint_dir,
                   vocab_version=plan.vocab_version or base.vocab_version, progress=progress)

    lineage = list(base.extra.get('lineage', [])) + [{
        'from': plan.source_encoder, 'to': plan.new_encoder,
        'new_tokens': len(plan.new_token_ids), 'full_ft': plan.full_ft,
    }]
    ckpt = Checkpoint.from_model(model, vocab_version=plan.vocab_version or base.vocab_version,
                                 step=result.best_step, valid_nll=result.best_valid_nll,
                                 extra={**base.extra, 'lineage': lineage})
    return ckpt, result


def steps_to_reach(curve, level):
    """First step whose validation nll is at or below level, or None."""
    for point in curve:
        value = point.get('valid_nll') if isinstance(point, dict) else point[1]
        step = point['step'] if isinstance(point, dict) else point[0]
        if value is not None and value <= level:
            return step
    return None


def compare_convergence(incremental_curve, scratch_curve, level=None):
    """
    Steps each run needs to reach a common validation nll.

    The default level is the worse of the two best values, so both runs reach it.
    """
    def best(curve):
        values = [p.get('valid_nll') if isinstance(p, dict) else p[1] for p in curve]
        values = [v for v in values if v is not None]
        return min(values) if values else None

    if level is None:
        bests = [b for b in (best(incremental_curve), best(scratch_curve)) if b is not None]
        level = max(bests) if bests else float('inf')
    incremental = steps_to_reach(incremental_curve, level)
    scratch = steps_to_reach(scratch_curve, level)
    speedup = scratch / incremental if incremental and scratch else None
    return {'level': level, 'incremental_steps': incremental, 'scratch_steps': scratch, 'speedup': speedup}
