"""
Stage orchestration with a content-hash manifest.

Stages run in a fixed order: build-corpus, train-tokenizer, train, extend,
lift, verify, evaluate. A stage is skipped when its settings and input files
hash to the value of its last successful run and every recorded output is
still on disk unchanged. Runs are recorded as StageRun rows.

Usage:
    config = load_pipeline_config('lifter.toml')
    outcomes = run_pipeline(config, ['build-corpus', 'train-tokenizer'])
"""

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime

from flask import has_app_context
from tqdm import tqdm

from checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from config import LOG_FORMAT
from corpus import (CompilationSpec, _host_isa, build_corpus, filter_by_length,
                    load_functions, read_dataset, token_length_stats, write_dataset)
from exceptions import (CompileError, ConfigError, DependencyError, EmptySelection, LifterError,
                        SequenceTooLong, StageFailed, ToolMissing)
from extend import ExtensionPlan, extend
from extensions import db
from metrics import GROUP_FIELDS, build_rows, is_vectorized, report
from models import ArtifactRecord, StageRun
from normalize import normalize_asm
from tokenizer import EOS_ID, decode, encode, load_vocab, merge_vocab, save_vocab, train_unigram
from toy_corpus import generate_toy_functions
from training import TrainHyper, build_pairs, train
from transformer import LifterModel, ModelConfig, beam_search
from utils import atomic_write_text, derive_seed, read_jsonl, sha256_file, sha256_text, write_jsonl
from verify import recompile_to_asm, verify_predictions

logger = logging.getLogger(__name__)

STAGES = ('build-corpus', 'train-tokenizer', 'train', 'extend', 'lift', 'verify', 'evaluate')


@dataclass
class Source:
    """One (ISA, compiler) input dialect and the encoder that reads it."""
    isa: str
    compiler: str

    @property
    def encoder(self):
        return self.isa if self.compiler == 'clang' else f"{self.isa}-{self.compiler}"

    def specs(self, opts):
        return [CompilationSpec(self.compiler, self.isa, opt, 'asm_text') for opt in opts]


def sources(config):
    """Encoders in extension order; the first one is the base model's."""
    return [Source(isa, compiler) for compiler in config.extend.compilers for isa in config.extend.chain]


def target_spec(config):
    """The IR representation every encoder is trained to produce."""
    return CompilationSpec.from_key(config.corpus.target)


# ---------------------------------------------------------------------------
# Derived paths
# ---------------------------------------------------------------------------

def corpus_stats_path(config):
    return os.path.join(config.paths.workdir, 'corpus_stats.json')


def vocab_steps_path(config):
    root, _ = os.path.splitext(config.paths.vocab)
    return f"{root}.steps.json"


def base_checkpoint_path(config):
    return os.path.join(config.paths.checkpoints, 'base.ckpt')


def final_checkpoint_path(config):
    return os.path.join(config.paths.checkpoints, 'final.ckpt')


def curves_path(config, stage):
    return os.path.join(config.paths.checkpoints, f"{stage}_curves.json")


def revectorization_path(config):
    return os.path.join(config.paths.workdir, 'revectorization.json')


def _write_json(path, data):
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + '\n')


def _read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


@dataclass
class StageContext:
    seed: int
    jobs: int = 1
    progress: bool = True


# ---------------------------------------------------------------------------
# Lifting
# ---------------------------------------------------------------------------

def _as_model(checkpoint):
    if isinstance(checkpoint, LifterModel):
        return checkpoint
    if isinstance(checkpoint, Checkpoint):
        return checkpoint.to_model()
    return load_checkpoint(checkpoint).to_model()


def lift_scored(checkpoint, encoder_id, asm_text, vocab, beam=5, max_len=None, profile=None):
    """Like lift, but returns (IR text, score) pairs."""
    model = _as_model(checkpoint)
    model.encoder(encoder_id)
    model.eval()
    src_vocab = vocab.prefix(model.encoder_vocab.get(encoder_id, len(vocab)))
    src = encode(src_vocab, normalize_asm(asm_text, profile)) + [EOS_ID]
    hypotheses = beam_search(model, encoder_id, src, beam=beam,
                             max_len=max_len or model.cfg.max_positions)
    return [(decode(vocab, ids), score) for ids, score in hypotheses]


def lift(checkpoint, encoder_id, asm_text, vocab, beam=5, max_len=None, profile=None):
    """
    Translate one assembly function into ranked IR hypotheses.

    Args:
        checkpoint: LifterModel, Checkpoint or checkpoint path
        encoder_id (str): Encoder for the assembly dialect
        asm_text (str): Assembly, normalised here
        vocab (Vocabulary): Vocabulary the checkpoint was trained with

    Returns:
        list: At most ``beam`` IR texts, best first

    Raises:
        UnknownEncoder: Before the model is run
        SequenceTooLong: The tokenised assembly does not fit the model
    """
    return [text for text, _ in lift_scored(checkpoint, encoder_id, asm_text, vocab, beam, max_len, profile)]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _records(config):
    _, records = read_dataset(config.paths.dataset)
    return records


def _stage_build_corpus(config, ctx):
    if config.paths.input == 'toy':
        funcs = generate_toy_functions(config.corpus.toy_size, seed=config.seed)
    else:
        funcs = load_functions(config.paths.input)
    specs = [CompilationSpec.from_key(key) for key in config.corpus.specs]
    records, stats = build_corpus(funcs, specs, ratios=tuple(config.corpus.ratios), seed=ctx.seed,
                                  jobs=ctx.jobs, benchmark=config.corpus.benchmark,
                                  target=target_spec(config))
    write_dataset(config.paths.dataset, records)
    _write_json(corpus_stats_path(config), stats)
    return [config.paths.dataset, corpus_stats_path(config)]


def _source_texts(records, source, opts):
    return [r.texts[spec] for r in records for spec in source.specs(opts) if spec in r.texts]


def _stage_train_tokenizer(config, ctx):
    records = [r for r in _records(config) if r.split == 'train']
    opts = config.extend.source_opts
    size = config.tokenizer.vocab_size
    chain = sources(config)
    target = target_spec(config)
    ir_texts = [r.texts[target] for r in records if target in r.texts]

    steps = {}
    if config.tokenizer.mode == 'shared':
        corpus = ir_texts + [t for source in chain for t in _source_texts(records, source, opts)]
        vocab = train_unigram(corpus, size, jobs=ctx.jobs)
        for source in chain:
            steps[source.encoder] = {'size': len(vocab), 'new_ids': []}
    else:
        base = chain[0]
        vocab = train_unigram(ir_texts + _source_texts(records, base, opts), size, jobs=ctx.jobs)
        steps[base.encoder] = {'size': len(vocab), 'new_ids': []}
        for source in chain[1:]:
            texts = _source_texts(records, source, opts)
            if texts:
                vocab, new_ids = merge_vocab(vocab, texts, size, jobs=ctx.jobs)
            else:
                logger.warning(f"No training text for {source.encoder}; vocabulary unchanged")
                new_ids = set()
            steps[source.encoder] = {'size': len(vocab), 'new_ids': sorted(new_ids)}

    save_vocab(vocab, config.paths.vocab)
    _write_json(vocab_steps_path(config), {
        'mode': config.tokenizer.mode,
        'base_size': steps[chain[0].encoder]['size'],
        'encoders': steps,
    })
    logger.info(f"Vocabulary of {len(vocab)} tokens ({config.tokenizer.mode})")
    return [config.paths.vocab, vocab_steps_path(config)]


def _source_pairs(config, records, source, src_vocab, ir_vocab, split):
    pairs = []
    for spec in source.specs(config.extend.source_opts):
        pairs += build_pairs(records, src_vocab, spec, target_spec(config), split=split,
                             max_positions=config.model.max_positions, encoder=source.encoder,
                             target_vocab=ir_vocab)
    return pairs


def _stage_train(config, ctx):
    records = _records(config)
    vocab = load_vocab(config.paths.vocab)
    steps = _read_json(vocab_steps_path(config))
    base = sources(config)[0]
    base_vocab = vocab.prefix(steps['base_size'])
    records = filter_by_length(records, base_vocab, config.corpus.max_tokens,
                               specs=base.specs(config.extend.source_opts) + [target_spec(config)])
    pairs = _source_pairs(config, records, base, base_vocab, base_vocab, 'train')
    valid = _source_pairs(config, records, base, base_vocab, base_vocab, 'valid')
    logger.info(f"Base model on {base.encoder}: {len(pairs)} train / {len(valid)} valid pairs")

    model_cfg = ModelConfig(vocab_size=len(base_vocab), seed=ctx.seed, **asdict(config.model))
    model = LifterModel(model_cfg, encoder_names=(base.encoder,))
    logger.info(f"Parameters: {model.parameter_counts()}")
    hyper = TrainHyper.from_profile(config.train, seed=ctx.seed)
    result = train(model, pairs, hyper, encoder_id=base.encoder, valid_pairs=valid or None,
                   checkpoint_dir=os.path.join(config.paths.checkpoints, base.encoder),
                   vocab_version=vocab.version, progress=ctx.progress)

    ckpt = Checkpoint.from_model(model, vocab_version=vocab.version, step=result.best_step,
                                 valid_nll=result.best_valid_nll, extra={'base_encoder': base.encoder})
    save_checkpoint(base_checkpoint_path(config), ckpt)
    _write_json(curves_path(config, 'train'), {base.encoder: result.curve})
    return [base_checkpoint_path(config), curves_path(config, 'train')]


def source_of(encoder):
    """Inverse of Source.encoder: 'aarch64' -> clang on aarch64, 'x86_64-gcc' -> gcc on x86_64."""
    isa, _, compiler = encoder.partition('-')
    return Source(isa, compiler or 'clang')


def _extension_step(config, records, vocab, steps, current, previous, source, seed, progress):
    """Train one new encoder cloned from ``previous``; None when the dataset has no pairs for it."""
    info = steps['encoders'].get(source.encoder)
    if info is None:
        raise LifterError(f"Vocabulary has no entry for {source.encoder}; rerun train-tokenizer")
    ir_vocab = vocab.prefix(steps['base_size'])
    src_vocab = vocab.prefix(info['size'])
    kept = filter_by_length(records, src_vocab, config.corpus.max_tokens,
                            specs=source.specs(config.extend.source_opts) + [target_spec(config)])
    pairs = _source_pairs(config, kept, source, src_vocab, ir_vocab, 'train')
    if not pairs:
        logger.warning(f"No training pairs for {source.encoder}; not extending")
        return None
    valid = _source_pairs(config, kept, source, src_vocab, ir_vocab, 'valid')
    plan = ExtensionPlan(
        base_checkpoint=current,
        source_encoder=previous,
        new_encoder=source.encoder,
        new_token_ids=set(info['new_ids']),
        hyper=TrainHyper.from_profile(config.extend.profile, seed=derive_seed(seed, source.encoder)),
        full_ft=config.extend.full_ft,
        vocab_size=info['size'],
        vocab_version=vocab.version,
    )
    logger.info(f"Extending {previous} -> {source.encoder} on {len(pairs)} pairs")
    return extend(plan, pairs, valid or None,
                  checkpoint_dir=os.path.join(config.paths.checkpoints, source.encoder), progress=progress)


def _stage_extend(config, ctx):
    records = _records(config)
    vocab = load_vocab(config.paths.vocab)
    steps = _read_json(vocab_steps_path(config))
    chain = sources(config)
    current = load_checkpoint(base_checkpoint_path(config))
    previous = chain[0].encoder
    curves = {}

    for source in chain[1:]:
        step = _extension_step(config, records, vocab, steps, current, previous, source, ctx.seed, ctx.progress)
        if step is None:
            continue
        current, result = step
        curves[source.encoder] = result.curve
        previous = source.encoder

    save_checkpoint(final_checkpoint_path(config), current)
    _write_json(curves_path(config, 'extend'), curves)
    return [final_checkpoint_path(config), curves_path(config, 'extend')]


def extend_encoder(config, to_encoder, from_encoder=None, base=None, out=None, progress=True):
    """
    One extension step outside the stage manifest.

    Clones ``from_encoder`` of the ``base`` checkpoint into ``to_encoder``,
    trains it on the dataset's pairs for that dialect with the extension
    profile and writes the result.

    Args:
        config (PipelineConfig): Paths, extension profile and target
        to_encoder (str): New encoder, e.g. 'aarch64' or 'x86_64-gcc'
        from_encoder (str): Encoder to clone (defaults to the newest one of ``base``)
        base (str): Checkpoint to extend (defaults to the base model)
        out (str): Checkpoint to write (defaults to the final model)

    Returns:
        str: Path of the written checkpoint

    Raises:
        LifterError: Missing vocabulary entry, unknown encoders or no training pairs
    """
    base = base or base_checkpoint_path(config)
    out = out or final_checkpoint_path(config)
    current = load_checkpoint(base)
    previous = from_encoder or current.encoder_names[-1]
    seed = derive_seed(config.seed, 'extend')
    step = _extension_step(config, _records(config), load_vocab(config.paths.vocab),
                           _read_json(vocab_steps_path(config)), current, previous, source_of(to_encoder),
                           seed, progress)
    if step is None:
        raise EmptySelection(f"dataset {config.paths.dataset} has no training pairs for {to_encoder}")
    ckpt, result = step
    save_checkpoint(out, ckpt)
    logger.info(f"Wrote {out} (best valid nll {result.best_valid_nll})")
    return out


def _stage_lift(config, ctx):
    records = [r for r in _records(config) if r.split == config.verify.split]
    vocab = load_vocab(config.paths.vocab)
    model = load_checkpoint(final_checkpoint_path(config)).to_model()
    model.eval()

    jobs = []
    for source in sources(config):
        if source.encoder not in model.encoders:
            logger.warning(f"Checkpoint has no encoder for {source.encoder}; not lifting it")
            continue
        for spec in source.specs(config.extend.source_opts):
            jobs += [(source, spec, r) for r in records if spec in r.texts]

    rows = []
    for source, spec, record in tqdm(jobs, desc='lift', disable=not ctx.progress):
        row = {'id': record.function_id, 'isa': spec.isa.value, 'compiler': spec.compiler.value,
               'opt': spec.opt_level.value, 'benchmark': record.benchmark, 'encoder': source.encoder}
        try:
            scored = lift_scored(model, source.encoder, record.texts[spec], vocab,
                                 beam=config.verify.beam, max_len=config.model.max_positions)
            row['hypotheses'] = [text for text, _ in scored]
            row['scores'] = [score for _, score in scored]
        except SequenceTooLong as e:
            logger.error(f"Not lifting {record.function_id} ({spec.key}): {e}")
            row.update(hypotheses=[], scores=[], skipped=True, reason=str(e))
        rows.append(row)

    write_jsonl(config.paths.predictions, rows)
    logger.info(f"Lifted {len(rows)} functions")
    return [config.paths.predictions]


def _stage_verify(config, ctx):
    records = {r.function_id: r for r in _records(config)}
    predictions = read_jsonl(config.paths.predictions)
    verdicts = verify_predictions(records, predictions, config.verify,
                                  artifacts=os.path.join(config.paths.artifacts, 'verify'),
                                  jobs=config.verify.jobs, progress=ctx.progress)
    write_jsonl(config.paths.verdicts, verdicts)
    return [config.paths.verdicts]


def _prediction_key(row):
    return tuple(row.get(k) for k in ('id',) + GROUP_FIELDS)


def revectorization(verdicts, predictions, records, rows, timeout=30):
    """
    Recompile correct lifts of vectorized functions at O3 and count how many
    come back vectorized.
    """
    hypotheses = {_prediction_key(p): p.get('hypotheses') or [] for p in predictions}
    host = _host_isa()
    counts = {'vectorized_correct': 0, 're_vectorized': 0, 'errors': 0}
    for verdict, row in zip(verdicts, rows):
        if not (row.io_correct and row.features.get('vectorized')):
            continue
        index = verdict.get('first_passing_index')
        hyps = hypotheses.get(_prediction_key(verdict), [])
        if index is None or index >= len(hyps):
            continue
        counts['vectorized_correct'] += 1
        try:
            asm = recompile_to_asm(hyps[index], records[verdict['id']].ir_header, 'O3', timeout=timeout)
        except (CompileError, ToolMissing) as e:
            logger.error(f"Re-optimising {verdict['id']} failed: {e}")
            counts['errors'] += 1
            continue
        if is_vectorized(asm, host.value if host else None):
            counts['re_vectorized'] += 1
    return counts


def _stage_evaluate(config, ctx):
    records = {r.function_id: r for r in _records(config)}
    predictions = read_jsonl(config.paths.predictions)
    verdicts = [v for v in read_jsonl(config.paths.verdicts) if v.get('id') in records]
    rows = build_rows(verdicts, records, predictions, target=target_spec(config))
    expected = sorted({tuple(p.get(k) or '-' for k in GROUP_FIELDS) for p in predictions})
    report(rows, config.paths.report, config.paths.report_csv, expected_groups=expected)
    _write_json(revectorization_path(config),
                revectorization(verdicts, predictions, records, rows, config.verify.compile_timeout))
    return [config.paths.report, config.paths.report_csv, revectorization_path(config)]


@dataclass
class Stage:
    name: str
    run: object
    settings: object  # config -> dict of the settings the stage depends on
    requires: tuple = ()  # (config -> path, producing stage)
    extra_inputs: object = None  # config -> paths hashed but not produced by a stage


def _input_file(config):
    return [] if config.paths.input == 'toy' else [config.paths.input]


STAGE_TABLE = {stage.name: stage for stage in (
    Stage('build-corpus', _stage_build_corpus,
          lambda c: {'corpus': asdict(c.corpus), 'input': c.paths.input, 'seed': c.seed},
          extra_inputs=_input_file),
    Stage('train-tokenizer', _stage_train_tokenizer,
          lambda c: {'tokenizer': asdict(c.tokenizer), 'chain': c.extend.chain,
                     'compilers': c.extend.compilers, 'source_opts': c.extend.source_opts,
                     'target': c.corpus.target},
          requires=((lambda c: c.paths.dataset, 'build-corpus'),)),
    Stage('train', _stage_train,
          lambda c: {'model': asdict(c.model), 'train': asdict(c.train), 'max_tokens': c.corpus.max_tokens,
                     'base': sources(c)[0].encoder, 'source_opts': c.extend.source_opts, 'seed': c.seed,
                     'target': c.corpus.target},
          requires=((lambda c: c.paths.dataset, 'build-corpus'),
                    (lambda c: c.paths.vocab, 'train-tokenizer'),
                    (vocab_steps_path, 'train-tokenizer'))),
    Stage('extend', _stage_extend,
          lambda c: {'extend': asdict(c.extend), 'max_tokens': c.corpus.max_tokens,
                     'max_positions': c.model.max_positions, 'seed': c.seed, 'target': c.corpus.target},
          requires=((base_checkpoint_path, 'train'),
                    (lambda c: c.paths.dataset, 'build-corpus'),
                    (lambda c: c.paths.vocab, 'train-tokenizer'),
                    (vocab_steps_path, 'train-tokenizer'))),
    Stage('lift', _stage_lift,
          lambda c: {'beam': c.verify.beam, 'split': c.verify.split, 'max_positions': c.model.max_positions,
                     'sources': [s.encoder for s in sources(c)], 'source_opts': c.extend.source_opts},
          requires=((final_checkpoint_path, 'extend'),
                    (lambda c: c.paths.dataset, 'build-corpus'),
                    (lambda c: c.paths.vocab, 'train-tokenizer'))),
    Stage('verify', _stage_verify,
          lambda c: {k: v for k, v in asdict(c.verify).items() if k not in ('jobs', 'beam')},
          requires=((lambda c: c.paths.predictions, 'lift'),
                    (lambda c: c.paths.dataset, 'build-corpus'))),
    Stage('evaluate', _stage_evaluate,
          lambda c: {'compile_timeout': c.verify.compile_timeout, 'target': c.corpus.target},
          requires=((lambda c: c.paths.verdicts, 'verify'),
                    (lambda c: c.paths.predictions, 'lift'),
                    (lambda c: c.paths.dataset, 'build-corpus'))),
)}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

@dataclass
class StageOutcome:
    stage: str
    status: str  # 'ran' or 'skipped'
    outputs: dict = field(default_factory=dict)
    wall_time: float = 0.0
    log_path: str = None


def resolve_stages(stages=None):
    """Requested stage names in dependency order; None means all of them."""
    if not stages:
        return list(STAGES)
    unknown = [s for s in stages if s not in STAGE_TABLE]
    if unknown:
        raise ConfigError(f"Unknown stage(s): {', '.join(unknown)} (known: {', '.join(STAGES)})")
    return [s for s in STAGES if s in set(stages)]


def _check_dependencies(config, stage, earlier):
    for path_of, producer in stage.requires:
        path = path_of(config)
        if not os.path.exists(path) and producer not in earlier:
            raise DependencyError(stage.name, producer, path)


def _input_paths(config, stage):
    paths = [path_of(config) for path_of, _ in stage.requires]
    if stage.extra_inputs:
        paths += stage.extra_inputs(config)
    return paths


def stage_input_hash(config, stage):
    """Hash of a stage's settings, its file locations and the content of every input file."""
    payload = {
        'stage': stage.name,
        'paths': asdict(config.paths),
        'settings': stage.settings(config),
        'inputs': {p: sha256_file(p) for p in _input_paths(config, stage) if os.path.exists(p)},
    }
    return sha256_text(json.dumps(payload, sort_keys=True, default=str))


def _outputs_intact(manifest):
    return bool(manifest) and all(os.path.exists(p) and sha256_file(p) == digest for p, digest in manifest.items())


def _attach_log(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    handler = logging.FileHandler(path, mode='w', encoding='utf-8')
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(logging.INFO)
    root = logging.getLogger()
    previous_level = root.level
    if root.level > logging.INFO or root.level == logging.NOTSET:
        root.setLevel(logging.INFO)
    root.addHandler(handler)
    return handler, previous_level


def _detach_log(handler, previous_level):
    root = logging.getLogger()
    root.removeHandler(handler)
    root.setLevel(previous_level)
    handler.close()


def _finish(run, status, start, error=None):
    run.status = status
    run.wall_time = time.monotonic() - start
    run.finished_at = datetime.utcnow()
    run.error = error
    db.session.commit()


def run_stage(config, stage, force=False, progress=True):
    input_hash = stage_input_hash(config, stage)
    if not force:
        previous = StageRun.query.filter_by(stage=stage.name, status='success', input_hash=input_hash) \
            .order_by(StageRun.id.desc()).first()
        if previous is not None and _outputs_intact(previous.output_manifest):
            logger.info(f"Skipping {stage.name}: inputs unchanged since run {previous.id}")
            return StageOutcome(stage.name, 'skipped', previous.output_manifest, 0.0, previous.log_path)

    log_path = os.path.join(config.paths.artifacts, 'logs', f"{stage.name}.log")
    run = StageRun(stage=stage.name, input_hash=input_hash, log_path=log_path, status='running')
    db.session.add(run)
    db.session.commit()

    ctx = StageContext(seed=derive_seed(config.seed, stage.name), jobs=config.jobs, progress=progress)
    handler, level = _attach_log(log_path)
    start = time.monotonic()
    logger.info(f"Stage {stage.name} starting (seed {ctx.seed})")
    try:
        outputs = stage.run(config, ctx)
    except Exception as e:
        logger.exception(f"Stage {stage.name} failed: {e}")
        _finish(run, 'failed', start, str(e))
        raise StageFailed(stage.name, log_path, e) from e
    finally:
        _detach_log(handler, level)

    manifest = {path: sha256_file(path) for path in outputs}
    run.outputs = json.dumps(manifest, sort_keys=True)
    for path, digest in manifest.items():
        db.session.add(ArtifactRecord(run=run, path=path, sha256=digest, size=os.path.getsize(path),
                                      stage=stage.name))
    _finish(run, 'success', start)
    logger.info(f"Stage {stage.name} finished in {run.wall_time:.1f}s")
    return StageOutcome(stage.name, 'ran', manifest, run.wall_time, log_path)


def run_pipeline(config, stages=None, force=False, progress=True):
    """
    Run the requested stages in dependency order.

    Needs an application context for the stage manifest; one is created
    when none is active.

    Args:
        config (PipelineConfig): Validated configuration
        stages (list): Stage names (None for all)
        force (bool): Rerun stages even when their inputs are unchanged

    Returns:
        list: StageOutcome per requested stage

    Raises:
        DependencyError: An input is missing and its producing stage was not requested
        StageFailed: A stage raised; carries the stage log path
    """
    if not has_app_context():
        from main import create_app
        with create_app().app_context():
            return run_pipeline(config, stages, force, progress)

    requested = resolve_stages(stages)
    for index, name in enumerate(requested):
        _check_dependencies(config, STAGE_TABLE[name], requested[:index])

    outcomes = []
    for name in requested:
        outcomes.append(run_stage(config, STAGE_TABLE[name], force, progress))
    return outcomes


def token_stats(config):
    """
    Token-length statistics per representation of the dataset.

    Returns:
        list: dicts {spec, mean, std}, one per representation present
    """
    records = _records(config)
    vocab = load_vocab(config.paths.vocab)
    keys = list(config.corpus.specs)
    if config.corpus.target not in keys:
        keys.append(config.corpus.target)
    stats = []
    for key in keys:
        try:
            mean, std = token_length_stats(records, CompilationSpec.from_key(key), vocab)
        except EmptySelection:
            logger.warning(f"No record has {key}")
            continue
        stats.append({'spec': key, 'mean': mean, 'std': std})
    return stats
