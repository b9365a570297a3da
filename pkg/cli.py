"""
Command-line entry point.

    lifter --config lifter.toml run
    lifter --seed 3 train
    lifter extend --to riscv64 --from aarch64 --base work/checkpoints/final.ckpt --lr 5e-5
    lifter verify --predictions p.jsonl --out verdicts.jsonl --timeout 5 --jobs 8
    lifter lift --asm-file f.s --encoder aarch64

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

import logging
import os

import click

from config import LOG_FORMAT, load_pipeline_config, override_config
from exceptions import ConfigError, LifterError
from pipeline import STAGES, extend_encoder, final_checkpoint_path, lift_scored, run_pipeline, token_stats

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _fail(message, code):
    click.echo(message, err=True)
    click.get_current_context().exit(code)


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='Pipeline TOML file (built-in defaults when omitted).')
@click.option('--seed', type=int, default=None, help='Root seed; overrides the config file.')
@click.option('--jobs', type=int, default=None, help='Worker processes; overrides the config file.')
@click.option('--force', is_flag=True, help='Rerun stages even when their inputs are unchanged.')
@click.option('--quiet', is_flag=True, help='Hide progress bars.')
@click.pass_context
def cli(ctx, config_path, seed, jobs, force, quiet):
    """Neural assembly-to-IR lifter pipeline."""
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
    obj = ctx.ensure_object(dict)
    try:
        obj['config'] = load_pipeline_config(config_path, {'seed': seed, 'jobs': jobs})
    except ConfigError as e:
        _fail(f"Config error: {e}", EXIT_CONFIG)
    obj['force'] = force
    obj['progress'] = not quiet
    app = obj.get('app')
    if app is None:
        from main import create_app
        app = create_app()
    ctx.with_resource(app.app_context())


def _run(obj, stages):
    try:
        outcomes = run_pipeline(obj['config'], stages, force=obj['force'], progress=obj['progress'])
    except ConfigError as e:
        _fail(f"Config error: {e}", EXIT_CONFIG)
    except LifterError as e:
        _fail(f"Error: {e}", EXIT_STAGE)
    for outcome in outcomes:
        click.echo(f"{outcome.stage}: {outcome.status} ({outcome.wall_time:.1f}s)")


def _configure(obj, overrides):
    try:
        obj['config'] = override_config(obj['config'], overrides)
    except ConfigError as e:
        _fail(f"Config error: {e}", EXIT_CONFIG)


def _spec_keys(values):
    keys = [key.strip() for value in values for key in value.split(',') if key.strip()]
    return keys or None


def _stage_command(name, description):
    @cli.command(name, help=description)
    @click.pass_obj
    def command(obj):
        _run(obj, [name])
    return command


@cli.command('build-corpus')
@click.option('--input', 'input_path', default=None,
              help="Functions JSONL, or 'toy' for the bundled corpus.")
@click.option('--specs', multiple=True,
              help='Compilation specs compiler:isa:opt:repr (repeatable or comma-separated).')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Dataset JSONL to write.')
@click.option('--jobs', type=int, default=None, help='Compiler processes.')
@click.option('--seed', type=int, default=None, help='Split seed.')
@click.pass_obj
def build_corpus_cmd(obj, input_path, specs, out, jobs, seed):
    """Compile the input functions into the parallel dataset."""
    _configure(obj, {'paths.input': input_path, 'corpus.specs': _spec_keys(specs), 'paths.dataset': out,
                     'jobs': jobs, 'seed': seed})
    _run(obj, ['build-corpus'])


train_tokenizer_cmd = _stage_command('train-tokenizer', 'Train the subword vocabulary.')
train_cmd = _stage_command('train', 'Train the base model on the first ISA of the chain.')


@cli.command('extend')
@click.option('--base', type=click.Path(dir_okay=False), default=None,
              help='Checkpoint to extend (with --to; defaults to the base model).')
@click.option('--from', 'from_encoder', default=None, help='Encoder to clone (with --to).')
@click.option('--to', 'to_encoder', default=None,
              help="Add only this encoder, e.g. 'aarch64' or 'x86_64-gcc', outside the stage manifest.")
@click.option('--out', type=click.Path(dir_okay=False), default=None,
              help='Checkpoint to write (with --to; defaults to the final model).')
@click.option('--data', default=None, help='Dataset JSONL with the new dialect.')
@click.option('--lr', type=float, default=None, help='Extension learning rate.')
@click.option('--warmup', type=int, default=None, help='Extension warmup steps.')
@click.option('--full-ft', 'full_ft', is_flag=True, help='Train the decoder and old embeddings too.')
@click.pass_obj
def extend_cmd(obj, base, from_encoder, to_encoder, out, data, lr, warmup, full_ft):
    """Add the remaining ISAs and compilers to the base model."""
    _configure(obj, {'paths.dataset': data, 'extend.profile.lr': lr, 'extend.profile.warmup': warmup,
                     'extend.full_ft': True if full_ft else None})
    if to_encoder is None:
        if base or from_encoder or out:
            _fail("Error: --base, --from and --out need --to", EXIT_CONFIG)
        _run(obj, ['extend'])
        return
    try:
        path = extend_encoder(obj['config'], to_encoder, from_encoder, base, out, progress=obj['progress'])
    except (OSError, LifterError) as e:
        _fail(f"Error: {e}", EXIT_STAGE)
    click.echo(f"extend: {to_encoder} -> {path}")


@cli.command('verify')
@click.option('--dataset', default=None, help='Dataset JSONL with the functions and I/O examples.')
@click.option('--predictions', default=None, help='Predictions JSONL from the lift stage.')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Verdicts JSONL to write.')
@click.option('--timeout', type=float, default=None, help='Seconds per I/O example.')
@click.option('--jobs', type=int, default=None, help='Functions verified in parallel.')
@click.pass_obj
def verify_cmd(obj, dataset, predictions, out, timeout, jobs):
    """Check predictions against the I/O examples."""
    _configure(obj, {'paths.dataset': dataset, 'paths.predictions': predictions, 'paths.verdicts': out,
                     'verify.timeout': timeout, 'verify.jobs': jobs})
    _run(obj, ['verify'])


@cli.command('evaluate')
@click.option('--verdicts', default=None, help='Verdicts JSONL from the verify stage.')
@click.option('--dataset', default=None, help='Dataset JSONL the verdicts refer to.')
@click.option('--out', type=click.Path(dir_okay=False), default=None, help='Markdown report to write.')
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), default=None, help='CSV report to write.')
@click.pass_obj
def evaluate_cmd(obj, verdicts, dataset, out, csv_path):
    """Write the result tables."""
    _configure(obj, {'paths.verdicts': verdicts, 'paths.dataset': dataset, 'paths.report': out,
                     'paths.report_csv': csv_path})
    _run(obj, ['evaluate'])


@cli.command('lift')
@click.option('--asm-file', type=click.File('r'), default=None,
              help='Lift this assembly file and print the hypotheses instead of running the stage.')
@click.option('--encoder', default=None, help='Encoder for --asm-file (defaults to the base ISA).')
@click.option('--checkpoint', type=click.Path(dir_okay=False), default=None,
              help='Checkpoint for --asm-file (defaults to the extended model).')
@click.option('--beam', type=click.IntRange(1, 5), default=5)
@click.pass_obj
def lift_cmd(obj, asm_file, encoder, checkpoint, beam):
    """Lift the evaluation split, or a single assembly file."""
    if asm_file is None:
        _run(obj, ['lift'])
        return

    from tokenizer import load_vocab

    config = obj['config']
    checkpoint = checkpoint or final_checkpoint_path(config)
    if not os.path.exists(checkpoint) or not os.path.exists(config.paths.vocab):
        _fail(f"Error: need {checkpoint} and {config.paths.vocab}; run the pipeline first", EXIT_STAGE)
    encoder = encoder or config.extend.chain[0]
    try:
        scored = lift_scored(checkpoint, encoder, asm_file.read(), load_vocab(config.paths.vocab), beam=beam)
    except LifterError as e:
        _fail(f"Error: {e}", EXIT_STAGE)
    for rank, (text, score) in enumerate(scored):
        click.echo(f"; hypothesis {rank} score {score:.4f}")
        click.echo(text)


@cli.command('run')
@click.option('--stage', 'stages', multiple=True, type=click.Choice(STAGES),
              help='Run only these stages (repeatable); all by default.')
@click.pass_obj
def run_cmd(obj, stages):
    """Run the pipeline end to end."""
    _run(obj, list(stages) or None)


@cli.command('token-stats')
@click.pass_obj
def token_stats_cmd(obj):
    """Mean and standard deviation of token lengths per representation."""
    try:
        stats = token_stats(obj['config'])
    except (OSError, LifterError) as e:
        _fail(f"Error: {e}", EXIT_STAGE)
    click.echo(f"{'representation':<32} {'mean':>10} {'std':>10}")
    for row in stats:
        click.echo(f"{row['spec']:<32} {row['mean']:>10.1f} {row['std']:>10.1f}")


if __name__ == '__main__':
    cli()
