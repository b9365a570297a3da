import csv
import json
import os

import pytest
from click.testing import CliRunner

import cli as cli_module
from checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from cli import EXIT_CONFIG, EXIT_STAGE, cli
from config import load_pipeline_config
from corpus import KEY_SPEC, TARGET_SPEC, CompilationSpec, ParallelRecord, SourceFunction, write_dataset
from pipeline import base_checkpoint_path, vocab_steps_path
from tokenizer import save_vocab
from transformer import LifterModel

from conftest import tiny_config, write_evaluation_inputs


def _invoke(app, args):
    return CliRunner().invoke(cli, args, obj={'app': app})


def _config_file(tmp_path, extra=''):
    work = tmp_path / 'work'
    path = tmp_path / 'lifter.toml'
    path.write_text(f'[paths]\nworkdir = "{work}"\ndataset = "{work}/dataset.jsonl"\n'
                    f'vocab = "{work}/vocab.json"\nverdicts = "{work}/verdicts.jsonl"\n'
                    f'predictions = "{work}/predictions.jsonl"\nartifacts = "{work}/artifacts"\n'
                    f'checkpoints = "{work}/checkpoints"\nreport = "{work}/report.md"\n'
                    f'report_csv = "{work}/report.csv"\n' + extra)
    return str(path)


@pytest.fixture
def captured(monkeypatch):
    """Records the configuration and stages handed to the pipeline instead of running it."""
    calls = []

    def fake_run_pipeline(config, stages=None, force=False, progress=True):
        calls.append((config, stages))
        return []
    monkeypatch.setattr(cli_module, 'run_pipeline', fake_run_pipeline)
    return calls


def test_missing_config_file(app, tmp_path):
    result = _invoke(app, ['--config', str(tmp_path / 'absent.toml'), 'run'])
    assert result.exit_code == EXIT_CONFIG
    assert 'Config error' in result.output


def test_bad_config_value(app, tmp_path):
    path = tmp_path / 'lifter.toml'
    path.write_text('[tokenizer]\nmode = "joint"\n')
    assert _invoke(app, ['--config', str(path), 'train-tokenizer']).exit_code == EXIT_CONFIG


def test_stage_with_missing_inputs(app, tmp_path):
    result = _invoke(app, ['--config', _config_file(tmp_path), 'run', '--stage', 'evaluate'])
    assert result.exit_code == EXIT_STAGE
    assert "run 'verify' first" in result.output


def test_unknown_stage_choice(app, tmp_path):
    result = _invoke(app, ['--config', _config_file(tmp_path), 'run', '--stage', 'compile'])
    assert result.exit_code == 2


def test_token_stats_without_dataset(app, tmp_path):
    result = _invoke(app, ['--config', _config_file(tmp_path), 'token-stats'])
    assert result.exit_code == EXIT_STAGE
    assert not os.path.exists(tmp_path / 'work' / 'dataset.jsonl')


def test_lift_file_without_checkpoint(app, tmp_path):
    asm = tmp_path / 'f.s'
    asm.write_text('f:\n\tretq\n')
    result = _invoke(app, ['--config', _config_file(tmp_path), 'lift', '--asm-file', str(asm)])
    assert result.exit_code == EXIT_STAGE
    assert 'run the pipeline first' in result.output


def test_beam_is_bounded(app, tmp_path):
    result = _invoke(app, ['--config', _config_file(tmp_path), 'lift', '--beam', '9'])
    assert result.exit_code == 2


def test_build_corpus_options(app, tmp_path, captured):
    functions = tmp_path / 'funcs.jsonl'
    functions.write_text('')
    out = str(tmp_path / 'out' / 'dataset.jsonl')
    result = _invoke(app, ['--config', _config_file(tmp_path), 'build-corpus', '--input', str(functions),
                           '--specs', 'clang:x86_64:O3:asm_text,gcc:x86_64:O0:asm_text',
                           '--specs', 'clang:host:Oz:llvm_ir', '--out', out, '--jobs', '3', '--seed', '7'])
    assert result.exit_code == 0, result.output
    config, stages = captured[0]
    assert stages == ['build-corpus']
    assert config.paths.input == str(functions)
    assert config.corpus.specs == ['clang:x86_64:O3:asm_text', 'gcc:x86_64:O0:asm_text', 'clang:host:Oz:llvm_ir']
    assert config.paths.dataset == out
    assert (config.jobs, config.seed) == (3, 7)
    # untouched settings keep the file's values
    assert config.paths.vocab == str(tmp_path / 'work' / 'vocab.json')


@pytest.mark.parametrize('args', [
    ['build-corpus', '--specs', 'gcc:x86_64:O3:llvm_ir'],
    ['build-corpus', '--input', '/nonexistent/funcs.jsonl'],
    ['extend', '--base', 'model.ckpt'],
])
def test_bad_stage_options(app, tmp_path, captured, args):
    result = _invoke(app, ['--config', _config_file(tmp_path)] + args)
    assert result.exit_code == EXIT_CONFIG
    assert captured == []


def test_verify_options(app, tmp_path, captured):
    result = _invoke(app, ['--config', _config_file(tmp_path), 'verify', '--dataset', 'd.jsonl',
                           '--predictions', 'p.jsonl', '--out', 'v.jsonl', '--timeout', '2.5', '--jobs', '8'])
    assert result.exit_code == 0, result.output
    config, stages = captured[0]
    assert stages == ['verify']
    assert (config.paths.dataset, config.paths.predictions, config.paths.verdicts) == ('d.jsonl', 'p.jsonl', 'v.jsonl')
    assert (config.verify.timeout, config.verify.jobs) == (2.5, 8)
    assert config.verify.compile_timeout == 30.0


def test_extend_stage_options(app, tmp_path, captured):
    result = _invoke(app, ['--config', _config_file(tmp_path), 'extend', '--data', 'arm.jsonl',
                           '--lr', '1e-5', '--warmup', '10', '--full-ft'])
    assert result.exit_code == 0, result.output
    config, stages = captured[0]
    assert stages == ['extend']
    assert config.paths.dataset == 'arm.jsonl'
    assert (config.extend.profile.lr, config.extend.profile.warmup) == (1e-5, 10)
    assert config.extend.profile.max_steps == 1000
    assert config.extend.full_ft


def test_evaluate_options_write_where_asked(app, tmp_path):
    config_path = _config_file(tmp_path)
    write_evaluation_inputs(load_pipeline_config(config_path))
    out, table = tmp_path / 'tables' / 'r.md', tmp_path / 'tables' / 'r.csv'
    result = _invoke(app, ['--config', config_path, 'evaluate', '--out', str(out), '--csv', str(table)])
    assert result.exit_code == 0, result.output
    assert 'evaluate: ran' in result.output
    assert out.exists() and not (tmp_path / 'work' / 'report.md').exists()
    with open(table, newline='') as f:
        row = next(csv.DictReader(f))
    assert (row['n'], row['io_accuracy']) == ('2', '50.00')


def _extension_inputs(config, vocab):
    aarch64 = CompilationSpec('clang', 'aarch64', 'O3', 'asm_text')
    records = []
    for k in range(4):
        func = SourceFunction(id=f"f{k}", c_code=f"int f{k}(int x) {{\n    return x + {k};\n}}")
        records.append(ParallelRecord(function=func, split='train', texts={
            KEY_SPEC: f"f{k}:\nleal {k}(%rdi), %eax\nretq",
            aarch64: f"f{k}:\nadd w0, w0, #{k}\nret",
            TARGET_SPEC: f"define i32 @f{k}(i32 %0) {{\n  %2 = add i32 %0, {k}\n  ret i32 %2\n}}",
        }))
    write_dataset(config.paths.dataset, records)
    save_vocab(vocab, config.paths.vocab)
    steps = {'mode': 'shared', 'base_size': len(vocab),
             'encoders': {name: {'size': len(vocab), 'new_ids': []} for name in ('x86_64', 'aarch64')}}
    with open(vocab_steps_path(config), 'w', encoding='utf-8') as f:
        json.dump(steps, f)
    model = LifterModel(tiny_config(vocab_size=len(vocab), max_positions=64), encoder_names=('x86_64',))
    save_checkpoint(base_checkpoint_path(config), Checkpoint.from_model(model))


def test_extend_single_encoder(app, tmp_path, tiny_vocab):
    config_path = _config_file(tmp_path, '\n[model]\nd_model = 8\nn_heads = 2\nmax_positions = 64\n'
                                         '\n[extend.profile]\nmax_steps = 3\nbatch = 2\nwarmup = 1\n'
                                         'eval_every = 3\ncheckpoint_every = 0\n')
    _extension_inputs(load_pipeline_config(config_path), tiny_vocab)
    out = tmp_path / 'aarch64.ckpt'
    result = _invoke(app, ['--config', config_path, 'extend', '--from', 'x86_64', '--to', 'aarch64',
                           '--out', str(out), '--lr', '1e-3'])
    assert result.exit_code == 0, result.output
    ckpt = load_checkpoint(str(out))
    assert ckpt.encoder_names == ['x86_64', 'aarch64']
    assert ckpt.extra['lineage'] == [{'from': 'x86_64', 'to': 'aarch64', 'new_tokens': 0, 'full_ft': False}]


def test_extend_single_encoder_without_pairs(app, tmp_path, tiny_vocab):
    config_path = _config_file(tmp_path, '\n[model]\nd_model = 8\nn_heads = 2\nmax_positions = 64\n')
    _extension_inputs(load_pipeline_config(config_path), tiny_vocab)
    result = _invoke(app, ['--config', config_path, 'extend', '--to', 'riscv64'])
    assert result.exit_code == EXIT_STAGE
    assert 'riscv64' in result.output
