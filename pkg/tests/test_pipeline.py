import csv
import os

import pytest

from config import (CorpusConfig, ExtendSection, ModelSection, PathsConfig, PipelineConfig, TokenizerConfig,
                    TrainProfile, VerifySection)
from corpus import CompilationSpec
from exceptions import ConfigError, DependencyError, SequenceTooLong, StageFailed, UnknownEncoder
from models import ArtifactRecord, StageRun
from pipeline import (STAGE_TABLE, Source, lift, lift_scored, resolve_stages, revectorization_path, run_pipeline,
                      sources, stage_input_hash)
from transformer import LifterModel
from utils import write_jsonl

from conftest import GROUP, TINY_CORPUS, tiny_config, write_evaluation_inputs


def _config(root, **sections):
    work = os.path.join(str(root), 'work')
    paths = PathsConfig(
        workdir=work,
        dataset=os.path.join(work, 'dataset.jsonl'),
        vocab=os.path.join(work, 'vocab.json'),
        checkpoints=os.path.join(work, 'checkpoints'),
        artifacts=os.path.join(work, 'artifacts'),
        predictions=os.path.join(work, 'predictions.jsonl'),
        verdicts=os.path.join(work, 'verdicts.jsonl'),
        report=os.path.join(work, 'report.md'),
        report_csv=os.path.join(work, 'report.csv'),
    )
    return PipelineConfig(paths=paths, **sections)


def test_resolve_stages():
    assert resolve_stages() == list(STAGE_TABLE)
    assert resolve_stages(['evaluate', 'build-corpus']) == ['build-corpus', 'evaluate']
    with pytest.raises(ConfigError):
        resolve_stages(['compile'])


def test_sources_follow_compilers_then_chain():
    config = PipelineConfig(extend=ExtendSection(chain=['x86_64', 'aarch64'], compilers=['clang', 'gcc']))
    assert [s.encoder for s in sources(config)] == ['x86_64', 'aarch64', 'x86_64-gcc', 'aarch64-gcc']
    assert Source('riscv64', 'clang').specs(['O0', 'O3'])[1].key == 'clang:riscv64:O3:asm_text'


def test_missing_inputs_name_the_producing_stage(app, tmp_path):
    config = _config(tmp_path)
    with pytest.raises(DependencyError) as excinfo:
        run_pipeline(config, ['evaluate'])
    assert excinfo.value.producer == 'verify'
    assert StageRun.query.count() == 0


def test_evaluate_is_memoised(app, tmp_path):
    config = _config(tmp_path)
    write_evaluation_inputs(config)

    first = run_pipeline(config, ['evaluate'], progress=False)
    assert [o.status for o in first] == ['ran']
    with open(config.paths.report_csv, 'rb') as f:
        csv_bytes = f.read()
    assert b'x86_64,clang,O3,toy,2,50.00,100.00' in csv_bytes
    assert os.path.exists(revectorization_path(config))

    second = run_pipeline(config, ['evaluate'], progress=False)
    assert [o.status for o in second] == ['skipped']
    assert second[0].outputs == first[0].outputs

    os.remove(config.paths.report)
    third = run_pipeline(config, ['evaluate'], progress=False)
    assert [o.status for o in third] == ['ran']
    with open(config.paths.report_csv, 'rb') as f:
        assert f.read() == csv_bytes

    runs = StageRun.query.filter_by(stage='evaluate').all()
    assert [r.status for r in runs] == ['success', 'success']
    assert runs[0].input_hash == runs[1].input_hash == stage_input_hash(config, STAGE_TABLE['evaluate'])
    assert ArtifactRecord.query.filter_by(run_id=runs[1].id).count() == 3
    assert StageRun.latest_success('evaluate').id == runs[1].id


def test_changed_input_reruns(app, tmp_path):
    config = _config(tmp_path)
    write_evaluation_inputs(config)
    run_pipeline(config, ['evaluate'], progress=False)
    write_jsonl(config.paths.verdicts, [{'id': 'f0', **GROUP, 'io_correct': False, 'compilable': False}])
    assert [o.status for o in run_pipeline(config, ['evaluate'], progress=False)] == ['ran']


def _edit_similarity(config):
    with open(config.paths.report_csv, newline='') as f:
        return float(next(csv.DictReader(f))['edit_similarity'])


def test_evaluate_compares_against_the_configured_target(app, tmp_path):
    o0 = 'clang:host:O0:llvm_ir'
    config = _config(tmp_path, corpus=CorpusConfig(target=o0))
    write_evaluation_inputs(config, CompilationSpec.from_key(o0))
    assert [o.status for o in run_pipeline(config, ['evaluate'], progress=False)] == ['ran']
    on_target = _edit_similarity(config)
    assert on_target > 0.5

    # same files, default target: a different stage hash and no gold text to compare with
    default = _config(tmp_path)
    assert stage_input_hash(default, STAGE_TABLE['evaluate']) != stage_input_hash(config, STAGE_TABLE['evaluate'])
    assert [o.status for o in run_pipeline(default, ['evaluate'], progress=False)] == ['ran']
    assert _edit_similarity(default) < on_target


def test_failing_stage_keeps_its_log(app, tmp_path):
    config = _config(tmp_path)
    write_evaluation_inputs(config)
    write_jsonl(config.paths.dataset, [{'split': 'test', 'texts': {}}])

    with pytest.raises(StageFailed) as excinfo:
        run_pipeline(config, ['evaluate'], progress=False)
    log_path = excinfo.value.log_path
    assert excinfo.value.stage == 'evaluate'
    with open(log_path, encoding='utf-8') as f:
        assert 'Stage evaluate failed' in f.read()
    run = StageRun.query.one()
    assert run.status == 'failed'
    assert run.log_path == log_path


def test_lift_returns_ranked_texts(tiny_vocab):
    model = LifterModel(tiny_config(vocab_size=len(tiny_vocab), max_positions=128))
    texts = lift(model, 'x86_64', "f:\n\tretq\n", tiny_vocab, beam=3, max_len=6)
    assert 1 <= len(texts) <= 3
    assert all(isinstance(t, str) for t in texts)
    scores = [score for _, score in lift_scored(model, 'x86_64', "f:\n\tretq\n", tiny_vocab, beam=3, max_len=6)]
    assert scores == sorted(scores, reverse=True)


def test_lift_errors(tiny_vocab):
    model = LifterModel(tiny_config(vocab_size=len(tiny_vocab)))
    with pytest.raises(UnknownEncoder):
        lift(model, 'riscv64', TINY_CORPUS[0], tiny_vocab)
    with pytest.raises(SequenceTooLong):
        lift(model, 'x86_64', '\n'.join(TINY_CORPUS[:3]) * 4, tiny_vocab)


def _small_pipeline_config(root):
    return _config(
        root,
        corpus=CorpusConfig(specs=['clang:x86_64:O3:asm_text', 'clang:host:Oz:llvm_ir'], toy_size=24),
        tokenizer=TokenizerConfig(vocab_size=400),
        model=ModelSection(d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, ffn_dim=32,
                           max_positions=512, dropout=0.0),
        train=TrainProfile(lr=1e-3, warmup=5, batch=4, max_steps=10, eval_every=5, checkpoint_every=0),
        extend=ExtendSection(chain=['x86_64']),
        verify=VerifySection(beam=2, jobs=1),
    )


@pytest.mark.slow
@pytest.mark.requires_clang
def test_toy_pipeline_is_reproducible(app, tmp_path):
    outputs = []
    for name in ('a', 'b'):
        config = _small_pipeline_config(tmp_path / name)
        outcomes = run_pipeline(config, progress=False)
        assert [o.status for o in outcomes] == ['ran'] * 7
        files = {}
        for path in (config.paths.dataset, config.paths.predictions, config.paths.report_csv):
            with open(path, 'rb') as f:
                files[os.path.basename(path)] = f.read()
        outputs.append(files)
    assert outputs[0] == outputs[1]
