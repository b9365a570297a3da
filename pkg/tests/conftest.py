import shutil
import warnings

import pytest

from config import TestingConfig
from corpus import KEY_SPEC, TARGET_SPEC, ParallelRecord, SourceFunction, write_dataset
from exceptions import CorpusTooSmall
from main import create_app
from tokenizer import train_unigram
from transformer import LifterModel, ModelConfig
from utils import write_jsonl

TINY_CORPUS = [
    "f:\nmovl %edi, %eax\naddl $12, %eax\nretq",
    "g:\nleal 3(%rdi,%rdi,2), %eax\nretq",
    "sum:\ntestl %esi, %esi\njle .LBB0_3\nxorl %eax, %eax\naddl (%rdi), %eax\nretq",
    "define i32 @f(i32 %0) {\n  %2 = add nsw i32 %0, 12\n  ret i32 %2\n}",
    "define i32 @g(i32 %0) {\n  %2 = mul nsw i32 %0, 3\n  %3 = add nsw i32 %2, 3\n  ret i32 %3\n}",
    "f:\nadd w0, w0, #12\nret",
    "f:\naddi a0, a0, 12\nret",
]

GROUP = {'isa': 'x86_64', 'compiler': 'clang', 'opt': 'O3', 'benchmark': 'toy'}


def pytest_collection_modifyitems(config, items):
    if shutil.which('clang'):
        return
    skip = pytest.mark.skip(reason="clang not on PATH")
    for item in items:
        if 'requires_clang' in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def app(tmp_path):
    class Cfg(TestingConfig):
        ARTIFACTS_DIR = str(tmp_path / 'artifacts')
        LOG_DIR = str(tmp_path / 'logs')

    app = create_app(Cfg)
    with app.app_context():
        yield app


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture(scope='session')
def tiny_vocab():
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', CorpusTooSmall)
        return train_unigram(TINY_CORPUS, 400)


def tiny_config(**overrides):
    values = dict(vocab_size=16, d_model=8, n_heads=2, n_enc_layers=1, n_dec_layers=1, ffn_dim=16,
                  max_positions=16, dropout=0.0, seed=0)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def tiny_model():
    """About two thousand parameters, double precision."""
    return LifterModel(tiny_config(), encoder_names=('x86_64',)).double()


def write_evaluation_inputs(config, target=TARGET_SPEC):
    """Dataset, predictions and verdicts for two functions, one verified correct."""
    records = []
    for k in range(2):
        func = SourceFunction(id=f"f{k}", c_code=f"int f{k}(int x) {{\n    return x + {k};\n}}")
        records.append(ParallelRecord(function=func, split='test', texts={
            target: f"define i32 @f{k}(i32 %0) {{\n  %2 = add i32 %0, {k}\n  ret i32 %2\n}}",
            KEY_SPEC: f"f{k}:\nleal {k}(%rdi), %eax\nretq",
        }))
    write_dataset(config.paths.dataset, records)
    write_jsonl(config.paths.predictions, [
        {'id': 'f0', **GROUP, 'hypotheses': [records[0].texts[target]]},
        {'id': 'f1', **GROUP, 'hypotheses': ['define i32 @f1(i32 %0) {\n  ret i32 %0\n}']},
    ])
    write_jsonl(config.paths.verdicts, [
        {'id': 'f0', **GROUP, 'io_correct': True, 'compilable': True, 'first_passing_index': 0},
        {'id': 'f1', **GROUP, 'io_correct': False, 'compilable': True, 'first_passing_index': None},
    ])
