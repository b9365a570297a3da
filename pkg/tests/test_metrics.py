import random

import numpy as np
import pytest

from corpus import KEY_SPEC, TARGET_SPEC, CompilationSpec, ParallelRecord, SourceFunction
from exceptions import DegenerateInput, EmptyInput
from metrics import (EvalRow, build_rows, compilability, correlations, edit_similarity, io_accuracy,
                     is_vectorized, pearson, report)


def _levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def test_edit_similarity_known_values():
    assert edit_similarity('kitten', 'sitting') == pytest.approx(1 - 3 / 7)
    assert edit_similarity('', '') == 1.0
    assert edit_similarity('abc', '') == 0.0
    assert edit_similarity('same', 'same') == 1.0


def test_edit_similarity_matches_dynamic_programming():
    rng = random.Random(7)
    for _ in range(100):
        a = ''.join(rng.choice('abc%@ \n') for _ in range(rng.randint(0, 12)))
        b = ''.join(rng.choice('abc%@ \n') for _ in range(rng.randint(0, 12)))
        longest = max(len(a), len(b))
        expected = 1.0 if longest == 0 else 1.0 - _levenshtein(a, b) / longest
        assert edit_similarity(a, b) == pytest.approx(expected)


def test_pearson():
    assert pearson(range(10), list(reversed(range(10)))) == -1.0
    rng = np.random.default_rng(3)
    xs, ys = rng.normal(size=50), rng.normal(size=50)
    assert pearson(xs, ys) == pytest.approx(np.corrcoef(xs, ys)[0, 1], abs=1e-12)
    with pytest.raises(DegenerateInput):
        pearson([1.0], [2.0])
    with pytest.raises(DegenerateInput):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def test_rates_need_rows():
    with pytest.raises(EmptyInput):
        io_accuracy([])
    with pytest.raises(EmptyInput):
        compilability([])


@pytest.mark.parametrize('asm, isa, expected', [
    ('paddd %xmm1, %xmm0', 'x86_64', True),
    ('vmovdqu (%rdi), %ymm0', 'x86_64', True),
    ('addl %esi, %edi', 'x86_64', False),
    ('add v0.4s, v0.4s, v1.4s', 'aarch64', True),
    ('add w0, w0, w1', 'aarch64', False),
    ('vsetvli t0, a0, e32, m1', 'riscv64', True),
    ('paddd %xmm1, %xmm0', None, True),
])
def test_is_vectorized(asm, isa, expected):
    assert is_vectorized(asm, isa) is expected


def _row(fid, io, compiles, sim, group=('x86_64', 'clang', 'O3', 'toy')):
    return EvalRow(function_id=fid, io_correct=io, compiles=compiles, edit_sim=sim, group=group)


def test_correlations_mark_degenerate_cells():
    rows = [_row('a', True, True, 1.0), _row('b', False, True, 0.5)]
    corr = correlations(rows)
    assert corr['edit_sim'] == pytest.approx(1.0)
    assert corr['compiles'] is None
    assert corr['has_float'] is None


def test_report_tables(tmp_path):
    rows = [_row('a', True, True, 1.0), _row('b', False, True, 0.5)]
    empty = ('aarch64', 'clang', 'O3', 'toy')
    md_path, csv_path = tmp_path / 'report.md', tmp_path / 'report.csv'
    markdown, table = report(rows, str(md_path), str(csv_path), expected_groups=[empty])

    assert '| x86_64 | clang | O3 | toy | 2 | 50.00 | 100.00 | 0.75 |' in markdown
    assert '| aarch64 | clang | O3 | toy | 0 | - | - | - |' in markdown
    lines = table.splitlines()
    assert lines[0].startswith('isa,compiler,opt,benchmark,n,io_accuracy,compilability,edit_similarity,corr_compiles')
    assert lines[1].startswith('aarch64,clang,O3,toy,0,-,-,-,-')
    assert lines[2].startswith('x86_64,clang,O3,toy,2,50.00,100.00,0.75,-,1.00')
    assert md_path.read_text() == markdown
    assert csv_path.read_text() == table


def test_build_rows_joins_predictions_and_records():
    func = SourceFunction(id='f1', c_code="int f1(float x) {\n    return (int)x;\n}")
    record = ParallelRecord(function=func, texts={TARGET_SPEC: 'define i32 @f1(float %0) {\n}',
                                                  KEY_SPEC: 'f1:\ncvttss2si %xmm0, %eax\nretq'})
    group = {'isa': 'x86_64', 'compiler': 'clang', 'opt': 'O3', 'benchmark': 'toy'}
    verdicts = [{'id': 'f1', **group, 'io_correct': False, 'compilable': True},
                {'id': 'missing', **group, 'io_correct': False, 'compilable': False}]
    predictions = [{'id': 'f1', **group, 'hypotheses': ['define i32 @f1(float %0) {\n}', 'x']}]

    rows = build_rows(verdicts, {'f1': record}, predictions)
    assert len(rows) == 1
    row = rows[0]
    assert row.edit_sim == 1.0
    assert row.compiles and not row.io_correct
    assert row.group == ('x86_64', 'clang', 'O3', 'toy')
    assert row.features['has_float'] and row.features['n_fun_args'] == 1
    assert row.features['vectorized'] is False


def test_build_rows_compares_against_the_configured_target():
    o0 = CompilationSpec.from_key('clang:host:O0:llvm_ir')
    func = SourceFunction(id='f1', c_code="int f1(int x) {\n    return x;\n}")
    record = ParallelRecord(function=func, texts={o0: 'define i32 @f1(i32 %0) {\n  ret i32 %0\n}',
                                                  KEY_SPEC: 'f1:\nmovl %edi, %eax\nretq'})
    group = {'isa': 'x86_64', 'compiler': 'clang', 'opt': 'O3', 'benchmark': 'toy'}
    verdicts = [{'id': 'f1', **group, 'io_correct': True, 'compilable': True}]
    predictions = [{'id': 'f1', **group, 'hypotheses': ['define i32 @f1(i32 %0) {\n  ret i32 %0\n}']}]
    assert build_rows(verdicts, {'f1': record}, predictions, target=o0)[0].edit_sim == 1.0
    # the default target has no gold text in this record
    assert build_rows(verdicts, {'f1': record}, predictions)[0].edit_sim < 1.0
