"""
Evaluation quantities and result tables.

Usage:
    rows = build_rows(verdicts, records, predictions)
    markdown = report(rows, 'work/report.md', 'work/report.csv')
"""

import csv
import functools
import io
import json
import logging
import os
import re
from dataclasses import dataclass, field

import Levenshtein
import numpy as np
from jinja2 import Environment, FileSystemLoader

import filters
from corpus import KEY_SPEC, TARGET_SPEC, CompilationSpec, compute_source_features
from exceptions import DegenerateInput, EmptyInput
from utils import atomic_write_text

logger = logging.getLogger(__name__)

basedir = os.path.dirname(os.path.abspath(__file__))
PATTERNS_PATH = os.path.join(basedir, 'data', 'vector_patterns.json')
TEMPLATES_DIR = os.path.join(basedir, 'templates')

FEATURES = ('c_length', 'n_fun_args', 'has_float', 'has_strings', 'has_globals', 'vectorized')
CORRELATED = ('compiles', 'edit_sim') + FEATURES
GROUP_FIELDS = ('isa', 'compiler', 'opt', 'benchmark')


@dataclass
class EvalRow:
    function_id: str
    io_correct: bool
    compiles: bool
    edit_sim: float
    features: dict = field(default_factory=dict)
    group: tuple = ('x86_64', 'clang', 'O3', 'toy')

    def value(self, name):
        if name in ('io_correct', 'compiles'):
            return int(getattr(self, name))
        if name == 'edit_sim':
            return self.edit_sim
        return int(self.features.get(name, 0))


def io_accuracy(rows):
    if not rows:
        raise EmptyInput("no rows")
    return sum(1 for r in rows if r.io_correct) / len(rows)


def compilability(rows):
    if not rows:
        raise EmptyInput("no rows")
    return sum(1 for r in rows if r.compiles) / len(rows)


def edit_similarity(pred_text, gold_text):
    """1 - levenshtein / max length, character level; two empty texts are identical."""
    longest = max(len(pred_text), len(gold_text))
    if longest == 0:
        return 1.0
    return 1.0 - Levenshtein.distance(pred_text, gold_text) / longest


def pearson(xs, ys):
    """
    Sample Pearson correlation.

    Raises:
        DegenerateInput: Fewer than two points or zero variance on either side
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("xs and ys differ in length")
    if x.size < 2:
        raise DegenerateInput("need at least two points")
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(np.dot(xm, xm))
    syy = float(np.dot(ym, ym))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("zero variance")
    r = float(np.dot(xm, ym)) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


@functools.lru_cache(maxsize=None)
def load_vector_patterns(path=PATTERNS_PATH):
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    return {isa: [re.compile(p) for p in patterns]
            for isa, patterns in data.items() if isinstance(patterns, list)}


def is_vectorized(asm_text, isa=None):
    """SIMD register/mnemonic heuristics; unknown ISAs are checked against every pattern list."""
    patterns = load_vector_patterns()
    groups = [patterns[isa]] if isa in patterns else list(patterns.values())
    return any(p.search(asm_text) for group in groups for p in group)


def extract_features(record, asm_text, isa=None):
    """Source features of a record's function plus the assembly vectorization flag."""
    function = getattr(record, 'function', record)
    features = compute_source_features(function.c_code, function.context)
    features['vectorized'] = bool(asm_text) and is_vectorized(asm_text, isa)
    return features


def _group_asm(record, group):
    isa, compiler, opt, _ = group
    try:
        spec = CompilationSpec(compiler, isa, opt, 'asm_text')
        if spec in record.texts:
            return record.texts[spec], isa
    except ValueError:
        pass
    return record.texts.get(KEY_SPEC, ''), KEY_SPEC.isa.value


def build_rows(verdicts, records, predictions=(), target=TARGET_SPEC):
    """
    Join verdicts with their dataset records into EvalRows.

    Args:
        verdicts (list): Verdict rows from the verifier
        records (dict): function id -> ParallelRecord
        predictions (list): Prediction rows, used for the top-1 edit similarity
        target (CompilationSpec): IR representation the predictions are compared against

    Returns:
        list: EvalRow
    """
    top1 = {}
    for row in predictions:
        key = tuple(row.get(k) for k in ('id',) + GROUP_FIELDS)
        hyps = row.get('hypotheses') or []
        top1[key] = hyps[0] if hyps else ''

    rows = []
    for verdict in verdicts:
        record = records.get(verdict['id'])
        if record is None:
            logger.error(f"Verdict for unknown function {verdict['id']}")
            continue
        group = tuple(verdict.get(k) or '-' for k in GROUP_FIELDS)
        gold = record.texts.get(target, '')
        pred = top1.get(tuple(verdict.get(k) for k in ('id',) + GROUP_FIELDS), '')
        asm, isa = _group_asm(record, group)
        rows.append(EvalRow(function_id=verdict['id'], io_correct=bool(verdict.get('io_correct')),
                            compiles=bool(verdict.get('compilable')), edit_sim=edit_similarity(pred, gold),
                            features=extract_features(record, asm, isa), group=group))
    return rows


def correlations(rows):
    """Pearson correlation of every feature with io_correct; degenerate cells are None."""
    target = [r.value('io_correct') for r in rows]
    out = {}
    for name in CORRELATED:
        try:
            out[name] = pearson([r.value(name) for r in rows], target)
        except DegenerateInput:
            out[name] = None
    return out


def summarize(rows, expected_groups=()):
    """Per-group metric triples in sorted group order; expected groups without rows get None cells."""
    by_group = {}
    for row in rows:
        by_group.setdefault(tuple(row.group), []).append(row)
    for group in expected_groups:
        by_group.setdefault(tuple(group), [])

    summary = []
    for group in sorted(by_group):
        group_rows = by_group[group]
        entry = dict(zip(GROUP_FIELDS, group))
        entry['label'] = ' '.join(group)
        entry['n'] = len(group_rows)
        if group_rows:
            entry['io_accuracy'] = io_accuracy(group_rows)
            entry['compilability'] = compilability(group_rows)
            entry['edit_similarity'] = float(np.mean([r.edit_sim for r in group_rows]))
            entry['correlations'] = correlations(group_rows)
        else:
            entry.update(io_accuracy=None, compilability=None, edit_similarity=None, correlations={})
        summary.append(entry)
    return summary


def _environment():
    env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), autoescape=False,
                      keep_trailing_newline=True)
    return filters.register(env)


def render_markdown(summary):
    return _environment().get_template('report.md.j2').render(groups=summary, features=CORRELATED)


def render_csv(summary):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(list(GROUP_FIELDS) + ['n', 'io_accuracy', 'compilability', 'edit_similarity']
                    + [f"corr_{name}" for name in CORRELATED])
    for g in summary:
        writer.writerow([g[k] for k in GROUP_FIELDS] + [
            g['n'], filters.pct(g['io_accuracy']), filters.pct(g['compilability']),
            filters.fixed2(g['edit_similarity']),
        ] + [filters.fixed2(g['correlations'].get(name)) for name in CORRELATED])
    return out.getvalue()


def report(rows, out_md=None, out_csv=None, expected_groups=()):
    """
    Render the result tables.

    Returns:
        tuple: (markdown text, csv text); also written to out_md/out_csv when given
    """
    summary = summarize(rows, expected_groups)
    for g in summary:
        if g['io_accuracy'] is not None and g['io_accuracy'] > g['compilability']:
            logger.error(f"Group {g['label']}: I/O accuracy exceeds compilability")
    markdown = render_markdown(summary)
    table = render_csv(summary)
    if out_md:
        atomic_write_text(out_md, markdown)
    if out_csv:
        atomic_write_text(out_csv, table)
    return markdown, table
