"""
Parallel assembly <-> LLVM IR corpus construction.

Drives real compilers over C functions (with their synthetic compilable
context), extracts the target function from each output, normalises the
texts and assembles deduplicated, split dataset records.
"""

import dataclasses
import enum
import functools
import logging
import os
import platform
import random
import re
import shutil
import subprocess
import tempfile
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from config import toolchain
from exceptions import CompileError, EmptySelection, MissingKey, ToolMissing, UnsupportedSignature
from normalize import DEFAULT_PROFILE, NormalizationProfile, normalize_asm, normalize_ir, split_ir_header
from utils import dumps_line, read_jsonl, sha256_text, atomic_write_text

logger = logging.getLogger(__name__)


class Compiler(str, enum.Enum):
    CLANG = 'clang'
    GCC = 'gcc'


class Isa(str, enum.Enum):
    X86_64 = 'x86_64'
    AARCH64 = 'aarch64'
    RISCV64 = 'riscv64'
    HOST = 'host'


class OptLevel(str, enum.Enum):
    O0 = 'O0'
    O3 = 'O3'
    OZ = 'Oz'


class Representation(str, enum.Enum):
    ASM = 'asm_text'
    IR = 'llvm_ir'


TRIPLES = {
    Isa.X86_64: 'x86_64-linux-gnu',
    Isa.AARCH64: 'aarch64-linux-gnu',
    Isa.RISCV64: 'riscv64-linux-gnu',
}

# clang -print-targets names for each ISA
_CLANG_BACKENDS = {
    Isa.X86_64: 'x86-64',
    Isa.AARCH64: 'aarch64',
    Isa.RISCV64: 'riscv64',
}


@dataclass(frozen=True)
class CompilationSpec:
    compiler: Compiler
    isa: Isa
    opt_level: OptLevel
    representation: Representation

    def __post_init__(self):
        object.__setattr__(self, 'compiler', Compiler(self.compiler))
        object.__setattr__(self, 'isa', Isa(self.isa))
        object.__setattr__(self, 'opt_level', OptLevel(self.opt_level))
        object.__setattr__(self, 'representation', Representation(self.representation))
        if self.representation == Representation.IR and self.compiler != Compiler.CLANG:
            raise ValueError("llvm_ir is only produced by clang")

    @property
    def key(self):
        return f"{self.compiler.value}:{self.isa.value}:{self.opt_level.value}:{self.representation.value}"

    @classmethod
    def from_key(cls, key):
        parts = key.split(':')
        if len(parts) != 4:
            raise ValueError(f"expected compiler:isa:opt:repr, got '{key}'")
        return cls(*parts)

    def __str__(self):
        return self.key


# Default lifting target and the representation that keys deduplication
TARGET_SPEC = CompilationSpec('clang', 'host', 'Oz', 'llvm_ir')
KEY_SPEC = CompilationSpec('clang', 'x86_64', 'O3', 'asm_text')


@dataclass
class IoExample:
    """
    One input/output example for a function.

    Argument entries are dicts with a ``kind``:
      - ``scalar``: ``{"name", "kind", "ctype", "value"}``
      - ``array``: ``{"name", "kind", "ctype" (element type), "value": [...]}``
      - ``string``: ``{"name", "kind", "value": "text"}`` (a writable char buffer)
      - ``struct_ptr``: ``{"name", "kind", "ctype": "struct P", "fields": {...}}``
    """
    args: list = field(default_factory=list)
    globals_pre: dict = field(default_factory=dict)
    expected_return: dict = None
    expected_array_post: dict = field(default_factory=dict)
    expected_struct_post: dict = field(default_factory=dict)
    expected_globals_post: dict = field(default_factory=dict)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Signature:
    return_type: str
    name: str
    params: list  # [(ctype, name)]
    variadic: bool = False
    function_pointer: bool = False


_SIGNATURE_RE = re.compile(
    r'(?P<ret>(?:[A-Za-z_]\w*[\s*]+)+?)(?P<name>[A-Za-z_]\w*)\s*\((?P<params>[^{;]*?)\)\s*\{',
    re.S)
_QUALIFIERS = {'static', 'inline', 'extern', '__inline', '__inline__'}


def parse_signature(c_code):
    """
    Recover the return type, name and parameters of the first function
    definition in a C snippet.

    Raises:
        UnsupportedSignature: No definition could be found
    """
    match = _SIGNATURE_RE.search(c_code)
    if not match:
        raise UnsupportedSignature("no function definition found")
    ret_words = [w for w in match.group('ret').replace('*', ' * ').split() if w not in _QUALIFIERS]
    return_type = ' '.join(ret_words).replace(' *', '*').replace('*', ' *').strip()
    params_text = match.group('params').strip()
    params = []
    variadic = False
    function_pointer = '(' in params_text
    if params_text and params_text != 'void' and not function_pointer:
        for raw in params_text.split(','):
            raw = ' '.join(raw.split())
            if raw == '...':
                variadic = True
                continue
            is_array = raw.endswith(']')
            if is_array:
                raw = raw[:raw.index('[')].strip()
            pm = re.match(r'(.*?)([A-Za-z_]\w*)$', raw)
            if not pm or not pm.group(1).strip():
                raise UnsupportedSignature(f"cannot parse parameter '{raw}'")
            ctype = pm.group(1).replace('*', ' * ').split()
            ctype = ' '.join(ctype).replace(' *', '*').replace('*', ' *').strip()
            if is_array:
                ctype += ' *'
            params.append((ctype, pm.group(2)))
    return Signature(return_type=return_type, name=match.group('name'), params=params,
                     variadic=variadic, function_pointer=function_pointer)


_GLOBAL_DECL_RE = re.compile(
    r'^(?!\s*(?:typedef|struct\s+\w+\s*\{|union\s+\w+\s*\{|enum|#|return))'
    r'\s*(?:static\s+|extern\s+|const\s+|volatile\s+)*[A-Za-z_][\w\s*]*?\b([A-Za-z_]\w*)\s*(?:\[[^\]]*\])*\s*(?:=[^;]*)?;',
    re.M)


def context_globals(context):
    """Names of top-level variables declared in a function's context."""
    names = []
    depth = 0
    for line in context.splitlines():
        if depth == 0 and '(' not in line:
            m = _GLOBAL_DECL_RE.match(line)
            if m:
                names.append(m.group(1))
        depth += line.count('{') - line.count('}')
    return names


def compute_source_features(c_code, context):
    """Table-style source features: c_length, n_fun_args, has_float, has_strings, has_globals."""
    try:
        sig = parse_signature(c_code)
        n_args = len(sig.params)
        string_param = any(re.search(r'\bchar\b', t) and '*' in t for t, _ in sig.params)
    except UnsupportedSignature:
        n_args = 0
        string_param = False
    globals_used = [g for g in context_globals(context) if re.search(rf'\b{re.escape(g)}\b', c_code)]
    return {
        'c_length': len(c_code),
        'n_fun_args': n_args,
        'has_float': bool(re.search(r'\b(float|double)\b', c_code)),
        'has_strings': bool(string_param or re.search(r'"(?:[^"\\]|\\.)*"', c_code)),
        'has_globals': bool(globals_used),
    }


@dataclass
class SourceFunction:
    id: str
    c_code: str
    context: str = ''
    io_examples: list = field(default_factory=list)
    features: dict = field(default_factory=dict)

    def __post_init__(self):
        self.io_examples = [e if isinstance(e, IoExample) else IoExample.from_dict(e)
                            for e in self.io_examples]
        if not self.features:
            self.features = compute_source_features(self.c_code, self.context)

    @property
    def name(self):
        return parse_signature(self.c_code).name

    @property
    def unit_source(self):
        return f"{self.context}\n{self.c_code}\n" if self.context else f"{self.c_code}\n"

    def to_dict(self):
        return {
            'id': self.id,
            'c_code': self.c_code,
            'context': self.context,
            'io_examples': [e.to_dict() for e in self.io_examples],
            'features': dict(self.features),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(id=data['id'], c_code=data['c_code'], context=data.get('context', ''),
                   io_examples=data.get('io_examples', []), features=data.get('features') or {})


@dataclass
class ParallelRecord:
    function: SourceFunction
    texts: dict = field(default_factory=dict)  # CompilationSpec -> normalised text
    dedup_key: str = None
    split: str = None
    ir_header: str = ''
    benchmark: str = 'toy'

    @property
    def function_id(self):
        return self.function.id

    def text(self, spec):
        return self.texts.get(spec)

    def to_dict(self):
        return {
            'id': self.function.id,
            'split': self.split,
            'texts': {spec.key: text for spec, text in sorted(self.texts.items(), key=lambda kv: kv[0].key)},
            'features': dict(self.function.features),
            'io_examples': [e.to_dict() for e in self.function.io_examples],
            'dedup_key': self.dedup_key,
            'c_code': self.function.c_code,
            'context': self.function.context,
            'ir_header': self.ir_header,
            'benchmark': self.benchmark,
        }

    @classmethod
    def from_dict(cls, data):
        function = SourceFunction(id=data['id'], c_code=data.get('c_code', ''),
                                  context=data.get('context', ''),
                                  io_examples=data.get('io_examples', []),
                                  features=data.get('features') or {})
        texts = {CompilationSpec.from_key(k): v for k, v in data.get('texts', {}).items()}
        return cls(function=function, texts=texts, dedup_key=data.get('dedup_key'),
                   split=data.get('split'), ir_header=data.get('ir_header', ''),
                   benchmark=data.get('benchmark', 'toy'))


# ---------------------------------------------------------------------------
# Compiler driving
# ---------------------------------------------------------------------------

def _host_isa():
    machine = platform.machine().lower()
    return {'amd64': Isa.X86_64, 'x86_64': Isa.X86_64, 'arm64': Isa.AARCH64,
            'aarch64': Isa.AARCH64, 'riscv64': Isa.RISCV64}.get(machine)


@functools.lru_cache(maxsize=None)
def _clang_backends(clang):
    try:
        out = subprocess.run([clang, '-print-targets'], capture_output=True, text=True, timeout=30)
    except (OSError, subprocess.TimeoutExpired):
        return frozenset()
    return frozenset(line.split()[0] for line in out.stdout.splitlines()[1:] if line.strip())


def compiler_command(spec):
    """
    Build the base command line for a compilation spec.

    Raises:
        ToolMissing: The compiler binary or target backend is not installed
    """
    if spec.compiler == Compiler.CLANG:
        binary = toolchain('clang')
        if not shutil.which(binary):
            raise ToolMissing(f"clang not found (looked for '{binary}', override with LIFTER_CLANG)")
        cmd = [binary]
        if spec.isa != Isa.HOST:
            backends = _clang_backends(binary)
            if backends and _CLANG_BACKENDS[spec.isa] not in backends:
                raise ToolMissing(f"{binary} has no {spec.isa.value} backend")
            cmd.append(f"--target={TRIPLES[spec.isa]}")
    else:
        binary = toolchain('gcc')
        if spec.isa not in (Isa.HOST, _host_isa()):
            binary = f"{TRIPLES[spec.isa]}-gcc"
        if not shutil.which(binary):
            raise ToolMissing(f"gcc for {spec.isa.value} not found (looked for '{binary}')")
        cmd = [binary]
    return cmd


def _hermetic_env():
    return {'PATH': os.environ.get('PATH', '/usr/bin:/bin'), 'LC_ALL': 'C'}


def run_compiler(cmd, source, timeout=60, filename='unit.c'):
    """Run a compiler on a source string in a private temp dir; return stdout text."""
    with tempfile.TemporaryDirectory(prefix='lifter-cc-') as tmp:
        with open(os.path.join(tmp, filename), 'w', encoding='utf-8') as f:
            f.write(source)
        try:
            result = subprocess.run(cmd, cwd=tmp, env=_hermetic_env(), capture_output=True,
                                    text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            raise CompileError(f"compiler timed out after {timeout}s", returncode=-1)
        if result.returncode != 0:
            raise CompileError(f"{os.path.basename(cmd[0])} exited with {result.returncode}",
                               returncode=result.returncode, stderr=result.stderr)
        return result.stdout


def extract_asm_function(asm_text, name):
    """Keep only the lines from the function label up to its end marker."""
    lines = asm_text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if line.strip() == f"{name}:":
            start = i
            break
    if start is None:
        raise CompileError(f"symbol '{name}' not found in assembly output")
    out = []
    for line in lines[start:]:
        stripped = line.strip()
        if re.match(rf'\.size\s+{re.escape(name)}\s*,', stripped) or re.match(r'\.Lfunc_end\d+:', stripped):
            break
        out.append(line)
    return '\n'.join(out)


_GLOBAL_LINE_RE = re.compile(r'^(@[^\s=]+)\s*=\s*(.*?)\b(global|constant)\s+(.*)$')
_CLOSERS = {'[': ']', '{': '}', '<': '>', '(': ')'}


def _leading_type(text):
    """Split an IR type off the front of `text` by bracket matching."""
    text = text.lstrip()
    if not text:
        return '', ''
    if text[0] in _CLOSERS:
        depth = 0
        stack = []
        for i, ch in enumerate(text):
            if ch in _CLOSERS:
                stack.append(_CLOSERS[ch])
                depth += 1
            elif stack and ch == stack[-1]:
                stack.pop()
                depth -= 1
                if depth == 0:
                    return text[:i + 1], text[i + 1:]
        return text, ''
    if text.startswith('%"'):
        end = text.index('"', 2)
        return text[:end + 1], text[end + 1:]
    token = re.match(r'[^\s,]+', text).group(0)
    return token, text[len(token):]


def external_global(line):
    """Turn a global definition into an external declaration; private/internal stay verbatim."""
    m = _GLOBAL_LINE_RE.match(line.strip())
    if not m:
        return line
    name, linkage, kind, rest = m.groups()
    if re.search(r'\b(private|internal)\b', linkage):
        return line
    gtype, tail = _leading_type(rest)
    align = re.search(r',\s*align\s+\d+', tail)
    return f"{name} = external {kind} {gtype}{align.group(0) if align else ''}"


def _declaration_of(define_line):
    text = define_line.strip()[len('define '):].rstrip('{').strip()
    text = re.sub(r'\s+#\d+', '', text)
    text = re.sub(r'\s+%[\w.$-]+(?=\s*[,)])', '', text)
    return f"declare {text}"


_DEFINE_NAME_RE = re.compile(r'@([\w.$-]+|"[^"]+")\(')
_SYMBOL_REF_RE = re.compile(r'@([\w.$-]+|"[^"]+")')


def _define_blocks(lines):
    """Split module lines into ('line', text) and ('define', name, linkage, block lines) items."""
    items = []
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if stripped.startswith('define '):
            m = _DEFINE_NAME_RE.search(stripped)
            block = []
            while i < len(lines):
                block.append(lines[i].rstrip())
                if lines[i].startswith('}'):
                    break
                i += 1
            linkage = stripped.split('@', 1)[0]
            local = bool(re.search(r'\b(internal|private)\b', linkage))
            items.append(('define', m.group(1) if m else '', local, block))
        else:
            items.append(('line', stripped))
        i += 1
    return items


def _reachable_locals(items, name):
    """Internal functions the target calls or takes the address of, transitively."""
    bodies = {item[1]: item[3] for item in items if item[0] == 'define'}
    local = {item[1] for item in items if item[0] == 'define' and item[2]}
    seen = set()
    todo = [name]
    while todo:
        current = todo.pop()
        for line in bodies.get(current, [])[1:]:
            for ref in _SYMBOL_REF_RE.findall(line):
                if ref in local and ref not in seen:
                    seen.add(ref)
                    todo.append(ref)
    seen.discard(name)
    return seen


def extract_ir_function(ir_text, name):
    """
    Restrict an IR module to what the target function needs: the target
    header, named type definitions, globals (as external declarations unless
    private or internal), `declare` lines, the function's `define` block and
    the blocks of the internal helpers it reaches. Other externally visible
    functions the unit defines become declarations.
    """
    items = _define_blocks(ir_text.splitlines())
    if not any(item[0] == 'define' and item[1] == name for item in items):
        raise CompileError(f"function '{name}' not found in IR output")
    helpers = _reachable_locals(items, name)
    out = []
    for item in items:
        if item[0] == 'line':
            stripped = item[1]
            if stripped.startswith('target ') or re.match(r'^%[\w."$-]+ = type ', stripped) \
                    or stripped.startswith('declare '):
                out.append(stripped)
            elif stripped.startswith('@'):
                out.append(external_global(stripped))
            continue
        _, fname, local, block = item
        if fname == name or fname in helpers:
            out.append('')
            out.extend(block)
        elif not local:
            out.append(_declaration_of(block[0].strip()))
    return '\n'.join(out)


def compile_unit(func, spec, timeout=60):
    """
    Compile one function under one compilation spec.

    Args:
        func (SourceFunction): Function with its compilable context
        spec (CompilationSpec): Compiler, ISA, optimisation level, representation
        timeout (int): Wall-clock limit in seconds

    Returns:
        str: Assembly or IR restricted to the function's definition

    Raises:
        CompileError: The compiler rejected the unit
        ToolMissing: The compiler or target is not installed
    """
    cmd = compiler_command(spec)
    cmd += ['-S', f"-{spec.opt_level.value}", '-g0', '-w', '-fno-asynchronous-unwind-tables']
    if spec.representation == Representation.IR:
        cmd.append('-emit-llvm')
    cmd += ['-x', 'c', 'unit.c', '-o', '-']
    output = run_compiler(cmd, func.unit_source, timeout=timeout)
    name = func.name
    if spec.representation == Representation.IR:
        return extract_ir_function(output, name)
    return extract_asm_function(output, name)


def _host_compiles(func, timeout=60):
    cmd = compiler_command(CompilationSpec('clang', 'host', 'O0', 'asm_text'))
    cmd += ['-c', '-w', '-x', 'c', 'unit.c', '-o', 'unit.o']
    try:
        parse_signature(func.c_code)
        run_compiler(cmd, func.unit_source, timeout=timeout)
        return True
    except (CompileError, UnsupportedSignature) as e:
        logger.info(f"Precheck discarded {func.id}: {e}")
        return False


def precheck_host_compiles(funcs, jobs=1):
    """
    Keep only functions whose context + code compile on the host.

    Returns:
        tuple: (kept functions in input order, discard rate)
    """
    if not funcs:
        return [], 0.0
    compiler_command(CompilationSpec('clang', 'host', 'O0', 'asm_text'))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        ok = list(pool.map(_host_compiles, funcs))
    kept = [f for f, good in zip(funcs, ok) if good]
    rate = (len(funcs) - len(kept)) / len(funcs)
    logger.info(f"Precheck kept {len(kept)}/{len(funcs)} functions (discard rate {rate:.2%})")
    return kept, rate


def _compile_task(args):
    func, spec = args
    try:
        return compile_unit(func, spec), None
    except CompileError as e:
        return None, f"{e} {e.stderr.strip()[:500]}"


def compile_matrix(funcs, specs, jobs=1, profile=None, target=TARGET_SPEC):
    """
    Compile every function under every spec with a process pool; results are
    collected by a single writer in input order. The IR header kept for
    verification is the one of the ``target`` spec.

    Returns:
        list: One dict per function: {'texts': {spec: text}, 'ir_header': str}
    """
    profile = profile or DEFAULT_PROFILE
    usable = []
    for spec in specs:
        try:
            compiler_command(spec)
            usable.append(spec)
        except ToolMissing as e:
            logger.warning(f"Skipping {spec.key}: {e}")
    tasks = [(func, spec) for func in funcs for spec in usable]
    results = [{'texts': {}, 'ir_header': ''} for _ in funcs]
    if not tasks:
        return results

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(tqdm(pool.map(_compile_task, tasks, chunksize=8), total=len(tasks),
                                desc='compile', ncols=70, mininterval=5.0))
    else:
        outputs = [_compile_task(t) for t in tqdm(tasks, desc='compile', ncols=70, mininterval=5.0)]

    for idx, ((func, spec), (text, error)) in enumerate(zip(tasks, outputs)):
        slot = results[idx // len(usable)]
        if text is None:
            logger.error(f"Compile failed for {func.id} at {spec.key}: {error}")
            continue
        if spec.representation == Representation.IR:
            header, body = split_ir_header(text)
            if spec == target:
                slot['ir_header'] = header
            slot['texts'][spec] = normalize_ir(body, profile)
        else:
            slot['texts'][spec] = normalize_asm(text, profile)
    return results


# ---------------------------------------------------------------------------
# Dataset hygiene
# ---------------------------------------------------------------------------

def compute_dedup_key(asm_text, function_name):
    """Hash of the normalised key assembly with the function's own symbol masked."""
    text = normalize_asm(asm_text)
    text = re.sub(rf'(?<![\w.$]){re.escape(function_name)}(?![\w$])', '<fn>', text)
    return sha256_text(text)


def ensure_dedup_key(record):
    if record.dedup_key:
        return record.dedup_key
    text = record.texts.get(KEY_SPEC)
    if text is None:
        raise MissingKey(f"record {record.function_id} has no {KEY_SPEC.key} text to key on")
    record.dedup_key = compute_dedup_key(text, record.function.name)
    return record.dedup_key


def dedup_by_assembly(records):
    """
    Drop records whose normalised assembly duplicates an earlier one, and any
    train record whose key also occurs in a valid/test record.

    Raises:
        MissingKey: A record lacks the keyed representation
    """
    for record in records:
        ensure_dedup_key(record)
    eval_keys = {r.dedup_key for r in records if r.split in ('valid', 'test')}
    seen = set()
    kept = []
    for record in records:
        if record.dedup_key in seen:
            continue
        if record.split == 'train' and record.dedup_key in eval_keys:
            logger.info(f"Dropping train record {record.function_id}: key shared with eval split")
            continue
        seen.add(record.dedup_key)
        kept.append(record)
    if len(kept) != len(records):
        logger.info(f"Assembly dedup kept {len(kept)}/{len(records)} records")
    return kept


SPLITS = ('train', 'valid', 'test')


def split_dataset(records, ratios=(0.8, 0.1, 0.1), seed=0):
    """
    Assign train/valid/test deterministically, grouping records by dedup key
    so a key never straddles splits.

    Returns:
        list: Copies of the records with ``split`` set, in input order
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three values summing to 1, got {ratios}")
    keys = []
    seen = set()
    for record in records:
        key = ensure_dedup_key(record)
        if key not in seen:
            seen.add(key)
            keys.append(key)
    rng = random.Random(seed)
    order = list(keys)
    rng.shuffle(order)
    n = len(order)
    train_end = round(ratios[0] * n)
    valid_end = round((ratios[0] + ratios[1]) * n)
    assignment = {}
    for i, key in enumerate(order):
        assignment[key] = 'train' if i < train_end else ('valid' if i < valid_end else 'test')
    return [dataclasses.replace(r, split=assignment[r.dedup_key]) for r in records]


def filter_by_length(records, vocab, max_tokens=2048, splits=('train',), specs=None):
    """
    Remove records whose tokenised texts exceed max_tokens, but only from the
    given splits; evaluation records are never filtered.
    """
    from tokenizer import encode

    kept = []
    removed = 0
    for record in records:
        if record.split in splits:
            texts = [record.texts[s] for s in (specs or record.texts) if s in record.texts]
            if any(len(encode(vocab, t)) > max_tokens for t in texts):
                removed += 1
                continue
        kept.append(record)
    if removed:
        logger.info(f"Length filter removed {removed} training records (> {max_tokens} tokens)")
    return kept


def token_length_stats(records, spec, vocab):
    """
    Population mean and standard deviation of token counts for one representation.

    Raises:
        EmptySelection: No record carries the representation
    """
    from tokenizer import encode

    lengths = [len(encode(vocab, r.texts[spec])) for r in records if spec in r.texts]
    if not lengths:
        raise EmptySelection(f"no record has {spec.key}")
    arr = np.asarray(lengths, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


# ---------------------------------------------------------------------------
# Building and files
# ---------------------------------------------------------------------------

def load_functions(path):
    return [SourceFunction.from_dict(row) for row in read_jsonl(path)]


def build_corpus(funcs, specs, ratios=(0.8, 0.1, 0.1), seed=0, jobs=1, benchmark='toy', profile=None,
                 target=TARGET_SPEC):
    """
    Precheck, compile, key, split and deduplicate a function list.

    Returns:
        tuple: (records, stats dict)
    """
    profile = profile or DEFAULT_PROFILE
    specs = list(specs)
    for required in (KEY_SPEC, target):
        if required not in specs:
            specs.append(required)
    kept, discard_rate = precheck_host_compiles(funcs, jobs=jobs)
    compiled = compile_matrix(kept, specs, jobs=jobs, profile=profile, target=target)

    records = []
    for func, result in zip(kept, compiled):
        texts = result['texts']
        if KEY_SPEC not in texts or target not in texts:
            logger.warning(f"Dropping {func.id}: missing key assembly or target IR")
            continue
        record = ParallelRecord(function=func, texts=texts, ir_header=result['ir_header'],
                                benchmark=benchmark)
        ensure_dedup_key(record)
        records.append(record)

    records = split_dataset(records, ratios, seed)
    records = dedup_by_assembly(records)
    stats = {
        'input': len(funcs),
        'kept_after_precheck': len(kept),
        'discard_rate': discard_rate,
        'records': len(records),
        'by_split': {s: sum(1 for r in records if r.split == s) for s in SPLITS},
    }
    logger.info(f"Corpus built: {stats}")
    return records, stats


def write_dataset(path, records, profile=None):
    profile = profile or DEFAULT_PROFILE
    lines = [dumps_line({'header': {'format': 1, 'profile': profile.to_dict()}})]
    lines += [dumps_line(r.to_dict()) for r in records]
    atomic_write_text(path, '\n'.join(lines) + '\n')


def read_dataset(path):
    """
    Returns:
        tuple: (NormalizationProfile, list of ParallelRecord)
    """
    profile = DEFAULT_PROFILE
    records = []
    for row in read_jsonl(path):
        if 'header' in row:
            profile = NormalizationProfile.from_dict(row['header'].get('profile'))
            continue
        records.append(ParallelRecord.from_dict(row))
    return profile, records
