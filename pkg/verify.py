"""
Observational-equivalence harness for lifted IR.

A predicted IR function is compiled back for the host, linked against a C
driver that embeds the function's original context, and run on the
function's I/O examples. The driver checks the return value and the
post-call state of arrays, strings, struct pointers and globals, printing
``PASS`` or ``FAIL:<detail>``.
"""

import logging
import math
import os
import re
import resource
import shutil
import subprocess
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

from tqdm import tqdm

from config import toolchain
from corpus import context_globals, extract_asm_function, parse_signature
from exceptions import (CompileError, EmptyInput, InvalidExample, SandboxUnavailable, ToolMissing,
                        UnsupportedSignature)
from normalize import normalize_asm
from utils import artifact_dir, atomic_write_text

logger = logging.getLogger(__name__)

PASS, FAIL, TIMEOUT, CRASH = 'pass', 'fail', 'timeout', 'crash'
ARG_KINDS = ('scalar', 'array', 'string', 'struct_ptr')


@dataclass
class CaseResult:
    outcome: str
    detail: str = ''
    returncode: int = 0


@dataclass
class HypothesisVerdict:
    compiles: bool = False
    per_example: list = field(default_factory=list)
    all_pass: bool = False
    error: str = ''
    skipped: bool = False


@dataclass
class VerificationVerdict:
    hypotheses: list = field(default_factory=list)
    first_passing_index: int = None

    @property
    def io_correct(self):
        return self.first_passing_index is not None

    @property
    def compilable(self):
        return any(h.compiles for h in self.hypotheses)

    def to_dict(self):
        return {
            'hypotheses': [asdict(h) for h in self.hypotheses],
            'first_passing_index': self.first_passing_index,
            'io_correct': self.io_correct,
            'compilable': self.compilable,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(hypotheses=[HypothesisVerdict(**h) for h in data.get('hypotheses', [])],
                   first_passing_index=data.get('first_passing_index'))


# ---------------------------------------------------------------------------
# Driver emission
# ---------------------------------------------------------------------------

def _is_float_type(ctype):
    return bool(re.search(r'\b(float|double)\b', ctype or ''))


def _storage_type(pointer_ctype):
    """`const int *` -> `int`: the writable element type behind a pointer parameter."""
    base = pointer_ctype.rstrip().rstrip('*').strip()
    return ' '.join(w for w in base.split() if w not in ('const', 'volatile', 'restrict'))


def _c_string(text):
    out = []
    for b in text.encode('utf-8'):
        ch = chr(b)
        if ch in '"\\' or b < 0x20 or b >= 0x7f:
            out.append(f"\\{b:03o}")
        else:
            out.append(ch)
    return '"' + ''.join(out) + '"'


def _literal(value, floating=None):
    if isinstance(value, bool):
        value = int(value)
    if floating is None:
        floating = isinstance(value, float)
    if floating:
        value = float(value)
        if math.isnan(value):
            return 'NAN'
        if math.isinf(value):
            return 'INFINITY' if value > 0 else '-INFINITY'
        return repr(value)
    value = int(value)
    return f"{value}ULL" if value > 2 ** 63 - 1 else f"{value}LL"


def _initializer(value, floating=None):
    if isinstance(value, (list, tuple)):
        return '{' + ', '.join(_initializer(v, floating) for v in value) + '}'
    if isinstance(value, dict):
        return '{' + ', '.join(f".{k} = {_initializer(v, floating)}" for k, v in value.items()) + '}'
    if isinstance(value, str):
        return _c_string(value)
    return _literal(value, floating)


def _check_scalar(expr, value, label, floating=None):
    if floating is None:
        floating = isinstance(value, float)
    if floating:
        return (f"    if (!lifter_close_enough((double)({expr}), {_literal(value, True)})) {{\n"
                f"        printf(\"FAIL:{label} got %.17g want %.17g\\n\", (double)({expr}), "
                f"(double){_literal(value, True)});\n"
                f"        failed = 1;\n    }}\n")
    lit = _literal(value, False)
    return (f"    if ((long long)({expr}) != (long long){lit}) {{\n"
            f"        printf(\"FAIL:{label} got %lld want %lld\\n\", (long long)({expr}), (long long){lit});\n"
            f"        failed = 1;\n    }}\n")


def _check_array(expr, values, label, floating=None):
    if not values:
        return ''
    if floating is None:
        floating = any(isinstance(v, float) for v in values)
    want_type = 'double' if floating else 'long long'
    want = '{' + ', '.join(_literal(v, floating) for v in values) + '}'
    if floating:
        test = f"!lifter_close_enough((double)({expr})[i], want[i])"
        report = f"printf(\"FAIL:{label}[%d] got %.17g want %.17g\\n\", i, (double)({expr})[i], want[i]);"
    else:
        test = f"(long long)({expr})[i] != want[i]"
        report = f"printf(\"FAIL:{label}[%d] got %lld want %lld\\n\", i, (long long)({expr})[i], want[i]);"
    return (f"    {{\n        static const {want_type} want[] = {want};\n"
            f"        for (int i = 0; i < {len(values)}; i++) {{\n"
            f"            if ({test}) {{\n                {report}\n                failed = 1;\n                break;\n"
            f"            }}\n        }}\n    }}\n")


def _check_string(expr, value, label):
    return (f"    if (strcmp((const char *)({expr}), {_c_string(value)}) != 0) {{\n"
            f"        printf(\"FAIL:{label} got \\\"%s\\\"\\n\", (const char *)({expr}));\n"
            f"        failed = 1;\n    }}\n")


def _check_value(expr, value, label, floating=None):
    if isinstance(value, str):
        return _check_string(expr, value, label)
    if isinstance(value, (list, tuple)):
        return _check_array(expr, list(value), label, floating)
    if isinstance(value, dict):
        return ''.join(_check_value(f"({expr}).{k}", v, f"{label}.{k}", floating) for k, v in value.items())
    return _check_scalar(expr, value, label, floating)


def _assign_global(name, value):
    if isinstance(value, dict):
        return ''.join(_assign_global(f"{name}.{k}", v) for k, v in value.items())
    if isinstance(value, (list, tuple)):
        floating = any(isinstance(v, float) for v in value)
        init_type = 'double' if floating else 'long long'
        return (f"    {{\n        static const {init_type} init[] = {_initializer(list(value), floating)};\n"
                f"        for (int i = 0; i < {len(value)}; i++) {name}[i] = init[i];\n    }}\n")
    if isinstance(value, str):
        return f"    strcpy({name}, {_c_string(value)});\n"
    return f"    {name} = {_literal(value)};\n"


def _prototype(sig):
    params = ', '.join(f"{ctype} {name}" for ctype, name in sig.params) or 'void'
    return f"{sig.return_type} {sig.name}({params});"


def _split_top_level(text, sep):
    parts, depth, start, quote, escaped = [], 0, 0, None, False
    for i, ch in enumerate(text):
        if quote:
            if escaped:
                escaped = False
            elif ch == '\\':
                escaped = True
            elif ch == quote:
                quote = None
        elif ch in '"\'':
            quote = ch
        elif ch in '({[':
            depth += 1
        elif ch in ')}]':
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


def _extern_declaration(statement):
    body = re.sub(r'^\s*static\s+', '', statement.strip().rstrip(';'))
    declarators = [_split_top_level(d, '=')[0].strip() for d in _split_top_level(body, ',')]
    return f"extern {', '.join(declarators)};"


def _driver_context(context):
    """
    The context as the driver sees it: static variables become extern
    declarations of the copies the lifted module defines.
    """
    out, pending, depth = [], None, 0
    for line in context.splitlines():
        if pending is None and depth == 0 and re.match(r'^\s*static\b', line):
            pending = []
        if pending is None:
            out.append(line)
            depth += line.count('{') - line.count('}')
            continue
        pending.append(line)
        statement = re.sub(r'//[^\n]*', '', '\n'.join(pending)).rstrip()
        if '(' in statement:
            # static function or attribute: kept as written
            out.extend(pending)
            depth += statement.count('{') - statement.count('}')
            pending = None
        elif statement.endswith(';') and statement.count('{') == statement.count('}'):
            out.append(_extern_declaration(statement))
            pending = None
    if pending:
        out.extend(pending)
    return '\n'.join(out)


def emit_driver(func, example, rel_tol=1e-6, abs_tol=1e-9):
    """
    Generate a C `main` that runs one I/O example against the function.

    Args:
        func (SourceFunction): Function with its context (types, globals, helpers)
        example (IoExample): Inputs and expected post-state
        rel_tol (float): Relative tolerance for floating-point comparisons
        abs_tol (float): Absolute floor for floating-point comparisons

    Returns:
        str: C source that prints PASS/FAIL:<detail> and exits 0/1

    Raises:
        UnsupportedSignature: Variadic or function-pointer parameters
        InvalidExample: Arguments or globals do not match the function
    """
    sig = parse_signature(func.c_code)
    if sig.variadic or sig.function_pointer:
        raise UnsupportedSignature(f"{sig.name}: variadic or function-pointer parameters")
    if len(example.args) != len(sig.params):
        raise InvalidExample(f"{sig.name} takes {len(sig.params)} arguments, example has {len(example.args)}")
    declared = set(context_globals(func.context))
    for name in list(example.globals_pre) + list(example.expected_globals_post):
        if name not in declared:
            raise InvalidExample(f"global '{name}' is not declared in the context of {sig.name}")

    lines = ['#include <stdio.h>', '#include <stdlib.h>', '#include <string.h>', '#include <math.h>', '']
    if func.context.strip():
        lines += [_driver_context(func.context).rstrip(), '']
    lines += [_prototype(sig), '']
    lines += [
        'static int lifter_close_enough(double got, double want) {',
        '    if (isnan(want)) return isnan(got);',
        '    if (isinf(want)) return got == want;',
        '    double diff = fabs(got - want);',
        f'    return diff <= {abs_tol!r} || diff <= {rel_tol!r} * fabs(want);',
        '}',
        '',
        'int main(void) {',
        '    int failed = 0;',
    ]
    body = []
    for name, value in example.globals_pre.items():
        body.append(_assign_global(name, value))

    variables = {}
    call_args = []
    for i, ((ctype, pname), arg) in enumerate(zip(sig.params, example.args)):
        kind = arg.get('kind', 'scalar')
        if kind not in ARG_KINDS:
            raise UnsupportedSignature(f"{sig.name}: argument kind '{kind}' is not supported")
        var = f"lifter_arg{i}"
        variables[arg.get('name', pname)] = (var, ctype, kind)
        variables.setdefault(pname, (var, ctype, kind))
        if kind == 'scalar':
            body.append(f"    {ctype} {var} = {_literal(arg['value'], _is_float_type(ctype))};\n")
            call_args.append(var)
        elif kind == 'array':
            element = _storage_type(arg.get('ctype') or ctype)
            values = list(arg['value'])
            if values:
                init = _initializer(values, _is_float_type(element))
                body.append(f"    {element} {var}[{max(len(values), int(arg.get('capacity', 0)))}] = {init};\n")
            else:
                body.append(f"    {element} {var}[1] = {{0}};\n")
            call_args.append(var)
        elif kind == 'string':
            capacity = max(len(arg['value'].encode('utf-8')) + 1, int(arg.get('capacity', 0)))
            body.append(f"    char {var}[{capacity}] = {_c_string(arg['value'])};\n")
            call_args.append(var)
        else:
            storage = _storage_type(arg.get('ctype') or ctype)
            body.append(f"    {storage} {var} = {_initializer(arg.get('fields', {}))};\n")
            call_args.append(f"&{var}")

    call = f"{sig.name}({', '.join(call_args)})"
    returns_void = sig.return_type == 'void'
    if not returns_void and re.match(r'^(struct|union)\b', sig.return_type) and '*' not in sig.return_type:
        raise UnsupportedSignature(f"{sig.name}: aggregate return by value")
    if returns_void:
        body.append(f"    {call};\n")
    else:
        body.append(f"    {sig.return_type} lifter_ret = {call};\n")

    expected = example.expected_return
    if expected is not None and not returns_void:
        kind = expected.get('kind', 'value')
        if kind == 'null':
            body.append('    if (lifter_ret != NULL) { printf("FAIL:return expected null\\n"); failed = 1; }\n')
        elif kind == 'nonnull':
            body.append('    if (lifter_ret == NULL) { printf("FAIL:return expected non-null\\n"); failed = 1; }\n')
        elif kind == 'string':
            body.append('    if (lifter_ret == NULL) { printf("FAIL:return is null\\n"); failed = 1; }\n    else\n')
            body.append(_check_string('lifter_ret', expected['value'], 'return'))
        else:
            body.append(_check_scalar('lifter_ret', expected['value'], 'return', _is_float_type(sig.return_type)))

    for name, values in example.expected_array_post.items():
        if name not in variables:
            raise InvalidExample(f"no argument named '{name}'")
        var, ctype, _ = variables[name]
        if isinstance(values, str):
            body.append(_check_string(var, values, name))
        else:
            body.append(_check_array(var, list(values), name, _is_float_type(ctype)))
    for name, fields_post in example.expected_struct_post.items():
        if name not in variables:
            raise InvalidExample(f"no argument named '{name}'")
        var, _, _ = variables[name]
        body.append(_check_value(var, fields_post, name))
    for name, value in example.expected_globals_post.items():
        body.append(_check_value(name, value, name))

    lines.append(''.join(body).rstrip('\n'))
    lines += [
        '    if (!failed) printf("PASS\\n");',
        '    return failed;',
        '}',
        '',
    ]
    return '\n'.join(lines)


# ---------------------------------------------------------------------------
# Compilation and execution
# ---------------------------------------------------------------------------

def _clang():
    binary = toolchain('clang')
    if not shutil.which(binary):
        raise ToolMissing(f"clang not found (looked for '{binary}')")
    return binary


def _run_tool(cmd, cwd, timeout):
    try:
        result = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        raise CompileError(f"{os.path.basename(cmd[0])} timed out after {timeout}s", returncode=-1)
    if result.returncode != 0:
        raise CompileError(f"{os.path.basename(cmd[0])} exited with {result.returncode}",
                           returncode=result.returncode, stderr=result.stderr)
    return result


def _module_text(ir_text, stored_header):
    # the driver calls the function and reads or seeds static globals through extern declarations
    body = re.sub(r'^define\s+(?:internal|private)\s+', 'define ', ir_text, flags=re.M)
    body = re.sub(r'^(@[\w.$-]+\s*=\s*)internal\s+', r'\1', body, flags=re.M)
    header = (stored_header or '').strip()
    return f"{header}\n\n{body.strip()}\n" if header else f"{body.strip()}\n"


def compile_ir_object(ir_text, stored_header, workdir, timeout=30):
    """Re-prefix the target header and compile the IR to an object file."""
    ll_path = os.path.join(workdir, 'pred.ll')
    with open(ll_path, 'w', encoding='utf-8') as f:
        f.write(_module_text(ir_text, stored_header))
    obj_path = os.path.join(workdir, 'pred.o')
    _run_tool([_clang(), '-c', '-O0', '-w', '-x', 'ir', ll_path, '-o', obj_path], workdir, timeout)
    return obj_path


def link_driver(object_path, driver_source, workdir, name='case', timeout=30):
    """Compile a driver and link it with the lifted object."""
    driver_path = os.path.join(workdir, f"{name}.c")
    with open(driver_path, 'w', encoding='utf-8') as f:
        f.write(driver_source)
    binary = os.path.join(workdir, f"{name}.bin")
    _run_tool([_clang(), '-O0', '-w', driver_path, object_path, '-lm', '-o', binary], workdir, timeout)
    return binary


def compile_ir(ir_text, stored_header, driver_source, workdir=None, timeout=30):
    """
    Compile predicted IR plus a driver into an executable.

    Without ``workdir`` a fresh temporary directory is created. On success it
    holds the returned binary and the caller removes it (the directory is
    ``os.path.dirname`` of the result); on failure it is removed here.
    ``verify_prediction`` passes its own scoped directory.

    Raises:
        CompileError: IR parse/verifier failure or link failure (stderr kept verbatim)
    """
    if workdir:
        obj = compile_ir_object(ir_text, stored_header, workdir, timeout)
        return link_driver(obj, driver_source, workdir, timeout=timeout)
    workdir = tempfile.mkdtemp(prefix='lifter-verify-')
    try:
        obj = compile_ir_object(ir_text, stored_header, workdir, timeout)
        return link_driver(obj, driver_source, workdir, timeout=timeout)
    except Exception:
        shutil.rmtree(workdir, ignore_errors=True)
        raise


def recompile_to_asm(ir_text, stored_header, opt='O3', timeout=30):
    """Re-optimise lifted IR and return the function's normalised host assembly."""
    with tempfile.TemporaryDirectory(prefix='lifter-reopt-') as tmp:
        ll_path = os.path.join(tmp, 'pred.ll')
        with open(ll_path, 'w', encoding='utf-8') as f:
            f.write(_module_text(ir_text, stored_header))
        result = _run_tool([_clang(), '-S', f"-{opt}", '-w', '-fno-asynchronous-unwind-tables',
                            '-x', 'ir', ll_path, '-o', '-'], tmp, timeout)
    asm = result.stdout
    match = re.search(r'^define\b[^@]*@([\w.$]+)\(', ir_text, re.M)
    if match:
        try:
            asm = extract_asm_function(asm, match.group(1))
        except CompileError:
            pass
    return normalize_asm(asm)


_sandbox_warned = False


def _limit_resources(timeout):
    def apply():
        cpu = int(math.ceil(timeout)) + 1
        resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu))
        resource.setrlimit(resource.RLIMIT_AS, (512 * 1024 * 1024, 512 * 1024 * 1024))
        resource.setrlimit(resource.RLIMIT_FSIZE, (1024 * 1024, 1024 * 1024))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
        os.umask(0o077)
        os.setpgrp()
    return apply


def _sandbox_prefix():
    global _sandbox_warned
    firejail = shutil.which('firejail')
    if firejail:
        return [firejail, '--quiet', '--net=none', '--noroot', '--nodbus']
    if not _sandbox_warned:
        _sandbox_warned = True
        logger.warning("firejail not found; running cases as plain resource-limited subprocesses")
        warnings.warn(SandboxUnavailable("firejail not available"), RuntimeWarning, stacklevel=3)
    return []


def run_case(binary, timeout=5):
    """
    Run one driver binary in a private temp directory.

    Returns:
        CaseResult: pass (exit 0 with PASS), fail (non-zero exit), timeout or crash (signal)
    """
    prefix = _sandbox_prefix()
    with tempfile.TemporaryDirectory(prefix='lifter-run-') as cwd:
        try:
            result = subprocess.run(prefix + [os.path.abspath(binary)], cwd=cwd, capture_output=True,
                                    text=True, errors='replace', timeout=timeout,
                                    preexec_fn=_limit_resources(timeout), env={'PATH': '/usr/bin:/bin'})
        except subprocess.TimeoutExpired:
            return CaseResult(TIMEOUT, f"exceeded {timeout}s", -1)
    rc = result.returncode
    stdout = result.stdout or ''
    fail_line = next((l for l in stdout.splitlines() if l.startswith('FAIL:')), '')
    if rc < 0 or (prefix and rc > 128):
        return CaseResult(CRASH, f"signal {-rc if rc < 0 else rc - 128}", rc)
    if rc == 0 and 'PASS' in stdout.splitlines():
        return CaseResult(PASS, '', 0)
    return CaseResult(FAIL, fail_line or f"exit {rc}", rc)


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------

def _archive(artifacts, func_id, index, files):
    if not artifacts:
        return
    try:
        target = artifact_dir(artifacts, func_id, f"h{index}")
        for name, text in files.items():
            atomic_write_text(os.path.join(target, name), text)
    except OSError as e:
        logger.error(f"Could not archive artifacts for {func_id}: {e}")


def verify_hypothesis(func, ir_text, drivers, header='', timeout=5, compile_timeout=30,
                      artifacts=None, index=0):
    """Compile one hypothesis once and run it against every example driver."""
    verdict = HypothesisVerdict()
    with tempfile.TemporaryDirectory(prefix='lifter-verify-') as tmp:
        try:
            obj = compile_ir_object(ir_text, header, tmp, compile_timeout)
            binaries = [link_driver(obj, src, tmp, f"case{k}", compile_timeout) for k, src in enumerate(drivers)]
        except CompileError as e:
            verdict.error = e.stderr or str(e)
            _archive(artifacts, func.id, index, {'pred.ll': _module_text(ir_text, header),
                                                 'stderr.txt': verdict.error})
            return verdict
        verdict.compiles = True
        for k, binary in enumerate(binaries):
            case = run_case(binary, timeout)
            verdict.per_example.append(case.outcome)
            if case.outcome != PASS:
                _archive(artifacts, func.id, index, {f"driver{k}.c": drivers[k],
                                                     'pred.ll': _module_text(ir_text, header),
                                                     f"case{k}.txt": f"{case.outcome}: {case.detail}\n"})
    verdict.all_pass = bool(verdict.per_example) and all(o == PASS for o in verdict.per_example)
    return verdict


def verify_prediction(func, hypotheses, examples=None, header='', timeout=5, compile_timeout=30,
                      skip_after_pass=True, artifacts=None, rel_tol=1e-6, abs_tol=1e-9):
    """
    Check ranked IR hypotheses for observational equivalence.

    A hypothesis is correct when it compiles and passes every example.

    Args:
        func (SourceFunction): Function with context
        hypotheses (list): IR texts in rank order
        examples (list): IoExample list (defaults to the function's own)
        header (str): Stored target datalayout/triple lines
        skip_after_pass (bool): Stop after the first passing hypothesis

    Returns:
        VerificationVerdict
    """
    examples = func.io_examples if examples is None else examples
    if not examples:
        raise EmptyInput(f"{func.id} has no I/O examples")
    drivers = [emit_driver(func, ex, rel_tol, abs_tol) for ex in examples]

    verdict = VerificationVerdict()
    for index, ir_text in enumerate(hypotheses):
        if skip_after_pass and verdict.first_passing_index is not None:
            verdict.hypotheses.append(HypothesisVerdict(skipped=True))
            continue
        h = verify_hypothesis(func, ir_text, drivers, header, timeout, compile_timeout, artifacts, index)
        verdict.hypotheses.append(h)
        if h.all_pass and verdict.first_passing_index is None:
            verdict.first_passing_index = index
    return verdict


def verify_predictions(records, predictions, cfg=None, artifacts=None, jobs=4, progress=True):
    """
    Verify a predictions file against its dataset.

    Args:
        records (dict): function id -> ParallelRecord
        predictions (list): Rows {id, hypotheses, isa, compiler, opt, benchmark}
        cfg (VerifySection): Timeouts, tolerances and skip policy

    Returns:
        list: Verdict rows in prediction order
    """
    from config import VerifySection

    cfg = cfg or VerifySection()

    def check(row):
        meta = {k: row.get(k) for k in ('id', 'isa', 'compiler', 'opt', 'benchmark')}
        record = records.get(row['id'])
        if record is None:
            logger.error(f"Prediction for unknown function {row['id']}")
            return {**meta, 'error': 'unknown function', **VerificationVerdict().to_dict()}
        try:
            verdict = verify_prediction(record.function, row.get('hypotheses', []), header=record.ir_header,
                                        timeout=cfg.timeout, compile_timeout=cfg.compile_timeout,
                                        skip_after_pass=cfg.skip_after_pass, artifacts=artifacts,
                                        rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
            return {**meta, **verdict.to_dict()}
        except (UnsupportedSignature, InvalidExample, EmptyInput) as e:
            logger.error(f"Cannot verify {row['id']}: {e}")
            return {**meta, 'error': str(e), **VerificationVerdict().to_dict()}

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(tqdm(pool.map(check, predictions), total=len(predictions), desc='verify',
                            disable=not progress))
    passed = sum(1 for r in results if r['io_correct'])
    logger.info(f"Verified {len(results)} functions: {passed} I/O-correct")
    return results
