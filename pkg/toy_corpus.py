"""
Bundled toy corpus: small C functions generated from templates.

Each template yields the function, the context it needs (types, globals,
static helpers) and I/O examples whose expected values are computed here
with C int32 semantics. Generation is deterministic for a given seed.
"""

import random

from corpus import IoExample, SourceFunction
from utils import derive_seed

EXAMPLES_PER_FUNCTION = 3
TEMPLATES = {}


def template(name):
    def register(fn):
        TEMPLATES[name] = fn
        return fn
    return register


def _i32(v):
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v & 0x80000000 else v


def _scalar(name, ctype, value):
    return {'name': name, 'kind': 'scalar', 'ctype': ctype, 'value': value}


def _array(name, ctype, values):
    return {'name': name, 'kind': 'array', 'ctype': ctype, 'value': list(values)}


def _ints(rng, n, lo=-20, hi=20):
    return [rng.randint(lo, hi) for _ in range(n)]


@template('lin')
def _lin(fn, rng):
    a, b = rng.randint(2, 9), rng.randint(-9, 9)
    code = f"int {fn}(int x) {{\n    return x * {a} + {b};\n}}"

    def example(r):
        x = r.randint(-50, 50)
        return IoExample(args=[_scalar('x', 'int', x)], expected_return={'value': _i32(x * a + b)})
    return code, '', example


@template('maxof')
def _maxof(fn, rng):
    k = rng.randint(0, 5)
    code = f"int {fn}(int a, int b) {{\n    return (a > b ? a : b) + {k};\n}}"

    def example(r):
        a, b = r.randint(-50, 50), r.randint(-50, 50)
        return IoExample(args=[_scalar('a', 'int', a), _scalar('b', 'int', b)],
                         expected_return={'value': max(a, b) + k})
    return code, '', example


@template('clamp')
def _clamp(fn, rng):
    code = (f"int {fn}(int x, int lo, int hi) {{\n    if (x < lo)\n        return lo;\n"
            f"    if (x > hi)\n        return hi;\n    return x;\n}}")

    def example(r):
        lo = r.randint(-10, 0)
        hi = r.randint(1, 10)
        x = r.randint(-20, 20)
        return IoExample(args=[_scalar('x', 'int', x), _scalar('lo', 'int', lo), _scalar('hi', 'int', hi)],
                         expected_return={'value': lo if x < lo else (hi if x > hi else x)})
    return code, '', example


@template('abs_diff')
def _abs_diff(fn, rng):
    code = f"int {fn}(int a, int b) {{\n    int d = a - b;\n    return d < 0 ? -d : d;\n}}"

    def example(r):
        a, b = r.randint(-100, 100), r.randint(-100, 100)
        return IoExample(args=[_scalar('a', 'int', a), _scalar('b', 'int', b)],
                         expected_return={'value': abs(a - b)})
    return code, '', example


@template('poly')
def _poly(fn, rng):
    a, b, c = rng.randint(1, 5), rng.randint(-5, 5), rng.randint(-9, 9)
    code = f"int {fn}(int x) {{\n    return {a} * x * x + {b} * x + {c};\n}}"

    def example(r):
        x = r.randint(-20, 20)
        return IoExample(args=[_scalar('x', 'int', x)], expected_return={'value': _i32(a * x * x + b * x + c)})
    return code, '', example


@template('fib')
def _fib(fn, rng):
    code = (f"int {fn}(int n) {{\n    int a = 0, b = 1;\n    for (int i = 0; i < n; i++) {{\n"
            f"        int t = a + b;\n        a = b;\n        b = t;\n    }}\n    return a;\n}}")

    def example(r):
        n = r.randint(0, 20)
        a, b = 0, 1
        for _ in range(n):
            a, b = b, a + b
        return IoExample(args=[_scalar('n', 'int', n)], expected_return={'value': a})
    return code, '', example


@template('sum_arr')
def _sum_arr(fn, rng):
    code = (f"int {fn}(const int *a, int n) {{\n    int s = 0;\n    for (int i = 0; i < n; i++)\n"
            f"        s += a[i];\n    return s;\n}}")

    def example(r):
        values = _ints(r, r.randint(1, 8))
        return IoExample(args=[_array('a', 'int', values), _scalar('n', 'int', len(values))],
                         expected_return={'value': sum(values)})
    return code, '', example


@template('inc_arr')
def _inc_arr(fn, rng):
    k = rng.randint(1, 9)
    code = f"void {fn}(int *a, int n) {{\n    for (int i = 0; i < n; i++)\n        a[i] += {k};\n}}"

    def example(r):
        values = _ints(r, r.randint(1, 12))
        return IoExample(args=[_array('a', 'int', values), _scalar('n', 'int', len(values))],
                         expected_array_post={'a': [v + k for v in values]})
    return code, '', example


@template('count_pos')
def _count_pos(fn, rng):
    t = rng.randint(-3, 3)
    code = (f"int {fn}(const int *a, int n) {{\n    int c = 0;\n    for (int i = 0; i < n; i++)\n"
            f"        if (a[i] > {t})\n            c++;\n    return c;\n}}")

    def example(r):
        values = _ints(r, r.randint(1, 8), -10, 10)
        return IoExample(args=[_array('a', 'int', values), _scalar('n', 'int', len(values))],
                         expected_return={'value': sum(1 for v in values if v > t)})
    return code, '', example


_WORDS = ['lift', 'asm', 'decoder', 'Encoder', 'x86', 'ARM', 'risc-v', 'mov eax', 'ir', 'Oz']


@template('strlen_plus')
def _strlen_plus(fn, rng):
    k = rng.randint(0, 9)
    code = f"int {fn}(const char *s) {{\n    int n = 0;\n    while (s[n])\n        n++;\n    return n + {k};\n}}"

    def example(r):
        word = r.choice(_WORDS)
        return IoExample(args=[{'name': 's', 'kind': 'string', 'value': word}],
                         expected_return={'value': len(word) + k})
    return code, '', example


@template('upcase')
def _upcase(fn, rng):
    code = (f"void {fn}(char *s) {{\n    for (; *s; s++)\n        if (*s >= 'a' && *s <= 'z')\n"
            f"            *s -= 32;\n}}")

    def example(r):
        word = r.choice(_WORDS)
        upper = ''.join(c.upper() if 'a' <= c <= 'z' else c for c in word)
        return IoExample(args=[{'name': 's', 'kind': 'string', 'value': word}],
                         expected_array_post={'s': upper})
    return code, '', example


@template('charat')
def _charat(fn, rng):
    text = rng.choice(['assembly', 'lifting!', 'compiler'])
    code = (f"int {fn}(unsigned i) {{\n    static const char msg[] = \"{text}\";\n"
            f"    return msg[i % {len(text)}];\n}}")

    def example(r):
        i = r.randint(0, 40)
        return IoExample(args=[_scalar('i', 'unsigned', i)], expected_return={'value': ord(text[i % len(text)])})
    return code, '', example


@template('global_acc')
def _global_acc(fn, rng):
    k = rng.randint(1, 5)
    context = "int counter = 0;"
    code = f"void {fn}(int x) {{\n    counter += x * {k};\n}}"

    def example(r):
        start, x = r.randint(-50, 50), r.randint(-20, 20)
        return IoExample(args=[_scalar('x', 'int', x)], globals_pre={'counter': start},
                         expected_globals_post={'counter': start + x * k})
    return code, context, example


@template('table_read')
def _table_read(fn, rng):
    table = _ints(rng, 8, -30, 30)
    k = rng.randint(1, 4)
    context = f"int table[8] = {{{', '.join(str(v) for v in table)}}};"
    code = f"int {fn}(int i) {{\n    return table[i & 7] * {k};\n}}"

    def example(r):
        i = r.randint(-20, 20)
        return IoExample(args=[_scalar('i', 'int', i)], expected_return={'value': table[i & 7] * k})
    return code, context, example


@template('struct_write')
def _struct_write(fn, rng):
    k = rng.randint(1, 4)
    context = "struct point {\n    int x;\n    int y;\n};"
    code = f"void {fn}(struct point *p, int d) {{\n    p->x += d;\n    p->y -= d * {k};\n}}"

    def example(r):
        x, y, d = r.randint(-50, 50), r.randint(-50, 50), r.randint(-10, 10)
        return IoExample(args=[{'name': 'p', 'kind': 'struct_ptr', 'ctype': 'struct point',
                                'fields': {'x': x, 'y': y}}, _scalar('d', 'int', d)],
                         expected_struct_post={'p': {'x': x + d, 'y': y - d * k}})
    return code, context, example


@template('struct_sum')
def _struct_sum(fn, rng):
    k = rng.randint(2, 9)
    context = "struct pair {\n    int a;\n    int b;\n};"
    code = f"int {fn}(const struct pair *p) {{\n    return p->a * {k} + p->b;\n}}"

    def example(r):
        a, b = r.randint(-50, 50), r.randint(-50, 50)
        return IoExample(args=[{'name': 'p', 'kind': 'struct_ptr', 'ctype': 'struct pair',
                                'fields': {'a': a, 'b': b}}],
                         expected_return={'value': a * k + b})
    return code, context, example


@template('fscale')
def _fscale(fn, rng):
    a = rng.choice([0.5, 1.25, 2.0, 3.5, -0.75])
    b = rng.choice([0.0, 1.5, -2.25, 10.0])
    code = f"double {fn}(double x) {{\n    return x * {a!r} + {b!r};\n}}"

    def example(r):
        x = r.randint(-400, 400) / 8.0
        return IoExample(args=[_scalar('x', 'double', x)], expected_return={'value': x * a + b})
    return code, '', example


@template('dot')
def _dot(fn, rng):
    code = (f"float {fn}(const float *a, const float *b, int n) {{\n    float s = 0.0f;\n"
            f"    for (int i = 0; i < n; i++)\n        s += a[i] * b[i];\n    return s;\n}}")

    def example(r):
        n = r.randint(1, 6)
        xs = [float(r.randint(-8, 8)) for _ in range(n)]
        ys = [float(r.randint(-8, 8)) for _ in range(n)]
        return IoExample(args=[_array('a', 'float', xs), _array('b', 'float', ys), _scalar('n', 'int', n)],
                         expected_return={'value': float(sum(x * y for x, y in zip(xs, ys)))})
    return code, '', example


@template('swap')
def _swap(fn, rng):
    code = f"void {fn}(int *a, int *b) {{\n    int t = *a;\n    *a = *b;\n    *b = t;\n}}"

    def example(r):
        a, b = r.randint(-99, 99), r.randint(-99, 99)
        return IoExample(args=[_array('a', 'int', [a]), _array('b', 'int', [b])],
                         expected_array_post={'a': [b], 'b': [a]})
    return code, '', example


@template('static_acc')
def _static_acc(fn, rng):
    k = rng.randint(1, 5)
    context = "static int total;"
    code = f"void {fn}(int x) {{\n    total += x * {k};\n}}"

    def example(r):
        start, x = r.randint(-50, 50), r.randint(-20, 20)
        return IoExample(args=[_scalar('x', 'int', x)], globals_pre={'total': start},
                         expected_globals_post={'total': start + x * k})
    return code, context, example


@template('helper_call')
def _helper_call(fn, rng):
    k = rng.randint(1, 9)
    context = (f"static __attribute__((noinline)) int {fn}_sq(int v) {{\n"
               f"    return v * v + {k};\n}}")
    code = f"int {fn}(int x) {{\n    return {fn}_sq(x) - {fn}_sq(x - 1);\n}}"

    def example(r):
        x = r.randint(-100, 100)
        return IoExample(args=[_scalar('x', 'int', x)], expected_return={'value': 2 * x - 1})
    return code, context, example


def generate_toy_functions(n=200, seed=0):
    """
    Generate n functions cycling through every template.

    Returns:
        list: SourceFunction, ids `f<k>_<template>`
    """
    names = list(TEMPLATES)
    functions = []
    for k in range(n):
        kind = names[k % len(names)]
        rng = random.Random(derive_seed(seed, f"toy:{k}"))
        fn = f"f{k:03d}_{kind}"
        code, context, example = TEMPLATES[kind](fn, rng)
        examples = [example(rng) for _ in range(EXAMPLES_PER_FUNCTION)]
        functions.append(SourceFunction(id=fn, c_code=code, context=context, io_examples=examples))
    return functions
