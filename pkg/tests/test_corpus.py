import pytest

from corpus import (KEY_SPEC, TARGET_SPEC, CompilationSpec, ParallelRecord, SourceFunction, compile_unit,
                    compute_dedup_key, compute_source_features, context_globals, dedup_by_assembly,
                    extract_asm_function, extract_ir_function, parse_signature, read_dataset, split_dataset,
                    token_length_stats, write_dataset)
from exceptions import EmptySelection, MissingKey, UnsupportedSignature
from normalize import normalize_ir, split_ir_header
from toy_corpus import generate_toy_functions


def test_parse_signature_pointer_params():
    sig = parse_signature("int f(const int *a, int n) {\n  return a[0] + n;\n}")
    assert sig.return_type == 'int'
    assert sig.name == 'f'
    assert sig.params == [('const int *', 'a'), ('int', 'n')]


def test_parse_signature_pointer_return():
    sig = parse_signature("char *dup(char *s) { return s; }")
    assert sig.return_type == 'char *'
    assert sig.params == [('char *', 's')]


def test_parse_signature_variadic_and_missing():
    assert parse_signature("int f(int n, ...) { return n; }").variadic
    with pytest.raises(UnsupportedSignature):
        parse_signature("int x = 3;")


def test_context_globals_skip_struct_fields():
    context = "int counter = 0;\nstruct point {\n    int x;\n};\nint table[8] = {1, 2};"
    assert context_globals(context) == ['counter', 'table']


def test_source_features():
    code = "float g(float x) {\n    return x * 2.0f;\n}"
    features = compute_source_features(code, '')
    assert features == {'c_length': len(code), 'n_fun_args': 1, 'has_float': True,
                        'has_strings': False, 'has_globals': False}
    features = compute_source_features("void h(int x) {\n    counter += x;\n}", "int counter;")
    assert features['has_globals']


def test_compilation_spec_keys():
    spec = CompilationSpec.from_key('gcc:aarch64:O3:asm_text')
    assert spec.key == 'gcc:aarch64:O3:asm_text'
    assert TARGET_SPEC.key == 'clang:host:Oz:llvm_ir'
    with pytest.raises(ValueError):
        CompilationSpec('gcc', 'x86_64', 'O3', 'llvm_ir')
    with pytest.raises(ValueError):
        CompilationSpec.from_key('clang:x86_64:O3')
    with pytest.raises(ValueError):
        CompilationSpec.from_key('clang:sparc:O3:asm_text')


def test_extract_asm_function():
    asm = "\t.text\nf:\n\tmovl %edi, %eax\n\tretq\n.Lfunc_end0:\n\t.size f, .Lfunc_end0-f\ng:\n\tretq"
    assert extract_asm_function(asm, 'f') == "f:\n\tmovl %edi, %eax\n\tretq"


def test_extract_ir_function_keeps_what_the_function_needs():
    ir = "\n".join([
        'target triple = "x86_64-pc-linux-gnu"',
        '%struct.point = type { i32, i32 }',
        '@counter = dso_local global i32 0, align 4',
        '@.str = private unnamed_addr constant [3 x i8] c"hi\\00", align 1',
        'define dso_local i32 @helper(i32 noundef %0) #0 {',
        '  ret i32 %0',
        '}',
        'define internal i32 @local(i32 noundef %0) #0 {',
        '  ret i32 %0',
        '}',
        'define dso_local i32 @f(i32 noundef %0) #0 {',
        '  %2 = call i32 @helper(i32 %0)',
        '  ret i32 %2',
        '}',
        'declare i32 @puts(ptr noundef) #1',
    ])
    out = extract_ir_function(ir, 'f')
    lines = out.splitlines()
    assert '@counter = external global i32, align 4' in lines
    assert '@.str = private unnamed_addr constant [3 x i8] c"hi\\00", align 1' in lines
    assert 'declare dso_local i32 @helper(i32 noundef)' in lines
    assert 'declare i32 @puts(ptr noundef) #1' in lines
    assert not any('@local' in line for line in lines)
    assert lines.count('}') == 1


def test_extract_ir_function_keeps_reachable_internal_helpers():
    ir = "\n".join([
        '@total = internal global i32 0, align 4',
        'define internal fastcc i32 @sq(i32 noundef %0) #0 {',
        '  %2 = call fastcc i32 @twice(i32 %0)',
        '  ret i32 %2',
        '}',
        'define internal fastcc i32 @twice(i32 noundef %0) #0 {',
        '  %2 = shl i32 %0, 1',
        '  ret i32 %2',
        '}',
        'define internal i32 @unused(i32 noundef %0) #0 {',
        '  ret i32 %0',
        '}',
        'define dso_local i32 @f(i32 noundef %0) #0 {',
        '  %2 = call fastcc i32 @sq(i32 %0)',
        '  store i32 %2, ptr @total, align 4',
        '  ret i32 %2',
        '}',
    ])
    lines = extract_ir_function(ir, 'f').splitlines()
    assert '@total = internal global i32 0, align 4' in lines
    assert 'define internal fastcc i32 @sq(i32 noundef %0) #0 {' in lines
    assert 'define internal fastcc i32 @twice(i32 noundef %0) #0 {' in lines
    assert not any('@unused' in line for line in lines)
    assert lines.count('}') == 3
    # module order is preserved
    assert lines.index('define dso_local i32 @f(i32 noundef %0) #0 {') > lines.index(
        'define internal fastcc i32 @twice(i32 noundef %0) #0 {')


def _record(i, k, name=None):
    name = name or f"f{i}"
    func = SourceFunction(id=f"id{i}", c_code=f"int {name}(int x) {{ return x + {k}; }}")
    return ParallelRecord(function=func, texts={
        KEY_SPEC: f"{name}:\naddl ${k}, %edi\nmovl %edi, %eax\nretq",
        TARGET_SPEC: f"define i32 @{name}(i32 %0) {{\n  ret i32 {k}\n}}",
    })


def test_dedup_key_masks_the_function_name():
    assert compute_dedup_key("f1:\nretq", "f1") == compute_dedup_key("g:\nretq", "g")
    assert compute_dedup_key("f1:\ncall f10", "f1") != compute_dedup_key("f1:\ncall f1", "f1")


def test_split_and_dedup_leave_no_shared_keys():
    records = [_record(i, i) for i in range(20)]
    records += [_record(100 + i, i, name=f"dup{i}") for i in range(0, 20, 4)]  # planted duplicates
    split = dedup_by_assembly(split_dataset(records, (0.8, 0.1, 0.1), seed=7))
    assert len(split) == 20
    train_keys = {r.dedup_key for r in split if r.split == 'train'}
    eval_keys = {r.dedup_key for r in split if r.split != 'train'}
    assert not train_keys & eval_keys
    counts = {s: sum(1 for r in split if r.split == s) for s in ('train', 'valid', 'test')}
    assert counts == {'train': 16, 'valid': 2, 'test': 2}


def test_split_is_deterministic():
    records = [_record(i, i) for i in range(30)]
    first = [r.split for r in split_dataset(records, seed=3)]
    assert first == [r.split for r in split_dataset(records, seed=3)]


def test_missing_key_text():
    record = _record(0, 1)
    del record.texts[KEY_SPEC]
    with pytest.raises(MissingKey):
        dedup_by_assembly([record])


def test_token_length_stats(tiny_vocab):
    records = [_record(i, i) for i in range(3)]
    mean, std = token_length_stats(records, KEY_SPEC, tiny_vocab)
    assert mean > 0 and std >= 0
    with pytest.raises(EmptySelection):
        token_length_stats(records, CompilationSpec('clang', 'aarch64', 'O3', 'asm_text'), tiny_vocab)


def test_dataset_file_round_trip(tmp_path):
    records = split_dataset([_record(i, i) for i in range(5)], seed=0)
    path = tmp_path / 'dataset.jsonl'
    write_dataset(str(path), records)
    _, loaded = read_dataset(str(path))
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in records]


@pytest.mark.requires_clang
def test_compile_unit_target_ir():
    func = generate_toy_functions(1, seed=0)[0]
    ir = compile_unit(func, TARGET_SPEC)
    header, body = split_ir_header(ir)
    assert 'target triple' in header
    assert f"@{func.name}(" in normalize_ir(body)
