"""
Text canonicalisation for assembly and LLVM IR.

Everything here is line/token-level rewriting of compiler output; nothing
parses IR. All functions are pure and idempotent.
"""

import re
from dataclasses import dataclass, field, asdict

DEFAULT_DIRECTIVES = ['.cfi_', '.ident', '.file', '.loc', '.addrsig']


@dataclass
class NormalizationProfile:
    strip_comments: bool = True
    strip_directives: list = field(default_factory=lambda: list(DEFAULT_DIRECTIVES))
    collapse_whitespace: bool = True
    struct_rename_prefix: str = 'S'

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))


DEFAULT_PROFILE = NormalizationProfile()


def _quote_spans(line):
    """Yield (index, char, inside_quotes) for every character of a line."""
    inside = False
    escaped = False
    for i, ch in enumerate(line):
        if inside:
            yield i, ch, True
            if escaped:
                escaped = False
            elif ch == '\\':
                escaped = True
            elif ch == '"':
                inside = False
        else:
            if ch == '"':
                yield i, ch, True
                inside = True
            else:
                yield i, ch, False


def _asm_comment_start(line):
    """Position where an assembly comment begins, or -1.

    `//` always starts a comment. `#` and `;` start one at the beginning of
    the line or when surrounded by whitespace, so AArch64 immediates such as
    `#1` survive.
    """
    stripped_at = len(line) - len(line.lstrip())
    for i, ch, quoted in _quote_spans(line):
        if quoted:
            continue
        if ch == '/' and line[i + 1:i + 2] == '/':
            return i
        if ch in '#;':
            if i == stripped_at:
                return i
            before = line[i - 1] if i > 0 else ' '
            after = line[i + 1] if i + 1 < len(line) else ' '
            if before.isspace() and after.isspace():
                return i
    return -1


def _collapse_spaces(line):
    out = []
    previous_space = False
    for _, ch, quoted in _quote_spans(line):
        if not quoted and ch.isspace():
            if not previous_space:
                out.append(' ')
            previous_space = True
        else:
            out.append(ch)
            previous_space = False
    return ''.join(out)


def _is_stripped_directive(line, prefixes):
    token = line.split(None, 1)[0] if line else ''
    for prefix in prefixes:
        if prefix.endswith('_'):
            if token.startswith(prefix):
                return True
        elif token == prefix:
            return True
    return False


def _collapse_blank_runs(lines):
    out = []
    for line in lines:
        if not line and (not out or not out[-1]):
            continue
        out.append(line)
    while out and not out[-1]:
        out.pop()
    return out


def normalize_asm(asm_text, profile=None):
    """
    Canonicalise compiler-emitted textual assembly.

    Removes comments and noise directives, maps tabs to spaces, trims every
    line and collapses runs of blank lines. Lines that only held a comment
    disappear entirely.

    Args:
        asm_text (str): Assembly as printed by `cc -S`
        profile (NormalizationProfile): Rules to apply (default profile if None)

    Returns:
        str: Normalised assembly
    """
    profile = profile or DEFAULT_PROFILE
    lines = []
    for raw in asm_text.splitlines():
        line = raw.replace('\t', ' ')
        had_content = bool(line.strip())
        if profile.strip_comments:
            pos = _asm_comment_start(line)
            if pos >= 0:
                line = line[:pos]
        line = line.strip()
        if profile.collapse_whitespace:
            line = _collapse_spaces(line)
        if had_content and not line:
            continue
        if line and _is_stripped_directive(line, profile.strip_directives):
            continue
        lines.append(line)
    return '\n'.join(_collapse_blank_runs(lines))


_STRUCT_RE = re.compile(r'%"(?:struct|union)\.[^"]*"|%(?:struct|union)\.[A-Za-z_$.][\w.$-]*')


def normalize_struct_names(ir_text, prefix='S'):
    """
    Rename named struct/union types to `%struct.<prefix><k>` by order of first
    appearance; anonymous literal struct types are left alone.
    """
    mapping = {}

    def rename(match):
        name = match.group(0)
        if name not in mapping:
            mapping[name] = f"%struct.{prefix}{len(mapping)}"
        return mapping[name]

    return _STRUCT_RE.sub(rename, ir_text)


_HEADER_RE = re.compile(r'^\s*target\s+(datalayout|triple)\s*=')


def split_ir_header(ir_text):
    """
    Separate the target datalayout/triple lines from an IR module.

    Returns:
        tuple: (header, body) where header holds the target lines joined by newlines
    """
    header, body = [], []
    for line in ir_text.splitlines():
        (header if _HEADER_RE.match(line) else body).append(line)
    return '\n'.join(header), '\n'.join(body)


_LABEL_RE = re.compile(r'^(?:[\w.$-]+|"[^"]*"):')
_OLD_LABEL_RE = re.compile(r'^\s*;\s*<label>:')
_METADATA_ATTACHMENT_RE = re.compile(r',\s*![\w.]+\s+!\d+')
_ATTRIBUTE_REF_RE = re.compile(r'\s+#\d+(?=\s|$|,)')


def _ir_comment_start(line):
    for i, ch, quoted in _quote_spans(line):
        if not quoted and ch == ';':
            return i
    return -1


def normalize_ir(ir_text, profile=None):
    """
    Canonicalise textual LLVM IR.

    Struct names are normalised; comment lines, attribute groups, metadata and
    the target datalayout/triple lines are removed (the header is kept by the
    caller via split_ir_header so verification can re-materialise a module).
    Trailing comments survive only on block labels.

    Args:
        ir_text (str): Textual IR
        profile (NormalizationProfile): Rules to apply (default profile if None)

    Returns:
        str: Normalised IR
    """
    profile = profile or DEFAULT_PROFILE
    lines = []
    for raw in ir_text.splitlines():
        line = raw.rstrip()
        stripped = line.strip()
        if _HEADER_RE.match(line):
            continue
        if stripped.startswith('attributes #') or stripped.startswith('!') \
                or stripped.startswith('source_filename'):
            continue
        if stripped.startswith(';'):
            if _OLD_LABEL_RE.match(line):
                lines.append(stripped if profile.collapse_whitespace else line)
            continue
        if profile.strip_comments:
            pos = _ir_comment_start(line)
            if pos >= 0:
                code, comment = line[:pos].rstrip(), line[pos:]
                if _LABEL_RE.match(code):
                    if profile.collapse_whitespace:
                        comment = ' '.join(comment.split())
                    line = f"{code} {comment}"
                else:
                    line = code
        if 'c"' not in line:
            line = _METADATA_ATTACHMENT_RE.sub('', line)
            line = _ATTRIBUTE_REF_RE.sub('', line)
        lines.append(line.rstrip())
    text = '\n'.join(_collapse_blank_runs(lines))
    while text.startswith('\n'):
        text = text[1:]
    return normalize_struct_names(text, profile.struct_rename_prefix)
