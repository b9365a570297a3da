"""
Unigram subword vocabulary shared by LLVM IR and every assembly dialect.

Pre-tokenisation splits on whitespace (a visible marker prefixes a piece
that followed a space, newlines are their own token) and isolates every
ASCII digit. Segmentation is Viterbi over the substring lattice; characters
the vocabulary does not know fall back to one token per UTF-8 byte, so
decode(encode(x)) == x for any text.
"""

import json
import logging
import math
import re
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor

from exceptions import CorpusTooSmall, InvalidId, VocabularyOvershoot

logger = logging.getLogger(__name__)

SPECIALS = {'pad': '<pad>', 'bos': '<s>', 'eos': '</s>', 'unk': '<unk>'}
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
BYTE_OFFSET = len(SPECIALS)
BYTE_TOKENS = [f"<0x{b:02X}>" for b in range(256)]
SPACE_MARK = '▁'
NEWLINE = '\n'
FIRST_LEARNED = BYTE_OFFSET + 256 + 2  # specials, bytes, newline, space marker

MAX_PIECE_LEN = 16
PRUNE_FRACTION = 0.2
EM_SUBITERS = 2
SEED_FACTOR = 10
ZERO_COUNT_FLOOR = 1e-2

_PRETOKEN_RE = re.compile(r'(\n)|([0-9])|( ?[^\s0-9▁]+)|( )|(▁)|(\s)')


def pretokenize(text):
    """
    Split text into (piece, raw) pairs.

    Raw pieces (tabs, carriage returns, literal marker characters, other
    whitespace) are always encoded with byte tokens.
    """
    pieces = []
    for m in _PRETOKEN_RE.finditer(text):
        if m.group(1):
            pieces.append((NEWLINE, False))
        elif m.group(2):
            pieces.append((m.group(2), False))
        elif m.group(3):
            pieces.append((m.group(3).replace(' ', SPACE_MARK), False))
        elif m.group(4):
            pieces.append((SPACE_MARK, False))
        else:
            pieces.append((m.group(0), True))
    return pieces


def _viterbi(piece, table, max_len, byte_logp, exclude=None):
    """
    Best segmentation of one piece.

    Ties on score prefer fewer tokens, then the longest leftmost token.
    Unknown characters cost one byte token per UTF-8 byte.

    Returns:
        tuple: (score, list of (token, is_byte_fallback))
    """
    n = len(piece)
    score = [0.0] * (n + 1)
    ntok = [0] * (n + 1)
    step = [None] * (n + 1)
    for i in range(n - 1, -1, -1):
        best = None
        for length in range(min(max_len, n - i), 0, -1):
            tok = piece[i:i + length]
            lp = None if tok == exclude else table.get(tok)
            if lp is None:
                if length != 1:
                    continue
                nbytes = len(tok.encode('utf-8'))
                cand = (byte_logp * nbytes + score[i + 1], nbytes + ntok[i + 1], 1, True)
            else:
                cand = (lp + score[i + length], 1 + ntok[i + length], length, False)
            if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                best = cand
        score[i], ntok[i] = best[0], best[1]
        step[i] = (best[2], best[3])
    out = []
    i = 0
    while i < n:
        length, fallback = step[i]
        out.append((piece[i:i + length], fallback))
        i += length
    return score[0], out


class Vocabulary:
    """
    Unigram vocabulary: ordered (token, log_prob) entries with dense ids.

    Layout: specials, 256 byte-fallback tokens, newline, space marker, then
    learned tokens. Merges only ever append.
    """

    def __init__(self, entries, version=1, undersized=False):
        self.entries = [(tok, float(lp)) for tok, lp in entries]
        self.version = version
        self.undersized = undersized
        self.id_of = {tok: i for i, (tok, _) in enumerate(self.entries)}
        self.specials = dict(SPECIALS)
        # lattice excludes specials and byte tokens so their spellings in text are ordinary characters
        self._table = {tok: lp for tok, lp in self.entries[BYTE_OFFSET + 256:]}
        learned = [lp for _, lp in self.entries[BYTE_OFFSET + 256:]]
        self.byte_logp = (min(learned) if learned else 0.0) - 10.0
        self.max_len = max((len(t) for t in self._table), default=1)
        self._cache = {}

    def __len__(self):
        return len(self.entries)

    def token(self, idx):
        return self.entries[idx][0]

    def prefix(self, size):
        """The vocabulary as it was before later merges appended past ``size``."""
        if size >= len(self.entries):
            return self
        return Vocabulary(self.entries[:size], version=self.version, undersized=self.undersized)

    def segment(self, piece):
        cached = self._cache.get(piece)
        if cached is None:
            cached = _viterbi(piece, self._table, self.max_len, self.byte_logp)
            self._cache[piece] = cached
        return cached

    def to_json(self):
        return json.dumps({
            'version': self.version,
            'specials': self.specials,
            'undersized': self.undersized,
            'entries': [[tok, lp] for tok, lp in self.entries],
        }, ensure_ascii=True, indent=None)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls([(tok, lp) for tok, lp in data['entries']], version=data.get('version', 1),
                   undersized=data.get('undersized', False))


def save_vocab(vocab, path):
    from utils import atomic_write_text
    atomic_write_text(path, vocab.to_json() + '\n')


def load_vocab(path):
    with open(path, 'r', encoding='utf-8') as f:
        return Vocabulary.from_json(f.read())


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def _byte_ids(text):
    return [BYTE_OFFSET + b for b in text.encode('utf-8')]


def encode(vocab, text):
    """
    Encode text into token ids (no specials added).

    Args:
        vocab (Vocabulary): Trained vocabulary
        text (str): Any text

    Returns:
        list: Token ids
    """
    ids = []
    for piece, raw in pretokenize(text):
        if raw:
            ids.extend(_byte_ids(piece))
            continue
        _, tokens = vocab.segment(piece)
        for tok, fallback in tokens:
            if fallback:
                ids.extend(_byte_ids(tok))
            else:
                ids.append(vocab.id_of[tok])
    return ids


def sequence_log_prob(vocab, text):
    """Total log-probability of the Viterbi segmentation of text."""
    total = 0.0
    for piece, raw in pretokenize(text):
        if raw:
            total += vocab.byte_logp * len(piece.encode('utf-8'))
        else:
            total += vocab.segment(piece)[0]
    return total


def decode(vocab, ids):
    """
    Invert encode. Special tokens decode to nothing.

    Raises:
        InvalidId: An id is outside the vocabulary
    """
    out = []
    pending = bytearray()
    for idx in ids:
        idx = int(idx)
        if idx < 0 or idx >= len(vocab):
            raise InvalidId(f"token id {idx} outside vocabulary of size {len(vocab)}")
        if BYTE_OFFSET <= idx < BYTE_OFFSET + 256:
            pending.append(idx - BYTE_OFFSET)
            continue
        if pending:
            out.append(pending.decode('utf-8', errors='replace'))
            pending = bytearray()
        if idx < BYTE_OFFSET:
            continue
        out.append(vocab.token(idx).replace(SPACE_MARK, ' '))
    if pending:
        out.append(pending.decode('utf-8', errors='replace'))
    return ''.join(out)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _piece_counts(corpus):
    counts = Counter()
    for text in corpus:
        for piece, raw in pretokenize(text):
            if not raw:
                counts[piece] += 1
    return counts


def _seed_table(piece_counts, target):
    """Initial log-probs: every character plus the most frequent substrings up to MAX_PIECE_LEN."""
    char_freq = Counter()
    sub_freq = Counter()
    for piece, count in piece_counts.items():
        for ch in piece:
            char_freq[ch] += count
        if piece == NEWLINE:
            continue
        for i in range(len(piece)):
            for length in range(2, min(MAX_PIECE_LEN, len(piece) - i) + 1):
                sub_freq[piece[i:i + length]] += count
    char_freq[NEWLINE] += 0
    char_freq[SPACE_MARK] += 0
    ranked = sorted(sub_freq.items(), key=lambda kv: (-kv[1] * len(kv[0]), kv[0]))
    seeds = dict(ranked[:max(target * SEED_FACTOR, 0)])
    total = sum(char_freq.values()) + sum(seeds.values())
    table = {}
    for tok, freq in list(char_freq.items()) + list(seeds.items()):
        table[tok] = math.log(max(freq, ZERO_COUNT_FLOOR) / total)
    return table, set(char_freq), len(sub_freq)


def _count_shard(args):
    pieces, table, max_len, byte_logp = args
    counts = Counter()
    for piece, count in pieces:
        _, tokens = _viterbi(piece, table, max_len, byte_logp)
        for tok, fallback in tokens:
            if not fallback:
                counts[tok] += count
    return counts


def _e_step(items, table, jobs):
    max_len = max(len(t) for t in table)
    byte_logp = min(table.values()) - 10.0
    if jobs > 1 and len(items) > 1000:
        shards = [items[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_count_shard, [(s, table, max_len, byte_logp) for s in shards]))
        counts = Counter()
        for part in parts:
            counts.update(part)
        return counts
    return _count_shard((items, table, max_len, byte_logp))


def _m_step(table, counts):
    total = sum(counts.values()) or 1
    return {tok: math.log(max(counts.get(tok, 0), ZERO_COUNT_FLOOR) / total) for tok in table}


def _prune(table, counts, required, target):
    candidates = sorted(t for t in table if t not in required)
    if not candidates:
        return table
    max_len = max(len(t) for t in table)
    byte_logp = min(table.values()) - 10.0
    losses = []
    for tok in candidates:
        freq = counts.get(tok, 0)
        if freq == 0:
            loss = 0.0
        else:
            alt, _ = _viterbi(tok, table, max_len, byte_logp, exclude=tok)
            loss = freq * (table[tok] - alt)
        losses.append((loss, tok))
    losses.sort()
    n_remove = min(max(1, int(len(candidates) * PRUNE_FRACTION)), len(table) - target)
    pruned = dict(table)
    for _, tok in losses[:n_remove]:
        del pruned[tok]
    return pruned


def _finalise(table, version=1, undersized=False):
    learned = sorted(((t, lp) for t, lp in table.items() if t not in (NEWLINE, SPACE_MARK)),
                     key=lambda kv: (-kv[1], kv[0]))
    floor = (min(table.values()) if table else 0.0) - 10.0
    entries = [(tok, 0.0) for tok in SPECIALS.values()]
    entries += [(tok, floor) for tok in BYTE_TOKENS]
    entries += [(NEWLINE, table.get(NEWLINE, floor)), (SPACE_MARK, table.get(SPACE_MARK, floor))]
    entries += learned
    return Vocabulary(entries, version=version, undersized=undersized)


def seed_vocabulary(corpus, vocab_size):
    """The vocabulary training starts from (before any EM or pruning)."""
    table, _, _ = _seed_table(_piece_counts(corpus), max(vocab_size - FIRST_LEARNED, 0))
    return _finalise(table)


def train_unigram(corpus, vocab_size=16000, jobs=1):
    """
    Train a unigram-LM vocabulary.

    Seeds the table with every character and frequent substrings, then
    alternates Viterbi (E) and count re-estimation (M) steps, pruning the 20%
    of prunable tokens whose removal costs the least likelihood per round
    until the vocabulary fits.

    Args:
        corpus (list): Texts (IR and assembly of every dialect)
        vocab_size (int): Target size including specials and byte tokens
        jobs (int): Worker processes for the E-step

    Returns:
        Vocabulary: Trained vocabulary (``undersized`` set when the corpus cannot fill it)
    """
    if not corpus:
        raise ValueError("cannot train a vocabulary on an empty corpus")
    if vocab_size < BYTE_OFFSET + 256:
        raise ValueError(f"vocab_size must be at least {BYTE_OFFSET + 256}")
    piece_counts = _piece_counts(corpus)
    # newline and marker live in the table too; required characters are never pruned
    target = vocab_size - (BYTE_OFFSET + 256)
    table, required, n_distinct = _seed_table(piece_counts, target)
    undersized = len(required) + n_distinct < target
    if undersized:
        warnings.warn(f"Corpus has only {len(required) + n_distinct} distinct tokens for a "
                      f"vocabulary of {vocab_size}; returning the maximal vocabulary", CorpusTooSmall)
        logger.warning("Vocabulary undersized for requested size %d", vocab_size)

    items = sorted(piece_counts.items())
    rounds = 0
    while True:
        for _ in range(EM_SUBITERS):
            counts = _e_step(items, table, jobs)
            table = _m_step(table, counts)
        if len(table) <= target:
            break
        pruned = _prune(table, counts, required, target)
        if len(pruned) == len(table):
            break
        table = pruned
        rounds += 1
        logger.debug(f"Unigram round {rounds}: {len(table)} tokens")
    vocab = _finalise(table, undersized=undersized)
    if len(vocab) > vocab_size:
        # newline, space marker and every corpus character are never pruned
        warnings.warn(f"Vocabulary has {len(vocab)} tokens, over the requested {vocab_size}: the fixed layout "
                      f"and the corpus characters need that many", VocabularyOvershoot)
        logger.warning(f"Vocabulary overshoots requested size {vocab_size} with {len(vocab)} tokens")
    logger.info(f"Trained unigram vocabulary: {len(vocab)} tokens after {rounds} pruning rounds")
    return vocab


def merge_vocab(base, new_corpus, vocab_size=None, jobs=1):
    """
    Train a vocabulary on a new corpus and append the tokens base lacks.

    Base ids never change; the returned id set marks the appended rows.

    Returns:
        tuple: (merged Vocabulary, set of new token ids)
    """
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', CorpusTooSmall)
        warnings.simplefilter('ignore', VocabularyOvershoot)
        candidate = train_unigram(new_corpus, vocab_size or len(base), jobs=jobs)
    appended = [(tok, lp) for tok, lp in candidate.entries[FIRST_LEARNED:] if tok not in base.id_of]
    merged = Vocabulary(base.entries + appended, version=base.version + 1, undersized=base.undersized)
    new_ids = set(range(len(base), len(merged)))
    logger.info(f"Merged {len(new_ids)} new tokens into vocabulary v{merged.version}")
    return merged, new_ids
