"""
Encoder-decoder Transformer for lifting assembly to LLVM IR.

BART-style shape: learned positional embeddings, a layer norm on the
embedded input, post-layer-norm blocks with GELU feed-forward layers and a
single token-embedding table tied between every encoder, the decoder input
and the output projection. One shared decoder serves any number of named
per-ISA encoders.

Usage:
    model = LifterModel(ModelConfig(vocab_size=len(vocab)), encoder_names=['x86_64'])
    logits, nll = forward(model, 'x86_64', src_ids, tgt_ids)
"""

import math
from dataclasses import dataclass, asdict, replace

import torch
import torch.nn.functional as F
from torch import nn

from exceptions import SequenceTooLong, UnknownEncoder
from tokenizer import BOS_ID, EOS_ID, PAD_ID


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_dim: int = 256
    max_positions: int = 2048
    dropout: float = 0.1
    seed: int = 0
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    def to_dict(self):
        return asdict(self)


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over h heads.

    Args:
        d_model (int): Model width
        n_heads (int): Number of heads
        dropout (float): Dropout on attention weights
    """

    def __init__(self, d_model, n_heads, dropout):
        super().__init__()
        self.n_heads = n_heads
        self.d_k = d_model // n_heads
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, q, k, v, mask):
        """
        Args:
            q (torch.Tensor): (batch, q_len, d_model)
            k, v (torch.Tensor): (batch, k_len, d_model)
            mask (torch.Tensor): Boolean, broadcastable to (batch, heads, q_len, k_len); True = attend

        Returns:
            torch.Tensor: (batch, q_len, d_model)
        """
        b, q_len, _ = q.shape
        k_len = k.shape[1]
        query = self.w_q(q).view(b, q_len, self.n_heads, self.d_k).transpose(1, 2)
        key = self.w_k(k).view(b, k_len, self.n_heads, self.d_k).transpose(1, 2)
        value = self.w_v(v).view(b, k_len, self.n_heads, self.d_k).transpose(1, 2)

        scores = (query @ key.transpose(-2, -1)) / math.sqrt(self.d_k)
        scores = scores.masked_fill(~mask, float('-inf'))
        weights = self.dropout(scores.softmax(dim=-1))
        x = (weights @ value).transpose(1, 2).contiguous().view(b, q_len, self.n_heads * self.d_k)
        return self.w_o(x)


class FeedForward(nn.Module):
    def __init__(self, d_model, ffn_dim, dropout):
        super().__init__()
        self.fc1 = nn.Linear(d_model, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.dropout(F.gelu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.self_attn_norm = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.ffn_norm = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        x = self.self_attn_norm(x + self.dropout(self.self_attn(x, x, x, mask)))
        return self.ffn_norm(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.self_attn_norm = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.cross_attn_norm = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.ffn_norm = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        x = self.self_attn_norm(x + self.dropout(self.self_attn(x, x, x, self_mask)))
        x = self.cross_attn_norm(x + self.dropout(self.cross_attn(x, memory, memory, cross_mask)))
        return self.ffn_norm(x + self.dropout(self.ffn(x)))


class EncoderStack(nn.Module):
    """Per-ISA encoder: its own positional table, embedding norm and layers."""

    def __init__(self, cfg):
        super().__init__()
        self.positions = nn.Embedding(cfg.max_positions, cfg.d_model)
        self.embed_norm = nn.LayerNorm(cfg.d_model)
        self.layers = nn.ModuleList([EncoderLayer(cfg) for _ in range(cfg.n_enc_layers)])
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, tokens_embedded, mask):
        positions = torch.arange(tokens_embedded.shape[1], device=tokens_embedded.device)
        x = self.dropout(self.embed_norm(tokens_embedded + self.positions(positions)))
        for layer in self.layers:
            x = layer(x, mask)
        return x


class DecoderStack(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.positions = nn.Embedding(cfg.max_positions, cfg.d_model)
        self.embed_norm = nn.LayerNorm(cfg.d_model)
        self.layers = nn.ModuleList([DecoderLayer(cfg) for _ in range(cfg.n_dec_layers)])
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, tokens_embedded, memory, self_mask, cross_mask):
        positions = torch.arange(tokens_embedded.shape[1], device=tokens_embedded.device)
        x = self.dropout(self.embed_norm(tokens_embedded + self.positions(positions)))
        for layer in self.layers:
            x = layer(x, memory, self_mask, cross_mask)
        return x


class LifterModel(nn.Module):
    """
    Shared decoder with named encoders and a tied embedding table.

    Parameter names follow the module tree: ``embeddings.weight``,
    ``encoders.<isa>.*`` and ``decoder.*``.
    """

    def __init__(self, cfg, encoder_names=('x86_64',)):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.embeddings = nn.Embedding(cfg.vocab_size, cfg.d_model, padding_idx=None)
        self.encoders = nn.ModuleDict({name: EncoderStack(cfg) for name in encoder_names})
        # decoding for an encoder only ranges over the vocabulary it was trained with
        self.encoder_vocab = {name: cfg.vocab_size for name in encoder_names}
        self.decoder = DecoderStack(cfg)
        self.apply(self._init_weights)

    def _init_weights(self, module):
        std = self.cfg.init_std
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, mean=0.0, std=std)
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, mean=0.0, std=std)

    @property
    def encoder_names(self):
        return list(self.encoders.keys())

    def encoder(self, encoder_id):
        if encoder_id not in self.encoders:
            raise UnknownEncoder(f"no encoder named '{encoder_id}' (have {self.encoder_names})")
        return self.encoders[encoder_id]

    def encode(self, encoder_id, src):
        encoder = self.encoder(encoder_id)
        src_mask = (src != PAD_ID)[:, None, None, :]
        return encoder(self.embeddings(src), src_mask), src_mask

    def decode(self, tgt_in, memory, src_mask):
        t = tgt_in.shape[1]
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool, device=tgt_in.device))
        self_mask = causal[None, None, :, :] & (tgt_in != PAD_ID)[:, None, None, :] | \
            torch.eye(t, dtype=torch.bool, device=tgt_in.device)[None, None]
        hidden = self.decoder(self.embeddings(tgt_in), memory, self_mask, src_mask)
        return hidden @ self.embeddings.weight.t()

    def parameter_counts(self):
        """Trainable element counts per component."""
        counts = {'embeddings': self.embeddings.weight.numel(),
                  'decoder': sum(p.numel() for p in self.decoder.parameters())}
        for name, enc in self.encoders.items():
            counts[f"encoder:{name}"] = sum(p.numel() for p in enc.parameters())
        counts['total'] = sum(p.numel() for p in self.parameters())
        return counts


def pad_batch(ids, device=None):
    if isinstance(ids, torch.Tensor):
        return ids if ids.dim() == 2 else ids.unsqueeze(0)
    if ids and isinstance(ids[0], (list, tuple)):
        width = max(len(s) for s in ids)
        return torch.tensor([list(s) + [PAD_ID] * (width - len(s)) for s in ids], dtype=torch.long, device=device)
    return torch.tensor([list(ids)], dtype=torch.long, device=device)


def check_length(model, length, what):
    if length > model.cfg.max_positions:
        raise SequenceTooLong(f"{what} has {length} tokens; max_positions is {model.cfg.max_positions}")


def forward(model, encoder_id, src_ids, tgt_ids):
    """
    Teacher-forced forward pass.

    Args:
        model (LifterModel): Parameters
        encoder_id (str): Encoder to use
        src_ids: Source ids, a list, list of lists or (batch, len) tensor
        tgt_ids: Target ids wrapped in bos/eos, same forms

    Returns:
        tuple: (logits (batch, len-1, vocab), summed nll over non-pad target positions)
    """
    model.encoder(encoder_id)
    src = pad_batch(src_ids)
    tgt = pad_batch(tgt_ids)
    check_length(model, src.shape[1], 'source')
    check_length(model, tgt.shape[1], 'target')
    memory, src_mask = model.encode(encoder_id, src)
    logits = model.decode(tgt[:, :-1], memory, src_mask)
    labels = tgt[:, 1:]
    nll = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1),
                          ignore_index=PAD_ID, reduction='sum')
    return logits, nll


def resize_embeddings(model, new_size):
    """Append freshly initialised embedding rows; existing rows are copied bit-for-bit."""
    old = model.embeddings.weight.data
    if new_size <= old.shape[0]:
        return model
    generator = torch.Generator().manual_seed(model.cfg.seed + new_size)
    extra = torch.randn(new_size - old.shape[0], old.shape[1], generator=generator, dtype=old.dtype)
    model.embeddings = nn.Embedding(new_size, old.shape[1])
    model.embeddings.weight.data = torch.cat([old, extra * model.cfg.init_std]).to(old.dtype)
    model.cfg = replace(model.cfg, vocab_size=new_size)
    return model


@torch.no_grad()
def greedy_decode(model, encoder_id, src_ids, max_len=256, alpha=1.0):
    """Argmax decoding; returns (ids without bos/eos, length-normalised score)."""
    model.encoder(encoder_id)
    src = pad_batch(src_ids)
    check_length(model, src.shape[1], 'source')
    memory, src_mask = model.encode(encoder_id, src)
    max_len = min(max_len, model.cfg.max_positions - 1)
    limit = model.encoder_vocab.get(encoder_id, model.cfg.vocab_size)
    seq = [BOS_ID]
    total = 0.0
    for _ in range(max_len):
        logits = model.decode(torch.tensor([seq], dtype=torch.long), memory, src_mask)
        logp = F.log_softmax(logits[0, -1, :limit], dim=-1)
        token = int(torch.argmax(logp))
        total += float(logp[token])
        seq.append(token)
        if token == EOS_ID:
            break
    out = seq[1:]
    length = len(out)
    if out and out[-1] == EOS_ID:
        out = out[:-1]
    return out, total / (max(length, 1) ** alpha)


@torch.no_grad()
def beam_search(model, encoder_id, src_ids, beam=5, max_len=256, alpha=1.0):
    """
    Length-normalised beam search.

    Candidates are ranked by cumulative log-probability with ties broken by
    lower beam index then lower token id; finished hypotheses are scored as
    sum log-prob / length**alpha (length counts the eos token).

    Returns:
        list: Up to ``beam`` (ids without bos/eos, score) pairs, best first
    """
    model.encoder(encoder_id)
    src = pad_batch(src_ids)
    check_length(model, src.shape[1], 'source')
    memory, src_mask = model.encode(encoder_id, src)
    max_len = min(max_len, model.cfg.max_positions - 1)
    limit = model.encoder_vocab.get(encoder_id, model.cfg.vocab_size)
    alive = [([BOS_ID], 0.0)]
    finished = []
    for _ in range(max_len):
        prefixes = torch.tensor([seq for seq, _ in alive], dtype=torch.long)
        n = len(alive)
        logits = model.decode(prefixes, memory.expand(n, -1, -1), src_mask.expand(n, -1, -1, -1))
        logp = F.log_softmax(logits[:, -1, :limit], dim=-1)
        cumulative = torch.tensor([s for _, s in alive], dtype=logp.dtype)[:, None] + logp
        flat = cumulative.reshape(-1)
        order = torch.sort(-flat, stable=True).indices[:2 * beam]
        vocab = logp.shape[1]
        next_alive = []
        for flat_idx in order.tolist():
            row, token = divmod(flat_idx, vocab)
            seq, _ = alive[row]
            score = float(flat[flat_idx])
            if token == EOS_ID:
                if len(finished) < beam:
                    length = len(seq)
                    finished.append((seq[1:], score / (length ** alpha)))
            elif len(next_alive) < beam:
                next_alive.append((seq + [token], score))
            if len(next_alive) >= beam or len(finished) >= beam:
                break
        if len(finished) >= beam or not next_alive:
            break
        alive = next_alive
    else:
        if not finished:
            finished = [(seq[1:], score / (max(len(seq) - 1, 1) ** alpha)) for seq, score in alive]
    finished.sort(key=lambda h: -h[1])
    return finished[:beam]
