"""One attention-GRU decoder serving both reading directions.

A single set of attention, embedding, GRU and projection weights decodes
both left-to-right and right-to-left; the only per-direction parameters
are two scalars, one per direction, broadcast across the embedding and
added to the previous-symbol embedding.  Training weights the two
directional teacher-forced losses; inference runs beam search in both
directions and keeps the higher-scoring hypothesis.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .autodiff import (
    ParameterStore,
    ShapeError,
    Tensor,
    concat,
    cross_entropy,
    embedding_lookup,
    gru_cell,
    linear,
    log_softmax_data,
    no_grad,
    softmax,
    tanh,
    uniform_init,
)

MAX_TEXT_LEN = 25

EOS_CHAR = "\x03"
START_CHAR = "\x02"


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class VocabularyError(ValueError):
    """Raised for symbols or sequences outside the vocabulary contract."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered symbol set with reserved EOS (0) and START (1) entries."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise VocabularyError("vocabulary symbols must be unique")
        if EOS_CHAR in self.symbols or START_CHAR in self.symbols:
            raise VocabularyError("EOS/START are reserved non-printable markers")

    @classmethod
    def full_scale(cls) -> "Vocabulary":
        """10 digits, 26 lower-case letters and the 32 ASCII punctuations."""
        return cls(tuple(string.digits + string.ascii_lowercase + string.punctuation))

    @classmethod
    def toy(cls) -> "Vocabulary":
        """Desk-scale set: 10 digits plus six letters."""
        return cls(tuple(string.digits + "abcdef"))

    @property
    def size(self) -> int:
        return len(self.symbols) + 2

    @property
    def eos(self) -> int:
        return 0

    @property
    def start(self) -> int:
        return 1

    def index(self, ch: str) -> int:
        try:
            return self.symbols.index(ch) + 2
        except ValueError:
            raise VocabularyError(f"symbol {ch!r} not in vocabulary") from None

    def char(self, idx: int) -> str:
        if idx == self.eos:
            return EOS_CHAR
        if idx == self.start:
            return START_CHAR
        if 2 <= idx < self.size:
            return self.symbols[idx - 2]
        raise VocabularyError(f"index {idx} out of range for vocabulary of size {self.size}")

    def encode(self, text: str) -> list[int]:
        return [self.index(ch) for ch in text]

    def decode(self, indices) -> str:
        return "".join(self.symbols[i - 2] for i in indices if i >= 2)


@dataclass
class Hypothesis:
    """A partial decode: tokens, cumulative log-prob and recurrent state."""

    tokens: tuple[int, ...]
    logp: float
    state: np.ndarray
    direction: Direction
    steps: int = 0
    finished: bool = False

    @property
    def norm_score(self) -> float:
        return self.logp / max(self.steps, 1)


@dataclass(frozen=True)
class DecoderConfig:
    feature_dim: int
    hidden: int = 256
    attn_units: int = 256
    embed_dim: int = 512


class BidiDecoder:
    """Shared-parameter bidirectional attention decoder."""

    def __init__(
        self,
        cfg: DecoderConfig,
        vocab: Vocabulary,
        store: ParameterStore,
        rng: np.random.Generator,
        prefix: str = "decoder",
    ):
        self.cfg = cfg
        self.vocab = vocab
        self.store = store
        self.prefix = prefix
        c, p = cfg, prefix
        self.att_w = store.add(f"{p}.att.w", uniform_init(rng, (c.attn_units,), fan_in=c.attn_units, gain=4.0))
        self.att_ws = store.add(f"{p}.att.w_state", uniform_init(rng, (c.attn_units, c.hidden), fan_in=c.hidden, gain=4.0))
        self.att_vf = store.add(f"{p}.att.v_feat", uniform_init(rng, (c.attn_units, c.feature_dim), fan_in=c.feature_dim, gain=4.0))
        self.att_b = store.add(f"{p}.att.b", np.zeros(c.attn_units))
        self.embed = store.add(f"{p}.embed.table", uniform_init(rng, (vocab.size, c.embed_dim), fan_in=c.embed_dim))
        # one learned scalar per direction, broadcast across the embedding
        self.dir_fwd = store.add(f"{p}.direction.forward", np.array([1.0]))
        self.dir_bwd = store.add(f"{p}.direction.backward", np.array([-1.0]))
        gin = c.feature_dim + c.embed_dim
        self.gru_w_ih = store.add(f"{p}.gru.w_ih", uniform_init(rng, (3 * c.hidden, gin), fan_in=gin))
        self.gru_w_hh = store.add(f"{p}.gru.w_hh", uniform_init(rng, (3 * c.hidden, c.hidden), fan_in=c.hidden))
        self.gru_b = store.add(f"{p}.gru.b", np.zeros(3 * c.hidden))
        self.out_w = store.add(f"{p}.out.weight", uniform_init(rng, (vocab.size, c.hidden), fan_in=c.hidden))
        self.out_b = store.add(f"{p}.out.bias", np.zeros(vocab.size))

    # ------------------------------------------------------------------
    def direction_scalar(self, direction: Direction) -> Tensor:
        return self.dir_fwd if direction is Direction.FORWARD else self.dir_bwd

    def feature_projection(self, h: Tensor) -> Tensor:
        """Per-feature attention projection, computed once per sequence."""
        b, l, d = h.data.shape
        return linear(h.reshape(b * l, d), self.att_vf)

    def attend(self, s_prev: Tensor, h: Tensor, hp: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Attention context and weights for a batch of states.

        ``s_prev`` is (B, H), ``h`` is (B, L, D); returns the context
        (B, D) and the weights (B, L), which sum to 1 along L.
        """
        if h.data.ndim != 3:
            raise ShapeError(f"feature sequence must be (B, L, D), got {h.shape}")
        b, l, d = h.data.shape
        a = self.cfg.attn_units
        if hp is None:
            hp = self.feature_projection(h)
        sp = linear(s_prev, self.att_ws).reshape(b, 1, a)
        e = tanh(sp + hp.reshape(b, l, a) + self.att_b)
        scores = (e.reshape(b * l, a) @ self.att_w.reshape(a, 1)).reshape(b, l)
        alpha = softmax(scores, axis=1)
        ctx = (alpha.reshape(b, l, 1) * h).sum(axis=1)
        return ctx, alpha

    def decode_step(
        self,
        s_prev: Tensor,
        y_prev: np.ndarray,
        direction: Direction,
        h: Tensor,
        hp: Tensor | None = None,
    ) -> tuple[Tensor, Tensor]:
        """One decoding step: returns (logits (B, V), next state (B, H))."""
        ctx, _ = self.attend(s_prev, h, hp)
        emb = embedding_lookup(self.embed, np.asarray(y_prev)) + self.direction_scalar(direction)
        gin = concat([ctx, emb], axis=1)
        s_t = gru_cell(gin, s_prev, self.gru_w_ih, self.gru_w_hh, self.gru_b)
        logits = linear(s_t, self.out_w, self.out_b)
        return logits, s_t

    # ------------------------------------------------------------------
    def _as_token_lists(self, targets) -> list[list[int]]:
        if isinstance(targets, (str, bytes)) or (targets and isinstance(targets[0], int)):
            targets = [targets]
        out = []
        for t in targets:
            tokens = self.vocab.encode(t) if isinstance(t, str) else list(t)
            if not tokens:
                raise VocabularyError("target sequence must be non-empty")
            if len(tokens) > MAX_TEXT_LEN:
                raise VocabularyError(f"target length {len(tokens)} exceeds max {MAX_TEXT_LEN}")
            out.append(tokens)
        return out

    def _directional_ce(self, h: Tensor, token_lists: list[list[int]], direction: Direction) -> Tensor:
        """Mean-over-steps, mean-over-batch cross-entropy in one direction.

        Backward decoding consumes the reversed target; EOS is appended
        after any reversal.
        """
        bsz = h.data.shape[0]
        if len(token_lists) != bsz:
            raise ShapeError(f"{len(token_lists)} targets for feature batch of {bsz}")
        eos, start = self.vocab.eos, self.vocab.start
        seqs = []
        for tokens in token_lists:
            ordered = list(reversed(tokens)) if direction is Direction.BACKWARD else list(tokens)
            seqs.append(ordered + [eos])
        tmax = max(len(s) for s in seqs)
        y_in = np.full((bsz, tmax), eos, dtype=np.int64)
        tgt = np.full((bsz, tmax), eos, dtype=np.int64)
        wts = np.zeros((bsz, tmax))
        for i, s in enumerate(seqs):
            y_in[i, 0] = start
            y_in[i, 1 : len(s)] = s[:-1]
            tgt[i, : len(s)] = s
            wts[i, : len(s)] = 1.0 / len(s)

        hp = self.feature_projection(h)
        s_t = Tensor(np.zeros((bsz, self.cfg.hidden)))
        total = None
        for t in range(tmax):
            logits, s_t = self.decode_step(s_t, y_in[:, t], direction, h, hp)
            step = (cross_entropy(logits, tgt[:, t]) * Tensor(wts[:, t])).sum()
            total = step if total is None else total + step
        return total * (1.0 / bsz)

    def teacher_forced_loss(self, h: Tensor, targets, lam: float = 0.7) -> Tensor:
        """Weighted bidirectional loss: lam * forward + (1 - lam) * backward."""
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"loss weight must be in [0, 1], got {lam}")
        token_lists = self._as_token_lists(targets)
        l_f = self._directional_ce(h, token_lists, Direction.FORWARD)
        l_b = self._directional_ce(h, token_lists, Direction.BACKWARD)
        return l_f * lam + l_b * (1.0 - lam)

    def directional_logits(self, h: Tensor, target, direction: Direction) -> list[np.ndarray]:
        """Per-step logits of the teacher-forced pass for one sample.

        Matches the loss path: the backward direction decodes the
        reversed target.  ``h`` is (1, L, D).
        """
        tokens = self._as_token_lists(target)[0]
        ordered = list(reversed(tokens)) if direction is Direction.BACKWARD else list(tokens)
        seq = ordered + [self.vocab.eos]
        hp = self.feature_projection(h)
        s_t = Tensor(np.zeros((1, self.cfg.hidden)))
        y_prev = self.vocab.start
        outs = []
        for t, _tok in enumerate(seq):
            logits, s_t = self.decode_step(s_t, np.array([y_prev]), direction, h, hp)
            outs.append(logits.data[0].copy())
            y_prev = seq[t]
        return outs

    # ------------------------------------------------------------------
    def beam_search(
        self, h: Tensor, direction: Direction, k: int, max_len: int = MAX_TEXT_LEN
    ) -> list[Hypothesis]:
        """Length-bounded beam search over one feature sequence (B = 1).

        Each live hypothesis expands over the full vocabulary; the top k
        by cumulative log-prob survive, EOS extensions retire into the
        result pool.  The returned pool (finished plus cutoff survivors)
        is sorted by length-normalized log-prob with lexicographic token
        order breaking ties.
        """
        if k < 1:
            raise ValueError("beam width must be >= 1")
        if h.data.shape[0] != 1:
            raise ShapeError("beam_search decodes one sample at a time")
        vsize = self.vocab.size
        eos, start = self.vocab.eos, self.vocab.start
        hdim = self.cfg.hidden
        with no_grad():
            hp = self.feature_projection(h)
            live = [Hypothesis((), 0.0, np.zeros(hdim), direction)]
            pool: list[Hypothesis] = []
            for _ in range(max_len):
                if not live:
                    break
                n = len(live)
                s_prev = Tensor(np.stack([hy.state for hy in live]))
                y_prev = np.array([hy.tokens[-1] if hy.tokens else start for hy in live])
                h_rep = Tensor(np.repeat(h.data, n, axis=0))
                hp_rep = Tensor(np.tile(hp.data, (n, 1)))
                logits, s_t = self.decode_step(s_prev, y_prev, direction, h_rep, hp_rep)
                logp = log_softmax_data(logits.data, axis=1)
                candidates = []
                for i, hy in enumerate(live):
                    for v in range(vsize):
                        candidates.append((hy.logp + logp[i, v], i, v))
                candidates.sort(key=lambda c: (-c[0], live[c[1]].tokens + (c[2],)))
                live_next = []
                for score, i, v in candidates[:k]:
                    hy = live[i]
                    if v == eos:
                        pool.append(
                            Hypothesis(hy.tokens, score, s_t.data[i].copy(), direction, hy.steps + 1, True)
                        )
                    else:
                        live_next.append(
                            Hypothesis(hy.tokens + (v,), score, s_t.data[i].copy(), direction, hy.steps + 1)
                        )
                live = live_next
            pool.extend(live)
        pool.sort(key=lambda hy: (-hy.norm_score, hy.tokens))
        return pool

    def recognize(self, h: Tensor, k: int = 5, max_len: int = MAX_TEXT_LEN) -> str:
        """Decode both directions and keep the better-scoring string.

        The backward winner's tokens are reversed into reading order; a
        score tie resolves to the forward result.
        """
        fwd = self.beam_search(h, Direction.FORWARD, k, max_len)
        bwd = self.beam_search(h, Direction.BACKWARD, k, max_len)
        best_f, best_b = fwd[0], bwd[0]
        if best_b.norm_score > best_f.norm_score:
            return self.vocab.decode(tuple(reversed(best_b.tokens)))
        return self.vocab.decode(best_f.tokens)

    # ------------------------------------------------------------------
    def census(self) -> dict[str, int]:
        """Scalar counts split into shared and per-direction parameters."""
        direction = 0
        shared = 0
        for name, t in self.store.items():
            if not name.startswith(self.prefix + "."):
                continue
            if name.startswith(f"{self.prefix}.direction."):
                direction += t.data.size
            else:
                shared += t.data.size
        return {"shared": shared, "direction": direction, "total": shared + direction}


def two_decoder_baseline_scalars(cfg: DecoderConfig, vocab: Vocabulary) -> int:
    """Parameter count of a two-independent-decoder baseline.

    Builds two throwaway single-direction decoders (no direction
    embedding) and sums their scalars; used only for the sharing census.
    """
    total = 0
    for _ in range(2):
        store = ParameterStore()
        dec = BidiDecoder(cfg, vocab, store, np.random.default_rng(0))
        total += dec.census()["shared"]
    return total
