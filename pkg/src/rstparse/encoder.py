"""Shared neural representation: embeddings, document bi-LSTM, span scorers.

One parameter set backs every decoder.  Words are embedded as learned vector
+ optional frozen pretrained vector + POS vector, run through a bi-LSTM over
the whole document, and each EDU is summarized by the recurrent states at its
first and last word (both directions, 4H total).  A span (i, j) is the
concatenation of its first and last EDU vectors (8H).  All decision scores
come from two-layer feedforward networks over these span vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import ops
from .core import Document, RelationVocab, NUM_NUCLEARITIES
from .data import Vocab, PretrainedEmbeddings
from .ops import Tensor

SPAN = "span"
REL = "rel"
NUC = "nuc"
ACTION = "action"

STACK_ARITY = 3
QUEUE_ARITY = 3


def glorot(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


class ModelParams:
    """All trainable arrays plus the vocabularies they are indexed by.

    ``arrays`` maps parameter names to float64 ndarrays.  ``tensors()`` wraps
    the same storage in autograd leaves, so in-place updates to the arrays
    (optimizer steps, finite-difference probes) are visible to both the tape
    and the batched numpy scorers.
    """

    def __init__(self, arrays: dict[str, np.ndarray], word_vocab: Vocab,
                 pos_vocab: Vocab, rel_vocab: RelationVocab,
                 hidden: int, ff_hidden: int,
                 pretrained: np.ndarray | None = None):
        self.arrays = arrays
        self.word_vocab = word_vocab
        self.pos_vocab = pos_vocab
        self.rel_vocab = rel_vocab
        self.hidden = hidden
        self.ff_hidden = ff_hidden
        self.pretrained = pretrained
        self._tensors: dict[str, Tensor] | None = None

    @property
    def n_rel(self) -> int:
        return self.rel_vocab.size

    @property
    def n_actions(self) -> int:
        return 1 + 3 * (self.n_rel - 1)

    @property
    def edu_dim(self) -> int:
        return 4 * self.hidden

    @classmethod
    def init(cls, word_vocab: Vocab, pos_vocab: Vocab, rel_vocab: RelationVocab,
             rng: np.random.Generator, word_dim: int = 300, pos_dim: int = 300,
             hidden: int = 200, ff_hidden: int = 200,
             pretrained: PretrainedEmbeddings | None = None) -> "ModelParams":
        if rel_vocab.size < 2:
            raise ValueError("relation vocabulary has no real labels")
        pre_dim = pretrained.dim if pretrained is not None else 0
        in_dim = word_dim + pre_dim + pos_dim
        h4 = 4 * hidden
        arrays: dict[str, np.ndarray] = {}
        arrays["word_emb"] = rng.uniform(-0.1, 0.1, size=(len(word_vocab), word_dim))
        arrays["pos_emb"] = rng.uniform(0.0, 1.0, size=(len(pos_vocab), pos_dim))
        for direction in ("fwd", "bwd"):
            arrays[f"lstm_{direction}.W"] = glorot(rng, h4, in_dim + hidden)
            arrays[f"lstm_{direction}.b"] = np.zeros(h4)
        widths = {SPAN: (8 * hidden, 1),
                  REL: (16 * hidden, rel_vocab.size),
                  NUC: (16 * hidden, NUM_NUCLEARITIES),
                  ACTION: ((2 * STACK_ARITY + QUEUE_ARITY) * 4 * hidden,
                           1 + 3 * (rel_vocab.size - 1))}
        for name, (d_in, d_out) in widths.items():
            arrays[f"{name}.W1"] = glorot(rng, ff_hidden, d_in)
            arrays[f"{name}.b1"] = np.zeros(ff_hidden)
            arrays[f"{name}.W2"] = glorot(rng, d_out, ff_hidden)
            arrays[f"{name}.b2"] = np.zeros(d_out)
        table = pretrained.table.copy() if pretrained is not None else None
        return cls(arrays, word_vocab, pos_vocab, rel_vocab, hidden, ff_hidden,
                   pretrained=table)

    def tensors(self) -> dict[str, Tensor]:
        if self._tensors is None:
            self._tensors = {name: ops.tensor(arr)
                             for name, arr in self.arrays.items()}
            for name, t in self._tensors.items():
                if t.data is not self.arrays[name]:
                    # asarray copied (wrong dtype); keep storage shared
                    self.arrays[name] = t.data
        return self._tensors

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self.tensors().items():
            out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return out

    def zero_grads(self) -> None:
        if self._tensors is not None:
            for t in self._tensors.values():
                t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()},
                           self.word_vocab, self.pos_vocab, self.rel_vocab,
                           self.hidden, self.ff_hidden,
                           None if self.pretrained is None
                           else self.pretrained.copy())

    def save(self, path: str) -> None:
        meta = {"hidden": self.hidden,
                "ff_hidden": self.ff_hidden,
                "word_tokens": list(self.word_vocab.tokens[1:]),
                "pos_tokens": list(self.pos_vocab.tokens[1:]),
                "relations": list(self.rel_vocab.names[1:])}
        payload = {f"param/{k}": v for k, v in self.arrays.items()}
        if self.pretrained is not None:
            payload["pretrained"] = self.pretrained
        payload["meta"] = np.array(json.dumps(meta))
        # write through a handle so numpy keeps the path exactly as given
        with open(path, "wb") as fh:
            np.savez(fh, **payload)

    @classmethod
    def load(cls, path: str) -> "ModelParams":
        with np.load(path, allow_pickle=False) as npz:
            meta = json.loads(str(npz["meta"]))
            arrays = {k[len("param/"):]: npz[k].astype(np.float64)
                      for k in npz.files if k.startswith("param/")}
            pretrained = (npz["pretrained"].astype(np.float64)
                          if "pretrained" in npz.files else None)
        return cls(arrays, Vocab(meta["word_tokens"]), Vocab(meta["pos_tokens"]),
                   RelationVocab(meta["relations"]), meta["hidden"],
                   meta["ff_hidden"], pretrained=pretrained)


class Feedforward:
    """Two-layer scorer W2 relu(W1 x + b1) + b2 with tape and batched views."""

    def __init__(self, params: ModelParams, prefix: str):
        tensors = params.tensors()
        self.W1 = tensors[f"{prefix}.W1"]
        self.b1 = tensors[f"{prefix}.b1"]
        self.W2 = tensors[f"{prefix}.W2"]
        self.b2 = tensors[f"{prefix}.b2"]

    def apply(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        h = ops.relu(ops.add(ops.matvec(self.W1, x), self.b1))
        if mask is not None:
            h = ops.cmul(h, mask)
        return ops.add(ops.matvec(self.W2, h), self.b2)

    def apply_np(self, X: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        H = np.maximum(X @ self.W1.data.T + self.b1.data, 0.0)
        if mask is not None:
            H = H * mask
        return H @ self.W2.data.T + self.b2.data


@dataclass
class DropoutMasks:
    """Inverted-scale masks, fixed for one document pass.

    The same masks feed both the numpy score tables used for decoding and the
    tape rebuild of the chosen decisions, so the decoded tree is the argmax
    of exactly the function being differentiated.
    """

    edu: np.ndarray                  # (n_edus, 4H)
    hidden: dict[str, np.ndarray]    # scorer name -> (ff_hidden,)

    def hidden_for(self, name: str) -> np.ndarray:
        return self.hidden[name]


def make_dropout_masks(params: ModelParams, n_edus: int, dropout: float,
                       rng: np.random.Generator) -> DropoutMasks | None:
    if dropout <= 0.0:
        return None
    if not dropout < 1.0:
        raise ValueError(f"dropout rate {dropout} out of range")
    scale = 1.0 / (1.0 - dropout)

    def draw(shape):
        return (rng.random(shape) >= dropout) * scale

    hidden = {name: draw(params.ff_hidden)
              for name in (SPAN, REL, NUC, ACTION)}
    return DropoutMasks(draw((n_edus, params.edu_dim)), hidden)


def _lstm_sweep(W: Tensor, b: Tensor, xs: list[Tensor], hidden: int) -> list[Tensor]:
    """One LSTM direction over the input sequence; returns hidden states."""
    h = ops.zeros(hidden)
    c = ops.zeros(hidden)
    out = []
    for x in xs:
        z = ops.add(ops.matvec(W, ops.concat([x, h])), b)
        gate_in = ops.sigmoid(ops.narrow(z, 0, hidden))
        gate_forget = ops.sigmoid(ops.narrow(z, hidden, 2 * hidden))
        cand = ops.tanh(ops.narrow(z, 2 * hidden, 3 * hidden))
        gate_out = ops.sigmoid(ops.narrow(z, 3 * hidden, 4 * hidden))
        c = ops.add(ops.mul(gate_forget, c), ops.mul(gate_in, cand))
        h = ops.mul(gate_out, ops.tanh(c))
        out.append(h)
    return out


class EncodedDocument:
    """Per-EDU tape vectors plus a cached numpy view for batch scoring."""

    __slots__ = ("edus", "_matrix")

    def __init__(self, edus: list[Tensor]):
        self.edus = edus
        self._matrix: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.edus)

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack([e.data for e in self.edus])
        return self._matrix


def encode_document(doc: Document, params: ModelParams,
                    masks: DropoutMasks | None = None) -> EncodedDocument:
    tensors = params.tensors()
    word_emb = tensors["word_emb"]
    pos_emb = tensors["pos_emb"]
    pre = params.pretrained

    inputs: list[Tensor] = []
    bounds: list[tuple[int, int]] = []   # (first, last) word position per EDU
    for edu in doc.edus:
        first = len(inputs)
        for tok, tag in zip(edu.tokens, edu.pos_tags):
            wi = params.word_vocab.lookup(tok)
            parts = [ops.row(word_emb, wi)]
            if pre is not None:
                parts.append(ops.tensor(pre[wi]))
            parts.append(ops.row(pos_emb, params.pos_vocab.lookup(tag)))
            inputs.append(ops.concat(parts) if len(parts) > 1 else parts[0])
        bounds.append((first, len(inputs) - 1))

    fwd = _lstm_sweep(tensors["lstm_fwd.W"], tensors["lstm_fwd.b"],
                      inputs, params.hidden)
    bwd = _lstm_sweep(tensors["lstm_bwd.W"], tensors["lstm_bwd.b"],
                      inputs[::-1], params.hidden)[::-1]

    edus = []
    for t, (first, last) in enumerate(bounds):
        e = ops.concat([fwd[first], bwd[first], fwd[last], bwd[last]])
        if masks is not None:
            e = ops.cmul(e, masks.edu[t])
        edus.append(e)
    return EncodedDocument(edus)


def span_rep(enc: EncodedDocument, i: int, j: int) -> Tensor:
    """Span (i, j) covers EDUs i+1..j (1-based); rep is first EDU + last EDU."""
    if not 0 <= i < j <= enc.n:
        raise ValueError(f"span ({i}, {j}) out of range for {enc.n} EDUs")
    return ops.concat([enc.edus[i], enc.edus[j - 1]])


def span_rep_np(matrix: np.ndarray, i: int, j: int) -> np.ndarray:
    return np.concatenate([matrix[i], matrix[j - 1]])


def _pair_rep(enc: EncodedDocument, i: int, j: int, k: int) -> Tensor:
    """Labeling input: child reps for internal spans, own rep twice for leaves.

    k == i marks the leaf case (a one-EDU span has no real split point).
    """
    if k == i:
        own = span_rep(enc, i, j)
        return ops.concat([own, own])
    return ops.concat([span_rep(enc, i, k), span_rep(enc, k, j)])


def score_span(params: ModelParams, enc: EncodedDocument, i: int, j: int,
               masks: DropoutMasks | None = None) -> Tensor:
    mask = masks.hidden_for(SPAN) if masks is not None else None
    return ops.pick(Feedforward(params, SPAN).apply(span_rep(enc, i, j), mask), 0)


def score_rel(params: ModelParams, enc: EncodedDocument, i: int, j: int, k: int,
              masks: DropoutMasks | None = None) -> Tensor:
    """Vector of relation scores (one per label, reserved leaf label included)."""
    mask = masks.hidden_for(REL) if masks is not None else None
    return Feedforward(params, REL).apply(_pair_rep(enc, i, j, k), mask)


def score_nuc(params: ModelParams, enc: EncodedDocument, i: int, j: int, k: int,
              masks: DropoutMasks | None = None) -> Tensor:
    mask = masks.hidden_for(NUC) if masks is not None else None
    return Feedforward(params, NUC).apply(_pair_rep(enc, i, j, k), mask)
