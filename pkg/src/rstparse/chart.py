"""Global discourse parsing on a span chart.

Three bottom-up decoders share one score layout:

* exact: every cell maximizes jointly over split point and both labels.
* partial: each cell picks its split from span + subtree scores alone, then
  labels that split.  Same optimum whenever label scores do not disagree with
  span scores about the split; much cheaper when the label set is large.
* complete: the whole structure is chosen from span scores only, labels are
  filled in afterwards.

Also here: tree scoring, the hamming-style tree distance, loss-augmented
decoding, the structured margin loss, and the missing-prediction diagnostic
(a decoded tree scoring strictly below gold under the same scores).

Tie-breaking is deterministic everywhere: lowest split, then lowest relation
index, then lowest nuclearity index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .core import (
    Document,
    LabeledSpan,
    Nuclearity,
    NUM_NUCLEARITIES,
    RstTree,
    structural_error,
)
from .encoder import (
    SPAN,
    REL,
    NUC,
    DropoutMasks,
    EncodedDocument,
    Feedforward,
    ModelParams,
    encode_document,
    score_nuc,
    score_rel,
    score_span,
)
from .ops import Tensor

NEG_INF = float("-inf")

_CHUNK = 1024


def _layout(n: int) -> tuple[np.ndarray, int]:
    """Row layout for (i, j, k) score blocks.

    Blocks are ordered by (i, j); an internal block holds one row per split
    k = i+1..j-1, a leaf block holds the single row for its own labels.
    """
    base = np.full((n + 1, n + 1), -1, dtype=np.int64)
    cursor = 0
    for i in range(n):
        for j in range(i + 1, n + 1):
            base[i, j] = cursor
            cursor += 1 if j == i + 1 else j - i - 1
    return base, cursor


@dataclass
class ScoreTables:
    """Dense decision scores for one document of n EDUs.

    ``span`` is indexed [i, j].  ``rel`` and ``nuc`` hold one row per (i, j, k)
    in the order given by ``base``; the leaf row of span (i, i+1) is addressed
    with k = i.
    """

    n: int
    n_rel: int
    span: np.ndarray       # (n+1, n+1)
    rel: np.ndarray        # (rows, n_rel)
    nuc: np.ndarray        # (rows, NUM_NUCLEARITIES)
    base: np.ndarray       # (n+1, n+1) int
    augmented: bool = False

    def row_index(self, i: int, j: int, k: int) -> int:
        if j == i + 1:
            if k != i:
                raise ValueError(f"leaf ({i}, {j}) must use k = {i}")
            return int(self.base[i, j])
        if not i < k < j:
            raise ValueError(f"split {k} out of range for span ({i}, {j})")
        return int(self.base[i, j]) + k - i - 1

    def s_span(self, i: int, j: int) -> float:
        return float(self.span[i, j])

    def s_rel(self, i: int, j: int, k: int) -> np.ndarray:
        return self.rel[self.row_index(i, j, k)]

    def s_nuc(self, i: int, j: int, k: int) -> np.ndarray:
        return self.nuc[self.row_index(i, j, k)]

    def tables(self, n: int) -> "ScoreTables":
        if n != self.n:
            raise ValueError(f"tables were built for n={self.n}, not {n}")
        return self


def as_tables(n: int, scores) -> ScoreTables:
    """Accept either prebuilt ScoreTables or any oracle with .tables(n)."""
    if n < 1:
        raise ValueError("need at least one EDU")
    return scores.tables(n)


def random_tables(n: int, n_rel: int, rng: np.random.Generator,
                  quantum: float | None = None) -> ScoreTables:
    """Standard-normal score tables; the workhorse of the equivalence tests.

    With ``quantum`` set (e.g. 2**-10) scores are rounded to that grid, so
    sums of a few dozen entries and the +1 loss augmentation stay exact in
    64-bit floats.
    """
    base, rows = _layout(n)

    def draw(shape):
        x = rng.standard_normal(shape)
        if quantum is not None:
            x = np.round(x / quantum) * quantum
        return x

    return ScoreTables(n, n_rel, draw((n + 1, n + 1)), draw((rows, n_rel)),
                       draw((rows, NUM_NUCLEARITIES)), base)


class TableOracle:
    """Explicit score tables backed by dicts; unlisted entries score 0.

    The text form accepts one entry per line: ``span i j value``,
    ``rel i j k l value`` or ``nuc i j k p value`` (p numeric or one of
    NN/NS/SN/LEAF); blank lines and ``#`` comments are skipped.
    """

    def __init__(self, n_rel: int,
                 span: dict[tuple[int, int], float] | None = None,
                 rel: dict[tuple[int, int, int, int], float] | None = None,
                 nuc: dict[tuple[int, int, int, int], float] | None = None):
        if n_rel < 2:
            raise ValueError("need at least one real relation label")
        self.n_rel = n_rel
        self.span_scores = dict(span or {})
        self.rel_scores = dict(rel or {})
        self.nuc_scores = dict(nuc or {})

    @classmethod
    def from_text(cls, text: str, n_rel: int) -> "TableOracle":
        span: dict = {}
        rel: dict = {}
        nuc: dict = {}
        for lineno, line in enumerate(text.split("\n"), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                kind = fields[0]
                if kind == "span" and len(fields) == 4:
                    span[(int(fields[1]), int(fields[2]))] = float(fields[3])
                elif kind == "rel" and len(fields) == 6:
                    key = tuple(int(x) for x in fields[1:5])
                    rel[key] = float(fields[5])
                elif kind == "nuc" and len(fields) == 6:
                    i, j, k = (int(x) for x in fields[1:4])
                    p = (int(fields[4]) if fields[4].isdigit()
                         else int(Nuclearity[fields[4]]))
                    nuc[(i, j, k, p)] = float(fields[5])
                else:
                    raise ValueError(f"unrecognized entry {line!r}")
            except (ValueError, KeyError) as exc:
                raise ValueError(f"score table line {lineno}: {exc}") from None
        return cls(n_rel, span, rel, nuc)

    def s_span(self, i: int, j: int) -> float:
        return self.span_scores.get((i, j), 0.0)

    def s_rel(self, i: int, j: int, k: int) -> np.ndarray:
        out = np.zeros(self.n_rel)
        for l in range(self.n_rel):
            out[l] = self.rel_scores.get((i, j, k, l), 0.0)
        return out

    def s_nuc(self, i: int, j: int, k: int) -> np.ndarray:
        out = np.zeros(NUM_NUCLEARITIES)
        for p in range(NUM_NUCLEARITIES):
            out[p] = self.nuc_scores.get((i, j, k, p), 0.0)
        return out

    def tables(self, n: int) -> ScoreTables:
        base, rows = _layout(n)
        span = np.zeros((n + 1, n + 1))
        rel = np.zeros((rows, self.n_rel))
        nuc = np.zeros((rows, NUM_NUCLEARITIES))
        t = ScoreTables(n, self.n_rel, span, rel, nuc, base)
        for (i, j), v in self.span_scores.items():
            if not 0 <= i < j <= n:
                raise ValueError(f"span entry ({i}, {j}) out of range for n={n}")
            span[i, j] = v
        for (i, j, k, l), v in self.rel_scores.items():
            if not 0 <= l < self.n_rel:
                raise ValueError(f"relation index {l} out of range")
            rel[t.row_index(i, j, k), l] = v
        for (i, j, k, p), v in self.nuc_scores.items():
            if not 0 <= p < NUM_NUCLEARITIES:
                raise ValueError(f"nuclearity index {p} out of range")
            nuc[t.row_index(i, j, k), p] = v
        return t


class NeuralOracle:
    """Scores every chart decision of one encoded document in batched numpy.

    The tables come from the same parameters and dropout masks as the tape
    scorers, so a tree decoded from them is the argmax of the function the
    symbolic loss differentiates.
    """

    def __init__(self, params: ModelParams, enc: EncodedDocument,
                 masks: DropoutMasks | None = None):
        self.params = params
        self.enc = enc
        self.masks = masks
        self._tables: ScoreTables | None = None

    def tables(self, n: int | None = None) -> ScoreTables:
        if n is not None and n != self.enc.n:
            raise ValueError(f"oracle encodes n={self.enc.n}, asked for n={n}")
        if self._tables is None:
            self._tables = self._build()
        return self._tables

    def s_span(self, i, j):
        return self.tables().s_span(i, j)

    def s_rel(self, i, j, k):
        return self.tables().s_rel(i, j, k)

    def s_nuc(self, i, j, k):
        return self.tables().s_nuc(i, j, k)

    def _build(self) -> ScoreTables:
        params, masks = self.params, self.masks
        n = self.enc.n
        M = self.enc.matrix()
        base, rows = _layout(n)

        pair_i = []
        pair_j = []
        for i in range(n):
            for j in range(i + 1, n + 1):
                pair_i.append(i)
                pair_j.append(j)
        li = np.array(pair_i)
        lj = np.array(pair_j)
        span_in = np.hstack([M[li], M[lj - 1]])
        m_span = masks.hidden_for(SPAN) if masks is not None else None
        span = np.zeros((n + 1, n + 1))
        span[li, lj] = Feedforward(params, SPAN).apply_np(span_in, m_span)[:, 0]

        # rel/nuc rows in block order; inputs are the two child span reps,
        # or the leaf's own rep twice.  A span rep (a, b) reads M[a], M[b-1].
        a = np.empty(rows, dtype=np.int64)
        b = np.empty(rows, dtype=np.int64)
        c = np.empty(rows, dtype=np.int64)
        d = np.empty(rows, dtype=np.int64)
        r = 0
        for i in range(n):
            for j in range(i + 1, n + 1):
                if j == i + 1:
                    a[r] = i; b[r] = i; c[r] = i; d[r] = i
                    r += 1
                    continue
                for k in range(i + 1, j):
                    a[r] = i; b[r] = k - 1; c[r] = k; d[r] = j - 1
                    r += 1
        assert r == rows

        rel = np.empty((rows, params.n_rel))
        nuc = np.empty((rows, NUM_NUCLEARITIES))
        ff_rel = Feedforward(params, REL)
        ff_nuc = Feedforward(params, NUC)
        m_rel = masks.hidden_for(REL) if masks is not None else None
        m_nuc = masks.hidden_for(NUC) if masks is not None else None
        for s in range(0, rows, _CHUNK):
            sl = slice(s, min(s + _CHUNK, rows))
            X = np.hstack([M[a[sl]], M[b[sl]], M[c[sl]], M[d[sl]]])
            rel[sl] = ff_rel.apply_np(X, m_rel)
            nuc[sl] = ff_nuc.apply_np(X, m_nuc)
        return ScoreTables(n, params.n_rel, span, rel, nuc, base)


# --- tree scoring ---------------------------------------------------------

def _check_labels(tree: RstTree, n_rel: int) -> None:
    for (i, j), (l, p) in tree.labels.items():
        if not 0 <= l < n_rel or not 0 <= int(p) < NUM_NUCLEARITIES:
            raise ValueError(f"labels ({l}, {p}) of span ({i}, {j}) out of range")


def score_tree(tree: RstTree, scores) -> float:
    """Sum of the tree's decisions: each non-root span's span score, plus
    relation and nuclearity scores of every span at its own split (leaf rows
    for leaves).  Exactly what the exact decoder maximizes."""
    err = structural_error(tree)
    if err is not None:
        raise ValueError(err)
    t = as_tables(tree.n, scores)
    _check_labels(tree, t.n_rel)
    total = 0.0
    for i, j, k, l, p in tree.internal_items():
        row = t.row_index(i, j, k)
        total += (t.span[i, k] + t.span[k, j]
                  + t.rel[row, l] + t.nuc[row, int(p)])
    for i, l, p in tree.leaf_items():
        row = t.row_index(i, i + 1, i)
        total += t.rel[row, l] + t.nuc[row, int(p)]
    return float(total)


def hamming(pred: RstTree, gold: RstTree) -> int:
    """Predicted-side decision mismatches: one per predicted span absent from
    gold, one per shared span whose relation differs, one per shared span
    whose nuclearity differs."""
    if pred.n != gold.n:
        raise ValueError(f"EDU counts differ: {pred.n} vs {gold.n}")
    d = 0
    for (i, j), (l, p) in pred.labels.items():
        if not gold.has_span(i, j):
            d += 1
            continue
        gl, gp = gold.label_at(i, j)
        d += (l != gl) + (p != gp)
    return d


# --- decoders -------------------------------------------------------------

def _fill_leaves(t: ScoreTables, best, brel, bnuc) -> None:
    """Leaf cells maximize the full label range (reserved leaf labels included)."""
    for i in range(t.n):
        row = int(t.base[i, i + 1])
        l = int(np.argmax(t.rel[row]))
        p = int(np.argmax(t.nuc[row]))
        best[i, i + 1] = t.rel[row, l] + t.nuc[row, p]
        brel[i, i + 1] = l
        bnuc[i, i + 1] = p


def _backtrace(n: int, bsplit, brel, bnuc) -> RstTree:
    spans = []
    splits: dict[tuple[int, int], int] = {}
    stack = [(0, n)]
    while stack:
        i, j = stack.pop()
        spans.append(LabeledSpan(i, j, int(brel[i, j]),
                                 Nuclearity(int(bnuc[i, j]))))
        if j > i + 1:
            k = int(bsplit[i, j])
            splits[(i, j)] = k
            stack.append((i, k))
            stack.append((k, j))
    return RstTree(spans, n, splits)


def _pair_scores(t: ScoreTables, best, i: int, j: int) -> np.ndarray:
    """Split-point totals span(i,k) + span(k,j) + best(i,k) + best(k,j)."""
    ks = slice(i + 1, j)
    return t.span[i, ks] + t.span[ks, j] + best[i, ks] + best[ks, j]


def decode_exact(n: int, scores) -> tuple[RstTree, float]:
    """Joint max over (split, relation, nuclearity) per cell; the global argmax.

    The inner loop visits every label pair per split, so the cost carries the
    full grammar constant (label pairs x splits x cells).
    """
    t = as_tables(n, scores)
    best = np.zeros((n + 1, n + 1))
    bsplit = np.full((n + 1, n + 1), -1, dtype=np.int64)
    brel = np.zeros((n + 1, n + 1), dtype=np.int64)
    bnuc = np.zeros((n + 1, n + 1), dtype=np.int64)
    _fill_leaves(t, best, brel, bnuc)
    n_rel = t.n_rel
    rel_rows, nuc_rows, base = t.rel, t.nuc, t.base
    for width in range(2, n + 1):
        for i in range(n - width + 1):
            j = i + width
            pair = _pair_scores(t, best, i, j).tolist()
            b0 = int(base[i, j])
            bv = NEG_INF
            bk = bl = bp = -1
            for x, k in enumerate(range(i + 1, j)):
                stem = pair[x]
                rrow = rel_rows[b0 + x].tolist()
                nrow = nuc_rows[b0 + x].tolist()
                for l in range(1, n_rel):
                    vl = stem + rrow[l]
                    for p in range(3):
                        v = vl + nrow[p]
                        if v > bv:
                            bv = v
                            bk, bl, bp = k, l, p
            best[i, j] = bv
            bsplit[i, j] = bk
            brel[i, j] = bl
            bnuc[i, j] = bp
    return _backtrace(n, bsplit, brel, bnuc), float(best[0, n])


def decode_partial(n: int, scores) -> tuple[RstTree, float]:
    """Split chosen from span + subtree scores only, then labeled at that split."""
    t = as_tables(n, scores)
    best = np.zeros((n + 1, n + 1))
    bsplit = np.full((n + 1, n + 1), -1, dtype=np.int64)
    brel = np.zeros((n + 1, n + 1), dtype=np.int64)
    bnuc = np.zeros((n + 1, n + 1), dtype=np.int64)
    _fill_leaves(t, best, brel, bnuc)
    for width in range(2, n + 1):
        for i in range(n - width + 1):
            j = i + width
            pair = _pair_scores(t, best, i, j)
            x = int(np.argmax(pair))
            row = int(t.base[i, j]) + x
            l = 1 + int(np.argmax(t.rel[row, 1:]))
            p = int(np.argmax(t.nuc[row, :3]))
            best[i, j] = pair[x] + t.rel[row, l] + t.nuc[row, p]
            bsplit[i, j] = i + 1 + x
            brel[i, j] = l
            bnuc[i, j] = p
    return _backtrace(n, bsplit, brel, bnuc), float(best[0, n])


def decode_complete(n: int, scores) -> tuple[RstTree, float]:
    """Structure from span scores alone, labels filled in per chosen span.

    The returned scalar is the full tree score, so it is comparable with the
    other decoders (the structure pass itself never sees label scores).
    """
    t = as_tables(n, scores)
    struct = np.zeros((n + 1, n + 1))
    bsplit = np.full((n + 1, n + 1), -1, dtype=np.int64)
    for width in range(2, n + 1):
        for i in range(n - width + 1):
            j = i + width
            pair = _pair_scores(t, struct, i, j)
            x = int(np.argmax(pair))
            struct[i, j] = pair[x]
            bsplit[i, j] = i + 1 + x
    brel = np.zeros((n + 1, n + 1), dtype=np.int64)
    bnuc = np.zeros((n + 1, n + 1), dtype=np.int64)
    stack = [(0, n)]
    while stack:
        i, j = stack.pop()
        if j == i + 1:
            row = int(t.base[i, j])
            brel[i, j] = int(np.argmax(t.rel[row]))
            bnuc[i, j] = int(np.argmax(t.nuc[row]))
            continue
        k = int(bsplit[i, j])
        row = t.row_index(i, j, k)
        brel[i, j] = 1 + int(np.argmax(t.rel[row, 1:]))
        bnuc[i, j] = int(np.argmax(t.nuc[row, :3]))
        stack.append((i, k))
        stack.append((k, j))
    tree = _backtrace(n, bsplit, brel, bnuc)
    return tree, score_tree(tree, t)


DECODERS = {"exact": decode_exact, "partial": decode_partial,
            "complete": decode_complete}


def get_decoder(name: str):
    try:
        return DECODERS[name]
    except KeyError:
        raise ValueError(f"unknown decoder {name!r}; "
                         f"choose from {sorted(DECODERS)}") from None


# --- loss-augmented decoding and the margin loss --------------------------

def augment_tables(t: ScoreTables, gold: RstTree) -> ScoreTables:
    """Shift scores so that decoding maximizes plain score + distance to gold.

    +1 on every span absent from gold; +1 on every wrong relation/nuclearity
    at spans gold contains (across all split rows, since the distance does not
    depend on the split).  For any tree T the augmented score is then exactly
    score_tree(T) + hamming(T, gold).
    """
    if gold.n != t.n:
        raise ValueError(f"gold tree has n={gold.n}, tables n={t.n}")
    span = t.span.copy()
    rel = t.rel.copy()
    nuc = t.nuc.copy()
    for i in range(t.n):
        for j in range(i + 1, t.n + 1):
            if not gold.has_span(i, j):
                span[i, j] += 1.0
    for (i, j), (gl, gp) in gold.labels.items():
        r0 = int(t.base[i, j])
        cnt = 1 if j == i + 1 else j - i - 1
        rel[r0:r0 + cnt] += 1.0
        rel[r0:r0 + cnt, gl] -= 1.0
        nuc[r0:r0 + cnt] += 1.0
        nuc[r0:r0 + cnt, int(gp)] -= 1.0
    return ScoreTables(t.n, t.n_rel, span, rel, nuc, t.base, augmented=True)


def decode_loss_augmented(n: int, scores, gold: RstTree,
                          decoder: str = "partial") -> tuple[RstTree, float]:
    """Decode under gold-distance-augmented scores; returns the augmented score."""
    t = as_tables(n, scores)
    return get_decoder(decoder)(n, augment_tables(t, gold))


def score_tree_symbolic(tree: RstTree, params: ModelParams,
                        enc: EncodedDocument,
                        masks: DropoutMasks | None = None) -> Tensor:
    """score_tree rebuilt on the autograd tape, term by term."""
    terms = []
    for i, j, k, l, p in tree.internal_items():
        terms.append(score_span(params, enc, i, k, masks))
        terms.append(score_span(params, enc, k, j, masks))
        terms.append(ops.pick(score_rel(params, enc, i, j, k, masks), l))
        terms.append(ops.pick(score_nuc(params, enc, i, j, k, masks), int(p)))
    for i, l, p in tree.leaf_items():
        terms.append(ops.pick(score_rel(params, enc, i, i + 1, i, masks), l))
        terms.append(ops.pick(score_nuc(params, enc, i, i + 1, i, masks), int(p)))
    return ops.addn(terms)


@dataclass
class ChartDiagnostics:
    pred: RstTree
    augmented_score: float
    pred_score: float
    gold_score: float
    distance: int
    missing: bool
    loss: float


def chart_loss(doc: Document, params: ModelParams, decoder: str = "partial",
               masks: DropoutMasks | None = None,
               enc: EncodedDocument | None = None
               ) -> tuple[Tensor, ChartDiagnostics]:
    """Margin loss max(0, score(T^) + distance(T^, gold) - score(gold)) with
    T^ from loss-augmented decoding.

    The returned tensor carries the tape for the active hinge; when the margin
    is already satisfied it is a constant zero.
    """
    if doc.gold is None:
        raise ValueError(f"document {doc.doc_id} has no gold tree")
    if enc is None:
        enc = encode_document(doc, params, masks)
    tabs = NeuralOracle(params, enc, masks).tables(doc.n)
    pred, aug_score = decode_loss_augmented(doc.n, tabs, doc.gold, decoder)
    gold_score = score_tree(doc.gold, tabs)
    pred_score = score_tree(pred, tabs)
    dist = hamming(pred, doc.gold)

    if aug_score - gold_score <= 0.0:
        loss = ops.tensor(0.0)
    else:
        diff = (score_tree_symbolic(pred, params, enc, masks)
                - score_tree_symbolic(doc.gold, params, enc, masks))
        loss = ops.relu(diff + float(dist))
    diag = ChartDiagnostics(pred, aug_score, pred_score, gold_score, dist,
                            missing=pred_score < gold_score,
                            loss=float(loss.item()))
    return loss, diag


def missing_prediction(n: int, scores, gold: RstTree,
                       decoder: str = "partial") -> bool:
    """True when the decoded tree scores strictly below gold (plain scores)."""
    t = as_tables(n, scores)
    _, score = get_decoder(decoder)(n, t)
    return score < score_tree(gold, t)


def count_missing(docs, params: ModelParams, decoder: str = "partial") -> int:
    """Documents whose decoded tree under-shoots the gold tree's score."""
    total = 0
    for doc in docs:
        if doc.gold is None:
            raise ValueError(f"document {doc.doc_id} has no gold tree")
        enc = encode_document(doc, params)
        tabs = NeuralOracle(params, enc).tables(doc.n)
        if missing_prediction(doc.n, tabs, doc.gold, decoder):
            total += 1
    return total
