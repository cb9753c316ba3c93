"""Corpus ingestion: EDU/tree file parsing, vocabularies, embeddings, splits.

On-disk layout of a corpus directory:

* ``relations.txt`` -- one relation label per line; blank lines and ``#``
  comments are ignored; the reserved leaf label is implicit.
* ``<doc_id>.edus`` -- one EDU per line; tokens as ``word_POS`` pairs joined by
  single spaces.  Literal underscores are escaped as ``\\_`` (and backslashes
  as ``\\\\``); the separator is the last unescaped underscore.
* ``<doc_id>.tree`` -- one s-expression: ``(LEAF k)`` for EDU k (1-based) or
  ``(<NN|NS|SN> <Relation> <child> <child>)``.

Files are UTF-8 with LF line endings.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    Document,
    Edu,
    LabeledSpan,
    LEAF_RELATION,
    LEAF_RELATION_NAME,
    Nuclearity,
    INTERNAL_NUCLEARITIES,
    RelationVocab,
    RstTree,
    validate_tree,
)

MANIFEST_NAME = "relations.txt"

UNK = "<unk>"


class CorpusError(ValueError):
    """Base class for corpus ingestion failures."""


class TreeSyntaxError(CorpusError):
    """Malformed .edus/.tree text; carries line and column."""

    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class EduCountMismatchError(CorpusError):
    pass


class UnknownRelationError(CorpusError):
    pass


class TreeInvariantError(CorpusError):
    pass


class Vocab:
    """Token inventory with a reserved unknown entry at index 0."""

    def __init__(self, tokens: Iterable[str]):
        tokens = tuple(tokens)
        if UNK in tokens:
            raise ValueError(f"{UNK!r} is reserved")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens")
        self.tokens = (UNK,) + tokens
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_documents(cls, docs: Sequence[Document], field: str) -> "Vocab":
        """Sorted vocabulary over ``tokens`` or ``pos_tags`` of the given docs."""
        seen: set[str] = set()
        for doc in docs:
            for edu in doc.edus:
                seen.update(getattr(edu, field))
        seen.discard(UNK)
        return cls(sorted(seen))

    def lookup(self, token: str) -> int:
        return self._index.get(token, 0)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens


@dataclass
class CorpusVocabs:
    word: Vocab
    pos: Vocab
    rel: RelationVocab


@dataclass
class Corpus:
    documents: tuple[Document, ...]
    rel_vocab: RelationVocab
    word_vocab: Vocab
    pos_vocab: Vocab

    @property
    def vocabs(self) -> CorpusVocabs:
        return CorpusVocabs(self.word_vocab, self.pos_vocab, self.rel_vocab)

    def __len__(self) -> int:
        return len(self.documents)


# --- token escaping -------------------------------------------------------

def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("_", "\\_")


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            out.append(text[i + 1])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _split_token(item: str, line: int, column: int) -> tuple[str, str]:
    """Split ``word_POS`` at the last unescaped underscore."""
    sep = -1
    i = 0
    while i < len(item):
        if item[i] == "\\":
            i += 2
            continue
        if item[i] == "_":
            sep = i
        i += 1
    if sep <= 0 or sep == len(item) - 1:
        raise TreeSyntaxError(f"token {item!r} is not a word_POS pair", line, column)
    return _unescape(item[:sep]), _unescape(item[sep + 1:])


# --- .edus files ----------------------------------------------------------

def parse_edus_text(text: str) -> tuple[Edu, ...]:
    edus = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if line == "":
            continue
        tokens = []
        tags = []
        column = 1
        for item in line.split(" "):
            if item == "":
                raise TreeSyntaxError("double space in EDU line", lineno, column)
            word, tag = _split_token(item, lineno, column)
            tokens.append(word)
            tags.append(tag)
            column += len(item) + 1
        edus.append(Edu(tuple(tokens), tuple(tags), len(edus) + 1))
    if not edus:
        raise TreeSyntaxError("no EDUs in file", 1, 0)
    return tuple(edus)


def serialize_edus(edus: Sequence[Edu]) -> str:
    lines = []
    for edu in edus:
        for tok, tag in zip(edu.tokens, edu.pos_tags):
            if not tok or not tag or any(c.isspace() for c in tok + tag):
                raise ValueError(f"token/tag {tok!r}/{tag!r} not serializable")
        lines.append(" ".join(f"{_escape(t)}_{_escape(p)}"
                              for t, p in zip(edu.tokens, edu.pos_tags)))
    return "\n".join(lines) + "\n"


# --- .tree files ----------------------------------------------------------

def _tokenize_sexpr(text: str):
    """Yield (token, line, column) with parens as their own tokens."""
    line, col = 1, 1
    buf = ""
    buf_pos = (1, 1)
    for c in text:
        if c in "()" or c.isspace():
            if buf:
                yield buf, *buf_pos
                buf = ""
            if c in "()":
                yield c, line, col
        else:
            if not buf:
                buf_pos = (line, col)
            buf += c
        if c == "\n":
            line += 1
            col = 1
        else:
            col += 1
    if buf:
        yield buf, *buf_pos


def parse_tree_text(text: str, rel_vocab: RelationVocab,
                    n_edus: int | None = None) -> RstTree:
    """Parse one bracketed tree; checks labels and the span invariants."""
    tokens = list(_tokenize_sexpr(text))
    if not tokens:
        raise TreeSyntaxError("empty tree file", 1, 0)

    pos = 0

    def expect(what: str):
        nonlocal pos
        if pos >= len(tokens):
            raise TreeSyntaxError(f"expected {what}, found end of input",
                                  tokens[-1][1], tokens[-1][2])
        return tokens[pos]

    spans: list[LabeledSpan] = []
    splits: dict[tuple[int, int], int] = {}

    def parse_node() -> tuple[int, int]:
        nonlocal pos
        tok, line, col = expect("'('")
        if tok != "(":
            raise TreeSyntaxError(f"expected '(', found {tok!r}", line, col)
        pos += 1
        head, line, col = expect("node head")
        pos += 1
        if head == LEAF_RELATION_NAME:
            num, nline, ncol = expect("EDU number")
            pos += 1
            if not num.isdigit() or int(num) < 1:
                raise TreeSyntaxError(f"bad EDU number {num!r}", nline, ncol)
            k = int(num)
            close, cline, ccol = expect("')'")
            if close != ")":
                raise TreeSyntaxError(f"expected ')', found {close!r}", cline, ccol)
            pos += 1
            spans.append(LabeledSpan(k - 1, k, LEAF_RELATION, Nuclearity.LEAF))
            return k - 1, k
        if head not in ("NN", "NS", "SN"):
            raise TreeSyntaxError(f"expected NN, NS, SN or {LEAF_RELATION_NAME},"
                                  f" found {head!r}", line, col)
        nuc = Nuclearity[head]
        rel_name, rline, rcol = expect("relation label")
        pos += 1
        try:
            rel = rel_vocab.index(rel_name)
        except KeyError:
            raise UnknownRelationError(
                f"line {rline}, column {rcol}: unknown relation label {rel_name!r}"
            ) from None
        if rel == LEAF_RELATION:
            raise UnknownRelationError(
                f"line {rline}, column {rcol}: reserved label on internal node")
        left = parse_node()
        right = parse_node()
        if left[1] != right[0]:
            raise TreeInvariantError(
                f"children spans {left} and {right} are not adjacent")
        close, cline, ccol = expect("')'")
        if close != ")":
            raise TreeSyntaxError(f"expected ')', found {close!r}", cline, ccol)
        pos += 1
        i, j = left[0], right[1]
        spans.append(LabeledSpan(i, j, rel, nuc))
        splits[(i, j)] = left[1]
        return i, j

    root = parse_node()
    if pos != len(tokens):
        tok, line, col = tokens[pos]
        raise TreeSyntaxError(f"trailing content {tok!r}", line, col)

    n = root[1]
    if root[0] != 0:
        raise TreeInvariantError(f"root span {root} does not start at 0")
    if n_edus is not None and n != n_edus:
        raise EduCountMismatchError(
            f"tree covers {n} EDUs but the document has {n_edus}")
    tree = RstTree(spans, n, splits)
    err = validate_tree(tree)
    if err is not None:
        raise TreeInvariantError(err)
    return tree


def serialize_tree(tree: RstTree, rel_vocab: RelationVocab) -> str:
    """Render one tree as a single-line s-expression.

    Leaf nodes are written as ``(LEAF k)`` whatever labels they carry in
    memory, so the output of any decoder round-trips as a valid tree.
    """
    def render(i: int, j: int) -> str:
        if j == i + 1:
            return f"({LEAF_RELATION_NAME} {j})"
        k = tree.splits[(i, j)]
        rel, nuc = tree.label_at(i, j)
        if nuc not in INTERNAL_NUCLEARITIES or rel == LEAF_RELATION:
            raise ValueError(f"internal span ({i}, {j}) carries leaf labels")
        return (f"({Nuclearity(nuc).name} {rel_vocab.name(rel)} "
                f"{render(i, k)} {render(k, j)})")

    return render(0, tree.n) + "\n"


def parse_document(doc_id: str, edus_text: str, tree_text: str | None,
                   rel_vocab: RelationVocab) -> Document:
    edus = parse_edus_text(edus_text)
    gold = None
    if tree_text is not None:
        gold = parse_tree_text(tree_text, rel_vocab, n_edus=len(edus))
    return Document(doc_id, edus, gold)


# --- corpus directories ---------------------------------------------------

def parse_manifest(text: str) -> RelationVocab:
    names = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == LEAF_RELATION_NAME:
            raise UnknownRelationError(
                f"line {lineno}: {LEAF_RELATION_NAME!r} is implicit, do not list it")
        names.append(line)
    try:
        return RelationVocab(names)
    except ValueError as exc:
        raise UnknownRelationError(str(exc)) from None


def load_corpus(directory: str, require_trees: bool = True) -> Corpus:
    manifest = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest):
        raise CorpusError(f"missing manifest {manifest}")
    with open(manifest, encoding="utf-8") as fh:
        rel_vocab = parse_manifest(fh.read())

    docs = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".edus"):
            continue
        doc_id = name[:-len(".edus")]
        edus_path = os.path.join(directory, name)
        tree_path = os.path.join(directory, doc_id + ".tree")
        with open(edus_path, encoding="utf-8") as fh:
            edus_text = fh.read()
        tree_text = None
        if os.path.exists(tree_path):
            with open(tree_path, encoding="utf-8") as fh:
                tree_text = fh.read()
        elif require_trees:
            raise CorpusError(f"missing tree file for {doc_id}")
        try:
            docs.append(parse_document(doc_id, edus_text, tree_text, rel_vocab))
        except CorpusError as exc:
            raise type(exc)(f"{doc_id}: {exc}") from None
    if not docs:
        raise CorpusError(f"no .edus files in {directory}")

    documents = tuple(docs)
    return Corpus(documents, rel_vocab,
                  Vocab.from_documents(documents, "tokens"),
                  Vocab.from_documents(documents, "pos_tags"))


def save_corpus(corpus: Corpus, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(corpus.rel_vocab.names[1:]) + "\n")
    for doc in corpus.documents:
        with open(os.path.join(directory, doc.doc_id + ".edus"), "w",
                  encoding="utf-8") as fh:
            fh.write(serialize_edus(doc.edus))
        if doc.gold is not None:
            with open(os.path.join(directory, doc.doc_id + ".tree"), "w",
                      encoding="utf-8") as fh:
                fh.write(serialize_tree(doc.gold, corpus.rel_vocab))


# --- splits ---------------------------------------------------------------

def split_train_dev(corpus: Corpus, dev_size: int,
                    seed: int) -> tuple[list[Document], list[Document]]:
    """Seeded uniform sample without replacement for the dev split."""
    docs = list(corpus.documents)
    if not 0 <= dev_size < len(docs):
        raise ValueError(f"dev_size {dev_size} out of range for {len(docs)} documents")
    rng = np.random.default_rng(seed)
    dev_idx = set(rng.choice(len(docs), size=dev_size, replace=False).tolist())
    train = [d for i, d in enumerate(docs) if i not in dev_idx]
    dev = [d for i, d in enumerate(docs) if i in dev_idx]
    return train, dev


# --- pretrained embeddings ------------------------------------------------

@dataclass
class PretrainedEmbeddings:
    """Frozen word vectors aligned with a vocabulary; absent tokens get zeros."""

    table: np.ndarray
    found: int
    vocab_size: int

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    @property
    def coverage(self) -> float:
        return self.found / self.vocab_size if self.vocab_size else 0.0


def load_embeddings(path: str, vocab: Vocab) -> PretrainedEmbeddings:
    """Read a text embedding file (token then D floats per line)."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split()
            if len(fields) < 2:
                raise CorpusError(f"{path}, line {lineno}: too few fields")
            token = fields[0]
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError:
                raise CorpusError(
                    f"{path}, line {lineno}: unparseable float") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise CorpusError(
                    f"{path}, line {lineno}: expected {dim} values, found {len(vec)}")
            vectors[token] = vec
    if dim is None:
        raise CorpusError(f"{path}: empty embedding file")

    table = np.zeros((len(vocab), dim))
    found = 0
    for i, token in enumerate(vocab.tokens):
        vec = vectors.get(token)
        if vec is not None:
            table[i] = vec
            found += 1
    return PretrainedEmbeddings(table, found, len(vocab))


# --- synthetic corpora ----------------------------------------------------

_WORDS = ("alpha", "bravo", "delta", "echo", "lima", "metric", "node", "onyx",
          "pivot", "quartz", "relay", "sigma", "tensor", "umbra", "vector", "zephyr")
_TAGS = ("NN", "VB", "JJ", "RB", "IN", "DT")


def random_tree(n: int, rel_vocab: RelationVocab, rng: np.random.Generator) -> RstTree:
    """Random binary tree over n EDUs via recursive uniform split sampling."""
    if n >= 2 and rel_vocab.size < 2:
        raise ValueError("need at least one real relation label")
    spans: list[LabeledSpan] = []
    splits: dict[tuple[int, int], int] = {}

    def build(i: int, j: int) -> None:
        if j == i + 1:
            spans.append(LabeledSpan(i, j, LEAF_RELATION, Nuclearity.LEAF))
            return
        k = int(rng.integers(i + 1, j))
        rel = int(rng.integers(1, rel_vocab.size))
        nuc = INTERNAL_NUCLEARITIES[int(rng.integers(0, 3))]
        spans.append(LabeledSpan(i, j, rel, nuc))
        splits[(i, j)] = k
        build(i, k)
        build(k, j)

    build(0, n)
    return RstTree(spans, n, splits)


def generate_synthetic(n_docs: int, max_edus: int, rel_vocab: RelationVocab,
                       seed: int) -> Corpus:
    """Deterministic random corpus for tests and smoke runs."""
    if max_edus < 1:
        raise ValueError("max_edus must be at least 1")
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        n = int(rng.integers(1, max_edus + 1))
        edus = []
        for t in range(n):
            length = int(rng.integers(1, 5))
            tokens = tuple(_WORDS[int(rng.integers(0, len(_WORDS)))]
                           for _ in range(length))
            tags = tuple(_TAGS[int(rng.integers(0, len(_TAGS)))]
                         for _ in range(length))
            edus.append(Edu(tokens, tags, t + 1))
        gold = random_tree(n, rel_vocab, rng)
        docs.append(Document(f"doc{d:04d}", tuple(edus), gold))
    documents = tuple(docs)
    return Corpus(documents, rel_vocab,
                  Vocab.from_documents(documents, "tokens"),
                  Vocab.from_documents(documents, "pos_tags"))
