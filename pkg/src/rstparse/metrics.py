"""Parseval-style scoring of predicted trees against gold.

Three metrics: Span (structure only), Nuclearity and Relation (structure plus
the respective label).  Labels are compared on parent spans, leaf spans count
toward Span only, and the root counts everywhere.  Since both trees over the
same document have the same number of spans, precision, recall and F1
coincide; everything is reported as F1 on a 0-100 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import RstTree, j_minus

METRICS = ("span", "nuclearity", "relation")


@dataclass(frozen=True)
class PairCounts:
    """Matched/predicted/gold decision counts for one document pair."""

    span_matched: int = 0
    span_pred: int = 0
    span_gold: int = 0
    nuc_matched: int = 0
    nuc_pred: int = 0
    nuc_gold: int = 0
    rel_matched: int = 0
    rel_pred: int = 0
    rel_gold: int = 0

    def add(self, other: "PairCounts") -> "PairCounts":
        return PairCounts(*(a + b for a, b in
                            zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self):
        return (self.span_matched, self.span_pred, self.span_gold,
                self.nuc_matched, self.nuc_pred, self.nuc_gold,
                self.rel_matched, self.rel_pred, self.rel_gold)

    def triple(self, metric: str) -> tuple[int, int, int]:
        m = {"span": (self.span_matched, self.span_pred, self.span_gold),
             "nuclearity": (self.nuc_matched, self.nuc_pred, self.nuc_gold),
             "relation": (self.rel_matched, self.rel_pred, self.rel_gold)}
        return m[metric]


def f1(matched: int, pred_total: int, gold_total: int) -> float:
    """2m / (pred + gold) on a 0-100 scale; 0.0 when nothing was countable."""
    denom = pred_total + gold_total
    if denom == 0:
        return 0.0
    return 200.0 * matched / denom


def score_pair(pred: RstTree, gold: RstTree) -> PairCounts:
    if pred.n != gold.n:
        raise ValueError(f"EDU counts differ: {pred.n} vs {gold.n}")
    span_m = nuc_m = rel_m = 0
    internal_pred = 0
    for (i, j), (l, p) in pred.labels.items():
        shared = gold.has_span(i, j)
        if shared:
            span_m += 1
        if j_minus((i, j)) < 2:
            continue
        internal_pred += 1
        if shared:
            gl, gp = gold.label_at(i, j)
            nuc_m += p == gp
            rel_m += l == gl
    internal_gold = pred.n - 1
    return PairCounts(span_m, len(pred.labels), len(gold.labels),
                      nuc_m, internal_pred, internal_gold,
                      rel_m, internal_pred, internal_gold)


@dataclass(frozen=True)
class DocScore:
    doc_id: str
    counts: PairCounts


@dataclass
class EvalReport:
    docs: list[DocScore]
    micro: dict[str, float]
    macro: dict[str, float]


def aggregate(doc_scores: list[DocScore]) -> EvalReport:
    """Micro pools counts over documents; macro averages per-document F1,
    skipping documents with nothing to count for a metric (e.g. single-EDU
    documents have no internal spans)."""
    if not doc_scores:
        raise ValueError("nothing to aggregate")
    pooled = PairCounts()
    for ds in doc_scores:
        pooled = pooled.add(ds.counts)
    micro = {m: f1(*pooled.triple(m)) for m in METRICS}
    macro = {}
    for m in METRICS:
        per_doc = []
        for ds in doc_scores:
            matched, pred_total, gold_total = ds.counts.triple(m)
            if pred_total + gold_total == 0:
                continue
            per_doc.append(f1(matched, pred_total, gold_total))
        macro[m] = sum(per_doc) / len(per_doc) if per_doc else 0.0
    return EvalReport(list(doc_scores), micro, macro)


def evaluate_trees(pairs: list[tuple[str, RstTree, RstTree]]) -> EvalReport:
    """pairs: (doc_id, predicted tree, gold tree)."""
    return aggregate([DocScore(doc_id, score_pair(pred, gold))
                      for doc_id, pred, gold in pairs])


def format_report(report: EvalReport, per_doc: bool = False) -> str:
    lines = []
    header = f"{'':12s} {'Span':>8s} {'Nuclearity':>11s} {'Relation':>9s}"
    lines.append(header)
    for name, table in (("micro", report.micro), ("macro", report.macro)):
        lines.append(f"{name:12s} {table['span']:8.1f} "
                     f"{table['nuclearity']:11.1f} {table['relation']:9.1f}")
    if per_doc:
        for ds in report.docs:
            cells = []
            for m in METRICS:
                matched, pred_total, gold_total = ds.counts.triple(m)
                cells.append(f"{f1(matched, pred_total, gold_total):.1f}"
                             f" ({matched}/{gold_total})")
            lines.append(f"{ds.doc_id:12s} " + " ".join(f"{c:>14s}" for c in cells))
    return "\n".join(lines)


def machine_rows(report: EvalReport) -> list[str]:
    """Tab-separated rows: doc_id, metric, matched, total, f1 (1 decimal)."""
    rows = []
    for ds in report.docs:
        for m in METRICS:
            matched, pred_total, gold_total = ds.counts.triple(m)
            rows.append(f"{ds.doc_id}\t{m}\t{matched}\t{gold_total}\t"
                        f"{f1(matched, pred_total, gold_total):.1f}")
    for name, table in (("micro", report.micro), ("macro", report.macro)):
        for m in METRICS:
            rows.append(f"<{name}>\t{m}\t-\t-\t{table[m]:.1f}")
    return rows
