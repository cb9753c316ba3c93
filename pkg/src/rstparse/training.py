"""Training loop: per-document margin losses, Adam updates, dev selection.

Three modes share one encoder pass per document: "chart" trains the global
margin loss, "transition" the shift-reduce action loss, and "joint" their
weighted sum.  Each epoch shuffles the training documents (seeded), updates
after every document, evaluates on dev, and records how many training
documents currently decode below their gold score (the missing-prediction
diagnostic).  The returned parameters are the snapshot with the best dev
score; ties keep the earlier epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .chart import ChartDiagnostics, DECODERS, NeuralOracle, chart_loss, count_missing
from .core import Document
from .data import CorpusVocabs, PretrainedEmbeddings
from .encoder import ModelParams, encode_document, make_dropout_masks
from .metrics import METRICS, EvalReport, evaluate_trees
from .ops import Tensor
from .transition import greedy_parse, transition_loss

MODES = ("chart", "transition", "joint")
PARSE_METHODS = ("exact", "partial", "complete", "transition")


@dataclass
class TrainConfig:
    max_epochs: int = 15
    lr: float = 0.001
    dropout: float = 0.2
    hidden: int = 200
    ff_hidden: int = 200
    word_dim: int = 300
    pos_dim: int = 300
    gamma: float = 1.0              # weight of the transition loss in joint mode
    mode: str = "chart"
    decoder: str = "partial"        # chart decoder used for training and eval
    seed: int = 0
    grad_clip: float | None = None
    selection: str = "relation_micro"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        metric, _, averaging = self.selection.rpartition("_")
        if metric not in METRICS or averaging not in ("micro", "macro"):
            raise ValueError(f"bad selection key {self.selection!r} "
                             "(want <metric>_<micro|macro>)")


def joint_loss(doc: Document, params: ModelParams, cfg: TrainConfig,
               masks=None) -> tuple[Tensor, ChartDiagnostics | None]:
    """Mode-dispatched loss over one shared document encoding."""
    if doc.gold is None:
        raise ValueError(f"document {doc.doc_id} has no gold tree")
    enc = encode_document(doc, params, masks)
    if cfg.mode == "transition":
        return transition_loss(doc, params, masks, enc), None
    loss, diag = chart_loss(doc, params, cfg.decoder, masks, enc)
    if cfg.mode == "chart" or cfg.gamma == 0.0:
        return loss, diag
    return ops.add(loss, ops.scale(transition_loss(doc, params, masks, enc),
                                   cfg.gamma)), diag


# --- optimizer ------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, arrays: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()})


def adam_step(arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              clip: float | None = None) -> None:
    """One in-place Adam update; arrays keep their identity (shared storage)."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name!r} "
                                     f"at step {state.t + 1}")
    if clip is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > clip:
            factor = clip / norm
            grads = {k: g * factor for k, g in grads.items()}
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        arrays[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# --- prediction and evaluation -------------------------------------------

def predict_tree(doc: Document, params: ModelParams, method: str):
    """Parse one document with a chart decoder or the greedy transition parser."""
    if method == "transition":
        return greedy_parse(doc, params)
    decode = DECODERS.get(method)
    if decode is None:
        raise ValueError(f"unknown parse method {method!r}; "
                         f"choose from {PARSE_METHODS}")
    enc = encode_document(doc, params)
    tree, _ = decode(doc.n, NeuralOracle(params, enc).tables(doc.n))
    return tree


def evaluate_model(docs, params: ModelParams, method: str) -> EvalReport:
    pairs = []
    for doc in docs:
        if doc.gold is None:
            raise ValueError(f"document {doc.doc_id} has no gold tree")
        pairs.append((doc.doc_id, predict_tree(doc, params, method), doc.gold))
    return evaluate_trees(pairs)


# --- the loop -------------------------------------------------------------

@dataclass
class EpochReport:
    epoch: int
    train_loss: float               # mean per-document loss
    micro: dict[str, float]         # dev F1 per metric
    macro: dict[str, float]
    missing: int                    # training docs decoding below gold score


REPORT_HEADER = ("epoch\ttrain_loss\tspan_micro\tnuclearity_micro\t"
                 "relation_micro\tspan_macro\tnuclearity_macro\t"
                 "relation_macro\tmissing")


def report_row(r: EpochReport) -> str:
    cells = [str(r.epoch), f"{r.train_loss:.6f}"]
    cells += [f"{r.micro[m]:.1f}" for m in METRICS]
    cells += [f"{r.macro[m]:.1f}" for m in METRICS]
    cells.append(str(r.missing))
    return "\t".join(cells)


def format_epoch(r: EpochReport) -> str:
    return (f"epoch {r.epoch:3d}  loss {r.train_loss:10.4f}  "
            f"dev S/N/R {r.micro['span']:5.1f}/{r.micro['nuclearity']:5.1f}/"
            f"{r.micro['relation']:5.1f} (micro)  missing {r.missing}")


@dataclass
class TrainResult:
    params: ModelParams
    reports: list[EpochReport]
    best_epoch: int
    best_score: float


def _selection_value(report: EvalReport, selection: str) -> float:
    metric, _, averaging = selection.rpartition("_")
    table = report.micro if averaging == "micro" else report.macro
    return table[metric]


def train(train_docs, dev_docs, vocabs: CorpusVocabs, cfg: TrainConfig,
          pretrained: PretrainedEmbeddings | None = None,
          log=None) -> TrainResult:
    cfg.validate()
    train_docs = list(train_docs)
    dev_docs = list(dev_docs)
    if not train_docs:
        raise ValueError("no training documents")
    if not dev_docs:
        raise ValueError("no dev documents")
    for doc in train_docs:
        if doc.gold is None:
            raise ValueError(f"training document {doc.doc_id} has no gold tree")

    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    params = ModelParams.init(vocabs.word, vocabs.pos, vocabs.rel,
                              np.random.default_rng(init_ss),
                              word_dim=cfg.word_dim, pos_dim=cfg.pos_dim,
                              hidden=cfg.hidden, ff_hidden=cfg.ff_hidden,
                              pretrained=pretrained)
    adam = AdamState.init(params.arrays)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    eval_method = "transition" if cfg.mode == "transition" else cfg.decoder

    reports: list[EpochReport] = []
    best_params = None
    best_score = float("-inf")
    best_epoch = -1
    for epoch in range(1, cfg.max_epochs + 1):
        total = 0.0
        for idx in shuffle_rng.permutation(len(train_docs)):
            doc = train_docs[idx]
            params.zero_grads()
            masks = make_dropout_masks(params, doc.n, cfg.dropout, drop_rng)
            loss, _ = joint_loss(doc, params, cfg, masks)
            total += loss.item()
            ops.backward(loss)
            adam_step(params.arrays, params.gradients(), adam, cfg.lr,
                      clip=cfg.grad_clip)
        dev_report = evaluate_model(dev_docs, params, eval_method)
        missing = count_missing(train_docs, params, cfg.decoder)
        report = EpochReport(epoch, total / len(train_docs),
                             dict(dev_report.micro), dict(dev_report.macro),
                             missing)
        reports.append(report)
        if log is not None:
            log(format_epoch(report))
        score = _selection_value(dev_report, cfg.selection)
        if score > best_score:
            best_score = score
            best_epoch = epoch
            best_params = params.copy()
    return TrainResult(best_params, reports, best_epoch, best_score)
