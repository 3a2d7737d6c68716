"""Text-overlap metrics and the evaluation harness.

Tokenization everywhere is lowercase whitespace splitting. The LCS overlap
metric is the plain F1 of LCS length (symmetric, oracle-checkable); the
n-gram metric is brevity-penalized geometric-mean precision with add-one
smoothing on zero counts. Scores are computed over non-abstained pairs
only, with the abstention rate reported alongside.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import ParseError, UndefinedMetricError, ValidationError


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, O(len(a)*len(b)) dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[-1]))
        prev = curr
    return prev[-1]


def rouge_l(prediction: str, reference: str) -> float:
    """F1 of LCS length over prediction and reference token counts.

    Both empty scores 1.0; exactly one empty scores 0.0.
    """
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    lcs = lcs_length(pred, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(prediction: str, reference: str, max_n: int = 4) -> float:
    """Brevity-penalized geometric mean of modified n-gram precisions.

    Zero-count precisions are add-one smoothed, except that a prediction
    sharing no unigram with the reference short-circuits to 0.0. n runs up
    to min(max_n, prediction length).
    """
    pred = tokenize(prediction)
    ref = tokenize(reference)
    if not pred:
        return 0.0
    if not (set(pred) & set(ref)):
        return 0.0
    log_sum = 0.0
    orders = min(max_n, len(pred))
    for n in range(1, orders + 1):
        pred_counts = _ngrams(pred, n)
        ref_counts = _ngrams(ref, n)
        overlap = sum(min(count, ref_counts[gram]) for gram, count in pred_counts.items())
        total = sum(pred_counts.values())
        if overlap == 0:
            precision = 1.0 / (total + 1.0)
        else:
            precision = overlap / total
        log_sum += math.log(precision)
    geo_mean = math.exp(log_sum / orders)
    if len(pred) >= len(ref):
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - len(ref) / len(pred))
    return brevity * geo_mean


def f1(predicted_set: Iterable[str], reference_set: Iterable[str]) -> float:
    """Set-overlap F1 with the usual empty-set conventions."""
    pred = set(predicted_set)
    ref = set(reference_set)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    overlap = len(pred & ref)
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def macro_f1(pairs: list[tuple[str, str]]) -> float:
    """Unweighted mean of per-class F1 over (predicted label, true label) pairs."""
    if not pairs:
        raise UndefinedMetricError("macro F1 undefined over zero pairs")
    labels = sorted({p for p, _ in pairs} | {r for _, r in pairs})
    scores = []
    for label in labels:
        tp = sum(1 for p, r in pairs if p == label and r == label)
        fp = sum(1 for p, r in pairs if p == label and r != label)
        fn = sum(1 for p, r in pairs if p != label and r == label)
        if tp == 0:
            scores.append(0.0)
            continue
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        scores.append(2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


@dataclass
class EvalPair:
    id: str
    prediction: str
    references: list[str]
    abstained: bool = False


def accuracy(pairs: list[EvalPair]) -> float:
    """Exact match (whitespace/case-normalized) against any reference."""
    if not pairs:
        raise UndefinedMetricError("accuracy undefined over zero pairs")
    hits = sum(
        1
        for p in pairs
        if _normalize(p.prediction) in {_normalize(r) for r in p.references}
    )
    return hits / len(pairs)


def abstention_rate(pairs: list[EvalPair]) -> float:
    if not pairs:
        raise UndefinedMetricError("abstention rate undefined over zero pairs")
    return sum(1 for p in pairs if p.abstained) / len(pairs)


class Metric(str, Enum):
    ACCURACY = "accuracy"
    ROUGE_L = "rouge_l"
    F1 = "f1"
    BLEU = "bleu"


#: Which metrics each task label may be scored with.
TASK_METRICS: dict[str, frozenset[Metric]] = {
    "Question Answering": frozenset({Metric.ACCURACY}),
    "Cases Identification": frozenset({Metric.ROUGE_L}),
    "Article Recitation": frozenset({Metric.ROUGE_L}),
    "Element Extraction": frozenset({Metric.F1}),
    "Text Classification": frozenset({Metric.ACCURACY}),
    "Document Summarization": frozenset({Metric.BLEU}),
    "Contract Drafting": frozenset({Metric.ROUGE_L}),
    "Case Analysis": frozenset({Metric.ROUGE_L, Metric.ACCURACY}),
    "Judgment Prediction": frozenset({Metric.ROUGE_L}),
}


@dataclass
class EvalTask:
    name: str
    metric: Metric
    dataset_path: str

    def __post_init__(self):
        self.metric = Metric(self.metric)
        if self.name not in TASK_METRICS:
            raise ValidationError(f"unknown task {self.name!r}")
        if self.metric not in TASK_METRICS[self.name]:
            allowed = sorted(m.value for m in TASK_METRICS[self.name])
            raise ValidationError(
                f"task {self.name!r} is scored with {allowed}, not {self.metric.value!r}"
            )


@dataclass
class MetricReport:
    task: str
    metric: Metric
    score: float | None  # None when every pair abstained
    abstention_rate: float
    n: int

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "metric": self.metric.value,
            "score": self.score,
            "abstention_rate": self.abstention_rate,
            "n": self.n,
        }


def load_eval_records(path: str | Path) -> list[dict]:
    """Load {id, input, references[, label]} JSONL records, naming bad lines."""
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON ({exc})", line=lineno) from exc
        for key in ("id", "input", "references"):
            if key not in record:
                raise ParseError(f"line {lineno}: record {record.get('id', '?')!r} missing {key!r}", line=lineno)
        if not isinstance(record["references"], list) or not record["references"]:
            raise ParseError(f"line {lineno}: references must be a nonempty list", line=lineno)
        records.append(record)
    return records


def _split_set(text: str) -> set[str]:
    return {part.strip().casefold() for part in text.split(";") if part.strip()}


def score_pairs(metric: Metric, pairs: list[EvalPair]) -> float:
    """Score non-abstained pairs with the task metric (mean over pairs)."""
    if not pairs:
        raise UndefinedMetricError(f"{metric.value} undefined over zero pairs")
    if metric is Metric.ACCURACY:
        return accuracy(pairs)
    per_pair: list[float] = []
    for pair in pairs:
        if metric is Metric.ROUGE_L:
            per_pair.append(max(rouge_l(pair.prediction, ref) for ref in pair.references))
        elif metric is Metric.BLEU:
            per_pair.append(max(bleu(pair.prediction, ref) for ref in pair.references))
        else:  # set F1; references form the reference set
            per_pair.append(f1(_split_set(pair.prediction), {r.strip().casefold() for r in pair.references}))
    return sum(per_pair) / len(per_pair)


def run_eval(
    task: EvalTask,
    pipeline: Callable[[str], tuple[str, bool]],
    out_path: str | Path | None = None,
) -> MetricReport:
    """Score a pipeline over the task's dataset.

    ``pipeline`` maps input text to (prediction, abstained). Per-pair
    results are persisted to out_path (JSONL) for audit when given.
    """
    records = load_eval_records(task.dataset_path)
    pairs: list[EvalPair] = []
    for record in records:
        prediction, abstained = pipeline(record["input"])
        pairs.append(
            EvalPair(
                id=str(record["id"]),
                prediction=prediction,
                references=[str(r) for r in record["references"]],
                abstained=abstained,
            )
        )
    if not pairs:
        raise UndefinedMetricError("dataset contains no records")
    scored = [p for p in pairs if not p.abstained]
    score = score_pairs(task.metric, scored) if scored else None
    report = MetricReport(
        task=task.name,
        metric=task.metric,
        score=score,
        abstention_rate=abstention_rate(pairs),
        n=len(pairs),
    )
    if out_path is not None:
        lines = [
            json.dumps(
                {
                    "id": p.id,
                    "prediction": p.prediction,
                    "references": p.references,
                    "abstained": p.abstained,
                },
                ensure_ascii=False,
            )
            for p in sorted(pairs, key=lambda p: p.id)
        ]
        lines.append(json.dumps({"report": report.to_dict()}, ensure_ascii=False))
        Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report
