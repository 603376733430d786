"""Outcome classification, accuracy reports, and frame sampling.

Function annotations are scored frame-by-frame against manually labeled
ground truth with four outcomes: a frame showing a function is correct,
wrongly attributed, or missed; a frame without a function is correct or a
false detection. Block results are scaled by the dataset's function
accuracy, since block matching only runs where the function was right.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .errors import InsufficientFrames, SchemaViolation
from .matching import FunctionMatch
from .util import ratio_percent


class EvalOutcome(Enum):
    CORRECT_LABEL = "correct_label"
    WRONG_FUNCTION = "wrong_function"
    NO_FUNCTION_MISS = "no_function_miss"
    DETECTED_FUNCTION_FALSE = "detected_function_false"


@dataclass(frozen=True)
class GroundTruthLabel:
    frame_index: int
    entry: int | None  # None: the frame shows no function
    blocks: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.blocks is not None and self.entry is None:
            raise SchemaViolation("block list only allowed when a function is present")


def classify_function_outcome(pred: FunctionMatch, truth: GroundTruthLabel) -> EvalOutcome:
    if truth.entry is not None:
        if pred.entry is None:
            return EvalOutcome.NO_FUNCTION_MISS
        if pred.entry == truth.entry:
            return EvalOutcome.CORRECT_LABEL
        return EvalOutcome.WRONG_FUNCTION
    if pred.entry is None:
        return EvalOutcome.CORRECT_LABEL
    return EvalOutcome.DETECTED_FUNCTION_FALSE


# ---------------------------------------------------------------------------
# Function report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetFunctionCounts:
    with_total: int
    correct_with: int
    wrong: int
    missed: int
    without_total: int
    correct_without: int
    detected_false: int

    def __post_init__(self):
        if self.correct_with + self.wrong + self.missed != self.with_total:
            raise SchemaViolation("with-function outcome counts do not sum to their total")
        if self.correct_without + self.detected_false != self.without_total:
            raise SchemaViolation("without-function outcome counts do not sum to their total")

    @property
    def total(self) -> int:
        return self.with_total + self.without_total

    @property
    def correct(self) -> int:
        return self.correct_with + self.correct_without

    @property
    def accuracy(self) -> Fraction:
        return Fraction(self.correct, self.total) if self.total else Fraction(0)

    @property
    def accuracy_pct(self) -> float:
        return ratio_percent(self.correct, self.total)


@dataclass(frozen=True)
class EvalReport:
    datasets: dict[str, DatasetFunctionCounts]

    @property
    def overall(self) -> DatasetFunctionCounts:
        return DatasetFunctionCounts(
            with_total=sum(d.with_total for d in self.datasets.values()),
            correct_with=sum(d.correct_with for d in self.datasets.values()),
            wrong=sum(d.wrong for d in self.datasets.values()),
            missed=sum(d.missed for d in self.datasets.values()),
            without_total=sum(d.without_total for d in self.datasets.values()),
            correct_without=sum(d.correct_without for d in self.datasets.values()),
            detected_false=sum(d.detected_false for d in self.datasets.values()),
        )

    def to_obj(self) -> dict:
        def row(c: DatasetFunctionCounts) -> dict:
            return {
                "with_function": {
                    "total": c.with_total,
                    "correct_label": c.correct_with,
                    "wrong_function": c.wrong,
                    "no_function": c.missed,
                },
                "without_function": {
                    "total": c.without_total,
                    "correct_label": c.correct_without,
                    "detected_function": c.detected_false,
                },
                "overall_accuracy_pct": c.accuracy_pct,
            }

        return {
            "datasets": {name: row(c) for name, c in sorted(self.datasets.items())},
            "total": row(self.overall),
        }

    def render_table(self) -> str:
        header = (
            f"{'dataset':<10}{'with':>6}{'correct':>9}{'wrong':>7}{'missed':>8}"
            f"{'without':>9}{'correct':>9}{'detected':>10}{'accuracy':>10}"
        )
        lines = [header, "-" * len(header)]
        rows = list(sorted(self.datasets.items())) + [("total", self.overall)]
        for name, c in rows:
            lines.append(
                f"{name:<10}{c.with_total:>6}{c.correct_with:>9}{c.wrong:>7}{c.missed:>8}"
                f"{c.without_total:>9}{c.correct_without:>9}{c.detected_false:>10}"
                f"{c.accuracy_pct:>9.1f}%"
            )
        return "\n".join(lines)


def counts_from_outcomes(pairs: list[tuple[GroundTruthLabel, EvalOutcome]]) -> DatasetFunctionCounts:
    with_total = correct_with = wrong = missed = 0
    without_total = correct_without = detected = 0
    for truth, outcome in pairs:
        if truth.entry is not None:
            with_total += 1
            if outcome is EvalOutcome.CORRECT_LABEL:
                correct_with += 1
            elif outcome is EvalOutcome.WRONG_FUNCTION:
                wrong += 1
            elif outcome is EvalOutcome.NO_FUNCTION_MISS:
                missed += 1
            else:
                raise SchemaViolation(f"outcome {outcome} impossible for a with-function frame")
        else:
            without_total += 1
            if outcome is EvalOutcome.CORRECT_LABEL:
                correct_without += 1
            elif outcome is EvalOutcome.DETECTED_FUNCTION_FALSE:
                detected += 1
            else:
                raise SchemaViolation(f"outcome {outcome} impossible for a no-function frame")
    return DatasetFunctionCounts(
        with_total, correct_with, wrong, missed, without_total, correct_without, detected
    )


def summarize_function_eval(
    outcomes_by_dataset: dict[str, list[tuple[GroundTruthLabel, EvalOutcome]]],
) -> EvalReport:
    return EvalReport(
        datasets={name: counts_from_outcomes(pairs) for name, pairs in outcomes_by_dataset.items()}
    )


# ---------------------------------------------------------------------------
# Block report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockEvalRow:
    subject: str
    binary: str
    total: int
    correct: int
    incorrect: int
    undetected: int

    def __post_init__(self):
        if self.correct + self.incorrect + self.undetected != self.total:
            raise SchemaViolation("block outcome counts do not sum to the block total")


@dataclass(frozen=True)
class BlockEvalReport:
    rows: tuple[BlockEvalRow, ...]
    function_accuracy: Fraction

    def row_accuracy_pct(self, row: BlockEvalRow) -> float:
        from .util import round_half_up

        value = Fraction(row.correct, row.total) * self.function_accuracy * 100
        return float(round_half_up(value, 1))

    @property
    def total_row(self) -> BlockEvalRow:
        return BlockEvalRow(
            subject="total",
            binary="",
            total=sum(r.total for r in self.rows),
            correct=sum(r.correct for r in self.rows),
            incorrect=sum(r.incorrect for r in self.rows),
            undetected=sum(r.undetected for r in self.rows),
        )

    def to_obj(self) -> dict:
        def row(r: BlockEvalRow) -> dict:
            return {
                "subject": r.subject,
                "binary": r.binary,
                "total": r.total,
                "correct": r.correct,
                "incorrect": r.incorrect,
                "undetected": r.undetected,
                "overall_accuracy_pct": self.row_accuracy_pct(r),
            }

        return {
            "rows": [row(r) for r in self.rows],
            "total": row(self.total_row),
            # Convention: every row is scaled by the dataset's pooled
            # function accuracy, not a per-subject figure.
            "function_accuracy": float(self.function_accuracy),
        }

    def render_table(self) -> str:
        header = f"{'subject':<10}{'binary':<8}{'total':>7}{'correct':>9}{'incorrect':>11}{'undetected':>12}{'overall':>9}"
        lines = [header, "-" * len(header)]
        for r in list(self.rows) + [self.total_row]:
            lines.append(
                f"{r.subject:<10}{r.binary:<8}{r.total:>7}{r.correct:>9}{r.incorrect:>11}"
                f"{r.undetected:>12}{self.row_accuracy_pct(r):>8.1f}%"
            )
        lines.append(f"(block ratios scaled by function accuracy {float(self.function_accuracy):.4f})")
        return "\n".join(lines)


def summarize_block_eval(rows: list[BlockEvalRow], function_accuracy: Fraction) -> BlockEvalReport:
    return BlockEvalReport(rows=tuple(rows), function_accuracy=function_accuracy)


# ---------------------------------------------------------------------------
# Ground truth files
# ---------------------------------------------------------------------------


def read_groundtruth(path: str | Path) -> list[GroundTruthLabel]:
    """Read groundtruth.csv: frame_index, truth (none or 0x...), blocks (; separated)."""
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            truth = row["truth"].strip().lower()
            entry = None if truth in ("", "none") else int(truth, 16)
            blocks_field = (row.get("blocks") or "").strip()
            blocks = (
                tuple(int(b, 16) for b in blocks_field.split(";") if b) if blocks_field else None
            )
            labels.append(
                GroundTruthLabel(frame_index=int(row["frame_index"]), entry=entry, blocks=blocks)
            )
    return labels


def write_groundtruth_template(path: str | Path, frame_indices: list[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame_index", "truth", "blocks"])
        for i in frame_indices:
            writer.writerow([i, "", ""])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleRow:
    subject: str
    session_id: str
    frame_index: int


def stratified_sample(
    frames_by_subject: dict[str, list[tuple[str, int]]],
    per_subject_n: int,
    seed: int,
    exclusions: frozenset[tuple[str, int]] = frozenset(),
) -> list[SampleRow]:
    """Exactly `per_subject_n` frames per subject, deterministically.

    Each subject draws from its own Mersenne Twister seeded with
    (seed, subject), so the listing does not depend on subject iteration
    order. Frames listed in the tuning-exclusion set are never drawn.
    """
    out: list[SampleRow] = []
    for subject in sorted(frames_by_subject):
        eligible = sorted(
            (sid, idx) for sid, idx in frames_by_subject[subject] if (sid, idx) not in exclusions
        )
        if len(eligible) < per_subject_n:
            raise InsufficientFrames(
                f"subject {subject}: {len(eligible)} eligible frames < {per_subject_n} requested"
            )
        rng = random.Random(f"{seed}:{subject}")
        for sid, idx in sorted(rng.sample(eligible, per_subject_n)):
            out.append(SampleRow(subject=subject, session_id=sid, frame_index=idx))
    return out


def sample_listing_csv(rows: list[SampleRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject", "session_id", "frame_index"])
    for r in rows:
        writer.writerow([r.subject, r.session_id, r.frame_index])
    return buf.getvalue()
