"""Corpus evaluation: similarity tables, histograms, robustness reports.

Scores are exact rationals end to end; only CSV export rounds, to two
decimals.  Aggregation is sequential and keyed by sorted label, so a
given corpus always produces byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .imaging import ImageBuffer, TransformSpec, apply_transform, load_image_path, resize_box, to_luminance
from .phash import HashAlgorithm, MatchPolicy, PerceptualHash, ahash, hamming, is_match, pdq


class EmptyInputError(ValueError):
    """Raised when an operation needs at least one element and got none."""


def hash_image(img: ImageBuffer, algorithm: HashAlgorithm) -> PerceptualHash:
    """Hash an image under the given algorithm (PDQ quality discarded)."""
    if algorithm is HashAlgorithm.AHASH64:
        return ahash(img)
    return pdq(img).hash


@dataclass(frozen=True)
class SimilarityScore:
    """Perceptual difference of one image pair under one hash metric."""

    metric_algorithm: HashAlgorithm
    pd: Fraction

    @property
    def similarity_percent(self) -> Fraction:
        """(1 - pd) * 100, exact."""
        return (1 - self.pd) * 100


@dataclass(frozen=True)
class TableCell:
    mean: Fraction
    max: Fraction


@dataclass(frozen=True)
class TableRow:
    label: str
    cells: tuple[TableCell, ...]
    average: TableCell  # across metrics: mean of means, mean of maxes


@dataclass(frozen=True)
class SimilarityTable:
    metrics: tuple[HashAlgorithm, ...]
    rows: tuple[TableRow, ...]


@dataclass(frozen=True)
class Histogram:
    bin_count: int
    edges: tuple[Fraction, ...]  # bin_count + 1 uniform edges over [0, 100]
    counts: tuple[int, ...]


@dataclass(frozen=True)
class SemanticDistanceConfig:
    """Semantic distance: normalized L1 on common 64x64 luminance.

    Pairs with distance strictly above epsilon count as semantically
    unrelated for distinctness reporting.
    """

    epsilon: Fraction = field(default=Fraction(1, 4))

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


def semantic_distance(a: ImageBuffer, b: ImageBuffer) -> Fraction:
    """Mean absolute luma difference after resize to 64x64, in [0, 1]."""
    xa = resize_box(to_luminance(a), 64, 64).to_array().astype(int)
    xb = resize_box(to_luminance(b), 64, 64).to_array().astype(int)
    total = int(abs(xa - xb).sum())
    return Fraction(total, 64 * 64 * 255)


def perceptual_similarity(
    a: ImageBuffer, b: ImageBuffer, metric: HashAlgorithm
) -> SimilarityScore:
    """Hash both images under one metric and report (1 - delta) * 100."""
    d = hamming(hash_image(a, metric), hash_image(b, metric))
    return SimilarityScore(metric_algorithm=metric, pd=d.normalized)


def evaluate_pairs(
    pairs: list[tuple[str, ImageBuffer, ImageBuffer]],
    metrics: list[HashAlgorithm],
) -> SimilarityTable:
    """Aggregate pair similarities into a labeled mean/max table.

    Pairs sharing a label form one row; rows are sorted by label.  The
    trailing average cell holds the arithmetic mean across the row's
    metric means (and maxes).
    """
    if not pairs:
        raise EmptyInputError("need at least one pair")
    if not metrics:
        raise EmptyInputError("need at least one metric")

    by_label: dict[str, list[tuple[ImageBuffer, ImageBuffer]]] = {}
    for label, a, b in pairs:
        by_label.setdefault(label, []).append((a, b))

    rows = []
    for label in sorted(by_label):
        cells = []
        for metric in metrics:
            scores = [
                perceptual_similarity(a, b, metric).similarity_percent
                for a, b in by_label[label]
            ]
            cells.append(TableCell(mean=sum(scores) / len(scores), max=max(scores)))
        average = TableCell(
            mean=sum(c.mean for c in cells) / len(cells),
            max=sum(c.max for c in cells) / len(cells),
        )
        rows.append(TableRow(label=label, cells=tuple(cells), average=average))
    return SimilarityTable(metrics=tuple(metrics), rows=tuple(rows))


def histogram(scores: list, bins: int) -> Histogram:
    """Uniform-width histogram of similarity percentages over [0, 100].

    Bins are half-open [lo, hi) except the last, which includes 100.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    edges = tuple(Fraction(100 * i, bins) for i in range(bins + 1))
    counts = [0] * bins
    for s in scores:
        v = Fraction(s)
        if not 0 <= v <= 100:
            raise ValueError(f"score {s} outside [0, 100]")
        idx = (v.numerator * bins) // (v.denominator * 100)
        counts[min(idx, bins - 1)] += 1
    return Histogram(bin_count=bins, edges=edges, counts=tuple(counts))


@dataclass(frozen=True)
class TransformStats:
    transform: TransformSpec
    min: Fraction
    median: Fraction
    mean: Fraction
    max: Fraction


@dataclass(frozen=True)
class RobustnessReport:
    algorithm: HashAlgorithm
    entries: tuple[TransformStats, ...]


def robustness_report(
    corpus: list[ImageBuffer],
    transforms: list[TransformSpec],
    algorithm: HashAlgorithm,
) -> RobustnessReport:
    """Distance statistics between each image and its transformed copy."""
    if not corpus:
        raise EmptyInputError("need a non-empty corpus")
    originals = [hash_image(img, algorithm) for img in corpus]
    entries = []
    for t in transforms:
        deltas = [
            hamming(h, hash_image(apply_transform(img, t), algorithm)).normalized
            for img, h in zip(corpus, originals)
        ]
        entries.append(
            TransformStats(
                transform=t,
                min=min(deltas),
                median=statistics.median(deltas),
                mean=sum(deltas) / len(deltas),
                max=max(deltas),
            )
        )
    return RobustnessReport(algorithm=algorithm, entries=tuple(entries))


@dataclass(frozen=True)
class DistinctnessReport:
    algorithm: HashAlgorithm
    qualifying_pairs: int
    collisions: int

    @property
    def rate(self) -> Fraction:
        """Collision fraction; 0 when no pair qualifies."""
        if self.qualifying_pairs == 0:
            return Fraction(0)
        return Fraction(self.collisions, self.qualifying_pairs)


def distinctness_report(
    corpus: list[ImageBuffer],
    algorithm: HashAlgorithm,
    policy: MatchPolicy | None = None,
    semantic: SemanticDistanceConfig | None = None,
) -> DistinctnessReport:
    """Match rate over semantically unrelated pairs (distance > epsilon)."""
    if len(corpus) < 2:
        raise EmptyInputError("need at least two images")
    if policy is None:
        policy = MatchPolicy()
    if semantic is None:
        semantic = SemanticDistanceConfig()
    hashes = [hash_image(img, algorithm) for img in corpus]
    qualifying = 0
    collisions = 0
    for i in range(len(corpus)):
        for j in range(i + 1, len(corpus)):
            if semantic_distance(corpus[i], corpus[j]) > semantic.epsilon:
                qualifying += 1
                if is_match(hashes[i], hashes[j], policy):
                    collisions += 1
    return DistinctnessReport(
        algorithm=algorithm, qualifying_pairs=qualifying, collisions=collisions
    )


# ---------------------------------------------------------------------------
# CSV export and the pairs manifest


def _fmt2(v) -> str:
    """Exact half-up rounding to two decimals, '.' separator."""
    f = Fraction(v)
    cents = (200 * f.numerator + f.denominator) // (2 * f.denominator)
    return "%d.%02d" % divmod(cents, 100)


def export_csv(obj) -> bytes:
    """Serialize a SimilarityTable or Histogram as RFC-4180 CSV."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\r\n")
    if isinstance(obj, SimilarityTable):
        header = ["label"]
        for m in obj.metrics:
            header += [f"{m.prefix}_mean", f"{m.prefix}_max"]
        header += ["avg_mean", "avg_max"]
        w.writerow(header)
        for row in obj.rows:
            fields = [row.label]
            for cell in row.cells:
                fields += [_fmt2(cell.mean), _fmt2(cell.max)]
            fields += [_fmt2(row.average.mean), _fmt2(row.average.max)]
            w.writerow(fields)
    elif isinstance(obj, Histogram):
        w.writerow(["bin_start", "bin_end", "count"])
        for i in range(obj.bin_count):
            w.writerow([_fmt2(obj.edges[i]), _fmt2(obj.edges[i + 1]), obj.counts[i]])
    else:
        raise TypeError(f"cannot export {type(obj).__name__} as CSV")
    return out.getvalue().encode("utf-8")


def load_pairs_manifest(path) -> list[tuple[str, ImageBuffer, ImageBuffer]]:
    """Read a `label,pathA,pathB` manifest; paths resolve relative to it."""
    base = Path(path).parent
    pairs = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected label,pathA,pathB")
            label, pa, pb = (c.strip() for c in row)
            pairs.append(
                (label, load_image_path(base / pa), load_image_path(base / pb))
            )
    return pairs
