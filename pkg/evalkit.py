"""
Composition embedding evaluation: CDA-1 / CDA-2 triplet accuracy with seeded
sampling and multi-seed aggregation, plus Davies-Bouldin and silhouette
clustering metrics over labeled embedding sets.

Triplet sampling uses SplitMix64 so that any implementation can reproduce the
exact triplet lists:

    state = seed mod 2**64
    next():
        state = (state + 0x9E3779B97F4A7C15) mod 2**64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
        return z ^ (z >> 31)

One generator is created per seed. Anchors are visited in sorted id order; an
anchor with candidate positives P and negatives N (both sorted by id) draws
per_anchor triplets, each as p = P[next() mod |P|] followed by
n = N[next() mod |N|]. Anchors without any positive or negative are skipped
and consume no random numbers.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import davies_bouldin_score, silhouette_score

from errors import (
    ClusteringError,
    EmbeddingFormatError,
    LabelFormatError,
    NoValidTripletsError,
    ShapeMismatchError,
    TripletError,
)
from models import DEFAULT_SEEDS, CdaMode, CdaReport, SeedResult

logger = logging.getLogger(__name__)

KUPCP_CLASSES = (
    "RuleOfThirds", "Center", "Horizontal", "Symmetric", "Diagonal",
    "Curved", "Vertical", "Triangle", "Pattern",
)
CV_WARNING_THRESHOLD = 0.03
DEFAULT_PER_ANCHOR = 12

_MASK64 = (1 << 64) - 1


def _class_key(name: str) -> str:
    return re.sub(r"[-_\s]", "", name).lower()


_KUPCP_BY_KEY = {_class_key(name): name for name in KUPCP_CLASSES}


class SplitMix64:
    """64-bit deterministic generator; see the module docstring for the exact recurrence."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        return self.next() % bound


@dataclass(frozen=True)
class LabeledEntry:
    id: str
    embedding: np.ndarray
    composition: Tuple[str, ...]
    semantic: frozenset = field(default_factory=frozenset)


class Triplet(NamedTuple):
    anchor_id: str
    positive_id: str
    negative_id: str


class LabeledEmbeddingSet:
    """Entries sorted by id, all sharing one embedding dimensionality."""

    def __init__(self, entries: Iterable[LabeledEntry]):
        self.entries: List[LabeledEntry] = sorted(entries, key=lambda e: e.id)
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            duplicates = sorted({i for i in ids if ids.count(i) > 1})
            raise EmbeddingFormatError(f"duplicate ids in embedding set: {', '.join(duplicates)}")
        dims = {e.embedding.shape for e in self.entries}
        if len(dims) > 1:
            raise ShapeMismatchError(f"embeddings differ in shape: {sorted(dims)}")
        self.index: Dict[str, int] = {image_id: i for i, image_id in enumerate(ids)}
        self.matrix = (np.stack([e.embedding for e in self.entries]).astype(np.float64)
                       if self.entries else np.zeros((0, 0)))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> List[str]:
        return [e.id for e in self.entries]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1]) if self.entries else 0

    def primary_labels(self) -> List[str]:
        return [e.composition[0] for e in self.entries]


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _parser_line(error: Exception) -> Optional[int]:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def _parse_value(text: str) -> float:
    # float() is correctly rounded, so shortest round-trip text reads back exactly
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_embeddings(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """
    Parse "id,v1,...,vD" lines. Blank lines are skipped.

    Raises:
        EmbeddingFormatError: ragged rows, non-numeric values or duplicate ids,
            with the offending line number
    """
    source = Path(path)
    if not source.is_file():
        raise EmbeddingFormatError(f"embedding file not found: {source}")
    try:
        frame = pd.read_csv(source, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise EmbeddingFormatError(f"{source}: no embeddings found")
    except pd.errors.ParserError as e:
        raise EmbeddingFormatError(f"ragged row in {source.name} ({e})", _parser_line(e))
    except UnicodeDecodeError as e:
        raise EmbeddingFormatError(f"{source}: not valid UTF-8 ({e})")

    if frame.shape[1] < 2:
        raise EmbeddingFormatError(f"{source}: rows need an id and at least one value", 1)

    missing = frame.isna() | (frame == "")
    blank = missing.all(axis=1)
    frame, missing = frame[~blank], missing[~blank]
    if frame.empty:
        raise EmbeddingFormatError(f"{source}: no embeddings found")

    dim = frame.shape[1] - 1
    ragged = missing.any(axis=1)
    if ragged.any():
        row = ragged.idxmax()
        found = int((~missing.loc[row]).sum()) - 1
        raise EmbeddingFormatError(f"ragged row: expected {dim} values, found {found}", int(row) + 1)

    matrix = frame.iloc[:, 1:].apply(lambda column: column.map(_parse_value)).to_numpy(dtype=np.float64)
    bad = ~np.isfinite(matrix)
    if bad.any():
        position, column = np.argwhere(bad)[0]
        row = frame.index[position]
        text = frame.iloc[position, column + 1]
        raise EmbeddingFormatError(f"non-numeric value '{text}' in column {column + 2}", int(row) + 1)

    ids = frame.iloc[:, 0].str.strip()
    duplicated = ids.duplicated()
    if duplicated.any():
        row = duplicated.idxmax()
        raise EmbeddingFormatError(f"duplicate id '{ids.loc[row]}'", int(row) + 1)

    embeddings = {image_id: matrix[i] for i, image_id in enumerate(ids)}
    logger.info(f"Loaded {len(embeddings)} embeddings of dimension {dim} from {source.name}")
    return embeddings


def _split_names(cell: str) -> List[str]:
    names = []
    for name in (part.strip() for part in cell.split(";")):
        if name and name not in names:
            names.append(name)
    return names


def canonical_composition(name: str, free_classes: bool = False) -> Optional[str]:
    """KUPCP spelling of a composition class, or None when unknown in strict mode."""
    if free_classes:
        return name
    return _KUPCP_BY_KEY.get(_class_key(name))


def load_labels(path: Union[str, Path], free_classes: bool = False
                ) -> Dict[str, Tuple[Tuple[str, ...], frozenset]]:
    """
    Parse "id<TAB>comp1;comp2<TAB>sem1;sem2" lines. The semantic column may be
    empty or absent. Composition classes keep their listed order.
    """
    source = Path(path)
    if not source.is_file():
        raise LabelFormatError(f"label file not found: {source}")
    try:
        lines = source.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise LabelFormatError(f"{source}: not valid UTF-8 ({e})")
    if not any(text.strip() for text in lines):
        raise LabelFormatError(f"{source}: no labels found")

    labels: Dict[str, Tuple[Tuple[str, ...], frozenset]] = {}
    for line, text in enumerate(lines, start=1):
        if not text.strip() or text.lstrip().startswith("#"):
            continue
        fields = text.split("\t")
        if len(fields) > 3:
            raise LabelFormatError(f"expected at most 3 tab-separated columns, found {len(fields)}", line)
        image_id = fields[0].strip()
        if not image_id:
            raise LabelFormatError("missing image id", line)
        if len(fields) < 2:
            raise LabelFormatError(f"missing composition column for '{image_id}'", line)
        if image_id in labels:
            raise LabelFormatError(f"duplicate id '{image_id}'", line)

        composition = []
        for name in _split_names(fields[1]):
            canonical = canonical_composition(name, free_classes)
            if canonical is None:
                raise LabelFormatError(f"unknown composition class '{name}' (use --free-classes to allow it)", line)
            if canonical not in composition:
                composition.append(canonical)
        if not composition:
            raise LabelFormatError(f"empty composition set for '{image_id}'", line)

        semantic = fields[2] if len(fields) == 3 else ""
        labels[image_id] = (tuple(composition), frozenset(_split_names(semantic)))

    logger.info(f"Loaded labels for {len(labels)} images from {source.name}")
    return labels


def build_embedding_set(embeddings: Dict[str, np.ndarray],
                        labels: Dict[str, Tuple[Tuple[str, ...], frozenset]]) -> LabeledEmbeddingSet:
    """Join embeddings with labels; unlabeled embeddings are left out."""
    unlabeled = sorted(set(embeddings) - set(labels))
    if unlabeled:
        logger.warning(f"{len(unlabeled)} embeddings have no labels and are ignored (first: {unlabeled[0]})")
    entries = [
        LabeledEntry(image_id, vector, labels[image_id][0], labels[image_id][1])
        for image_id, vector in embeddings.items() if image_id in labels
    ]
    return LabeledEmbeddingSet(entries)


# ---------------------------------------------------------------------------
# triplets and CDA
# ---------------------------------------------------------------------------

def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"vectors differ in dimension: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)))


def candidate_pools(data: LabeledEmbeddingSet, mode: CdaMode) -> List[Tuple[List[str], List[str]]]:
    """(positives, negatives) per anchor, in anchor order; both lists sorted by id."""
    compositions = [set(e.composition) for e in data.entries]
    pools = []
    for i, anchor in enumerate(data.entries):
        positives, negatives = [], []
        for j, other in enumerate(data.entries):
            if i == j:
                continue
            if compositions[i] & compositions[j]:
                positives.append(other.id)
            elif mode == "cda1" or anchor.semantic & other.semantic:
                negatives.append(other.id)
        pools.append((positives, negatives))
    return pools


def sample_triplets(data: LabeledEmbeddingSet, mode: CdaMode, seed: int,
                    per_anchor: int = DEFAULT_PER_ANCHOR) -> List[Triplet]:
    """Seeded triplet draw; a pure function of (ids, labels, mode, seed, per_anchor)."""
    if len(data) == 0:
        raise NoValidTripletsError("embedding set is empty")
    if mode not in ("cda1", "cda2"):
        raise ValueError(f"unknown CDA mode '{mode}'")

    rng = SplitMix64(seed)
    triplets: List[Triplet] = []
    starved = 0
    for anchor, (positives, negatives) in zip(data.entries, candidate_pools(data, mode)):
        if not positives or not negatives:
            starved += 1
            continue
        for _ in range(per_anchor):
            positive = positives[rng.below(len(positives))]
            negative = negatives[rng.below(len(negatives))]
            triplets.append(Triplet(anchor.id, positive, negative))

    if starved:
        logger.info(f"{starved} of {len(data)} anchors have no valid {mode} positive or negative")
    if not triplets:
        raise NoValidTripletsError(f"no valid {mode} triplets in a set of {len(data)} images")
    return triplets


def cda(data: LabeledEmbeddingSet, triplets: Sequence[Triplet]) -> float:
    """Fraction of triplets with d(a, p) < d(a, n); ties count as failures."""
    if not triplets:
        raise NoValidTripletsError("no triplets to evaluate")
    try:
        index = np.array([[data.index[t.anchor_id], data.index[t.positive_id], data.index[t.negative_id]]
                          for t in triplets])
    except KeyError as e:
        raise TripletError(f"triplet references unknown id {e.args[0]!r}")
    x = data.matrix
    d_ap = np.linalg.norm(x[index[:, 0]] - x[index[:, 1]], axis=1)
    d_an = np.linalg.norm(x[index[:, 0]] - x[index[:, 2]], axis=1)
    return float(np.mean(d_ap < d_an))


def cda_multiseed(data: LabeledEmbeddingSet, mode: CdaMode,
                  seeds: Sequence[int] = tuple(DEFAULT_SEEDS),
                  per_anchor: int = DEFAULT_PER_ANCHOR) -> CdaReport:
    """Sample and score once per seed; mean, population std and cv = std / mean."""
    results = []
    for seed in seeds:
        triplets = sample_triplets(data, mode, seed, per_anchor)
        results.append(SeedResult(seed=seed, accuracy=cda(data, triplets), n_triplets=len(triplets)))

    accuracies = np.array([r.accuracy for r in results])
    mean = float(accuracies.mean())
    std = float(accuracies.std())
    cv = std / mean if mean > 0 else 0.0
    if cv >= CV_WARNING_THRESHOLD:
        logger.warning(f"{mode} coefficient of variation {cv:.2%} is at or above {CV_WARNING_THRESHOLD:.0%}")
    return CdaReport(mode=mode, seeds=results, mean=mean, std=std, cv=cv)


# ---------------------------------------------------------------------------
# clustering metrics
# ---------------------------------------------------------------------------

def _partition(data: LabeledEmbeddingSet) -> Tuple[np.ndarray, np.ndarray, int]:
    labels = data.primary_labels()
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ClusteringError(f"clustering metrics need at least 2 classes, found {len(classes)}")
    codes = np.array([classes.index(label) for label in labels])
    return data.matrix, codes, len(classes)


def davies_bouldin(data: LabeledEmbeddingSet) -> float:
    """Davies-Bouldin index over first-listed composition classes (lower is better)."""
    x, codes, n_classes = _partition(data)
    if n_classes == len(codes):
        return 0.0  # every cluster is a singleton, all dispersions vanish
    return float(davies_bouldin_score(x, codes))


def silhouette(data: LabeledEmbeddingSet) -> float:
    """Mean silhouette over first-listed composition classes; singletons and 0/0 score 0."""
    x, codes, n_classes = _partition(data)
    if n_classes == len(codes):
        return 0.0
    return float(silhouette_score(x, codes, metric="euclidean"))
