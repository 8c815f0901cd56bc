"""Loading, validation, and gold/unlabeled splitting of ranked-annotation records.

Input files hold one query per record: a query id, a split marker, and exactly
K ranked documents.  Each document carries either a numeric relevance
probability or a verbal verdict with a confidence phrase, plus an optional
human gold label.  Both JSONL (one JSON object per line) and CSV (one document
per row) layouts are accepted and can be written back losslessly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

GOLD = "gold"
UNLABELED = "unlabeled"

RELEVANT = "relevant"
IRRELEVANT = "irrelevant"

# Canonical verbal confidence phrases, weakest to strongest.
CONFIDENCE_LEVELS = (
    "About Even",
    "Slightly Better than Even",
    "Probably",
    "Pretty Good Chance",
    "Highly Likely",
    "Almost Certain",
)
_CONFIDENCE_BY_LOWER = {c.lower(): c for c in CONFIDENCE_LEVELS}

_CSV_COLUMNS = (
    "query_id",
    "split",
    "doc_id",
    "rank",
    "prob",
    "verdict",
    "confidence",
    "gold_relevant",
)


class DatasetError(ValueError):
    """Raised for malformed or inconsistent input records."""


def canonical_confidence(label: str) -> str:
    """Return the canonical spelling of a confidence phrase, matched case-insensitively."""
    canon = _CONFIDENCE_BY_LOWER.get(str(label).strip().lower())
    if canon is None:
        raise DatasetError(f"unknown confidence label {label!r}")
    return canon


@dataclass(frozen=True, slots=True)
class VerbalVerdict:
    """A relevance call ("relevant" or "irrelevant") with a verbal confidence phrase."""

    verdict: str
    confidence: str

    def __post_init__(self):
        if self.verdict not in (RELEVANT, IRRELEVANT):
            raise DatasetError(f"verdict must be {RELEVANT!r} or {IRRELEVANT!r}, got {self.verdict!r}")
        if self.confidence not in CONFIDENCE_LEVELS:
            raise DatasetError(f"unknown confidence label {self.confidence!r}")

    @classmethod
    def parse(cls, verdict: str, confidence: str) -> "VerbalVerdict":
        """Build a verdict from raw strings, normalizing case."""
        return cls(str(verdict).strip().lower(), canonical_confidence(confidence))


@dataclass(frozen=True, slots=True)
class RankedDoc:
    """One retrieved document: rank position plus exactly one annotation form.

    ``prob`` and ``verdict`` are mutually exclusive.  ``gold_relevant`` is the
    human label; it is required on gold-split queries and optional elsewhere.
    """

    doc_id: str
    rank: int
    prob: float | None = None
    verdict: VerbalVerdict | None = None
    gold_relevant: bool | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise DatasetError(f"doc {self.doc_id!r}: rank must be >= 1, got {self.rank}")
        if (self.prob is None) == (self.verdict is None):
            raise DatasetError(
                f"doc {self.doc_id!r}: exactly one of prob and verdict/confidence is required"
            )
        if self.prob is not None and not 0.0 <= self.prob <= 1.0:
            raise DatasetError(f"doc {self.doc_id!r}: prob {self.prob} outside [0, 1]")


@dataclass(frozen=True, slots=True)
class QueryInstance:
    """A query with its ranked documents, stored in rank order."""

    query_id: str
    split: str
    docs: tuple[RankedDoc, ...]

    def __post_init__(self):
        if self.split not in (GOLD, UNLABELED):
            raise DatasetError(f"query {self.query_id!r}: unknown split {self.split!r}")
        object.__setattr__(self, "docs", tuple(sorted(self.docs, key=lambda d: d.rank)))
        ranks = [d.rank for d in self.docs]
        if ranks != list(range(1, len(ranks) + 1)):
            raise DatasetError(
                f"query {self.query_id!r}: ranks must cover 1..{len(ranks)} exactly, got {ranks}"
            )
        if self.split == GOLD:
            missing = [d.doc_id for d in self.docs if d.gold_relevant is None]
            if missing:
                raise DatasetError(
                    f"gold query {self.query_id!r}: missing gold_relevant for docs {missing}"
                )

    @property
    def k(self) -> int:
        return len(self.docs)

    def fully_labeled(self) -> bool:
        return all(d.gold_relevant is not None for d in self.docs)

    def gold_bits(self) -> np.ndarray:
        """Gold labels as a 0/1 vector in rank order."""
        if not self.fully_labeled():
            raise DatasetError(f"query {self.query_id!r} is not fully gold-labeled")
        return np.array([1.0 if d.gold_relevant else 0.0 for d in self.docs])


@dataclass
class Dataset:
    """A validated collection of gold and unlabeled queries, all with exactly k docs."""

    k: int
    gold: list[QueryInstance]
    unlabeled: list[QueryInstance]

    def __post_init__(self):
        if self.k < 1:
            raise DatasetError(f"k must be >= 1, got {self.k}")
        seen: set[str] = set()
        for q in self.queries():
            if q.query_id in seen:
                raise DatasetError(f"duplicate query_id {q.query_id!r}")
            seen.add(q.query_id)
            if q.k != self.k:
                raise DatasetError(
                    f"query {q.query_id!r} has {q.k} docs, expected exactly {self.k}"
                )

    @property
    def n(self) -> int:
        """Number of gold queries."""
        return len(self.gold)

    @property
    def N(self) -> int:
        """Number of unlabeled queries."""
        return len(self.unlabeled)

    def queries(self) -> list[QueryInstance]:
        return [*self.gold, *self.unlabeled]


def load_dataset(path: str | Path, k: int) -> Dataset:
    """Read a JSONL or CSV annotation file and validate it against the expected k.

    The format is chosen by extension: ``.csv`` for CSV, anything else is
    treated as JSONL.  Queries with a doc count other than k, duplicate or
    gapped ranks, out-of-range probabilities, or missing gold labels on the
    gold split are rejected with the offending line or query named.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such input file: {path}")
    if path.suffix.lower() == ".csv":
        queries = _read_csv(path)
    else:
        queries = _read_jsonl(path)
    gold = [q for q in queries if q.split == GOLD]
    unlabeled = [q for q in queries if q.split == UNLABELED]
    return Dataset(k=k, gold=gold, unlabeled=unlabeled)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to disk; the format follows the extension like load_dataset."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _write_csv(dataset, path)
    else:
        _write_jsonl(dataset, path)


def _doc_from_mapping(rec: dict, where: str) -> RankedDoc:
    try:
        doc_id = str(rec["doc_id"])
        rank = int(rec["rank"])
    except KeyError as exc:
        raise DatasetError(f"{where}: document missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError):
        raise DatasetError(f"{where}: document rank is not an integer") from None
    prob = rec.get("prob")
    verdict = rec.get("verdict")
    confidence = rec.get("confidence")
    if (verdict is None) != (confidence is None):
        raise DatasetError(f"{where}: doc {doc_id!r} has verdict without confidence (or vice versa)")
    parsed = VerbalVerdict.parse(verdict, confidence) if verdict is not None else None
    gold_rel = rec.get("gold_relevant")
    if gold_rel is not None and not isinstance(gold_rel, bool):
        raise DatasetError(f"{where}: doc {doc_id!r} gold_relevant must be a boolean")
    try:
        return RankedDoc(
            doc_id=doc_id,
            rank=rank,
            prob=float(prob) if prob is not None else None,
            verdict=parsed,
            gold_relevant=gold_rel,
        )
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def _query_from_record(rec: dict, where: str) -> QueryInstance:
    try:
        query_id = str(rec["query_id"])
        split = str(rec["split"])
        docs = rec["docs"]
    except KeyError as exc:
        raise DatasetError(f"{where}: missing field {exc.args[0]!r}") from None
    if not isinstance(docs, list) or not docs:
        raise DatasetError(f"{where}: docs must be a non-empty list")
    parsed = tuple(_doc_from_mapping(d, where) for d in docs)
    try:
        return QueryInstance(query_id=query_id, split=split, docs=parsed)
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def _read_jsonl(path: Path) -> list[QueryInstance]:
    queries: list[QueryInstance] = []
    first_line: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name} line {lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON ({exc.msg})") from None
            q = _query_from_record(rec, where)
            if q.query_id in first_line:
                raise DatasetError(
                    f"{where}: duplicate query_id {q.query_id!r}"
                    f" (first seen on line {first_line[q.query_id]})"
                )
            first_line[q.query_id] = lineno
            queries.append(q)
    return queries


def _parse_csv_bool(text: str, where: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1"):
        return True
    if low in ("false", "0"):
        return False
    raise DatasetError(f"{where}: gold_relevant must be true/false, got {text!r}")


def _read_csv(path: Path) -> list[QueryInstance]:
    grouped: dict[str, dict] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in _CSV_COLUMNS if c not in header]
        if missing:
            raise DatasetError(f"{path.name}: missing CSV columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path.name} row {lineno}"
            qid = (row.get("query_id") or "").strip()
            if not qid:
                raise DatasetError(f"{where}: empty query_id")
            rec: dict = {"doc_id": row.get("doc_id"), "rank": row.get("rank")}
            for col in ("prob", "verdict", "confidence"):
                val = (row.get(col) or "").strip()
                if val:
                    rec[col] = float(val) if col == "prob" else val
            gr = (row.get("gold_relevant") or "").strip()
            if gr:
                rec["gold_relevant"] = _parse_csv_bool(gr, where)
            try:
                rec["rank"] = int(str(rec["rank"]).strip())
            except (TypeError, ValueError):
                raise DatasetError(f"{where}: rank is not an integer") from None
            doc = _doc_from_mapping(rec, where)
            split = (row.get("split") or "").strip()
            group = grouped.setdefault(qid, {"split": split, "docs": [], "where": where})
            if group["split"] != split:
                raise DatasetError(
                    f"{where}: query {qid!r} has conflicting split values"
                    f" ({group['split']!r} vs {split!r})"
                )
            group["docs"].append(doc)
    queries = []
    for qid, group in grouped.items():
        try:
            queries.append(
                QueryInstance(query_id=qid, split=group["split"], docs=tuple(group["docs"]))
            )
        except DatasetError as exc:
            raise DatasetError(f"{path.name} ({group['where']}): {exc}") from None
    return queries


def _doc_to_mapping(doc: RankedDoc) -> dict:
    rec: dict = {"doc_id": doc.doc_id, "rank": doc.rank}
    if doc.prob is not None:
        rec["prob"] = doc.prob
    else:
        rec["verdict"] = doc.verdict.verdict
        rec["confidence"] = doc.verdict.confidence
    if doc.gold_relevant is not None:
        rec["gold_relevant"] = doc.gold_relevant
    return rec


def _write_jsonl(dataset: Dataset, path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for q in dataset.queries():
            rec = {
                "query_id": q.query_id,
                "split": q.split,
                "docs": [_doc_to_mapping(d) for d in q.docs],
            }
            fh.write(json.dumps(rec) + "\n")


def _write_csv(dataset: Dataset, path: Path) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for q in dataset.queries():
            for d in q.docs:
                writer.writerow(
                    [
                        q.query_id,
                        q.split,
                        d.doc_id,
                        d.rank,
                        "" if d.prob is None else repr(d.prob),
                        "" if d.verdict is None else d.verdict.verdict,
                        "" if d.verdict is None else d.verdict.confidence,
                        "" if d.gold_relevant is None else str(d.gold_relevant).lower(),
                    ]
                )


def split_indices(count: int, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation of range(count): the first n indices are gold, the rest unlabeled.

    This is the single source of splitting randomness, shared by split_gold and
    the resampling harness so both produce identical draws for a given seed.
    """
    perm = np.random.default_rng(seed).permutation(count)
    return perm[:n], perm[n:]


def split_gold(pool: Dataset, n: int, seed: int) -> Dataset:
    """Sample n gold queries uniformly without replacement from a fully labeled pool.

    The pool is first normalized to lexicographic query_id order so the draw
    depends only on (contents, n, seed), not on file order.  Queries left out
    of the gold sample are returned on the unlabeled split with their labels
    retained as hidden ground truth.
    """
    if n < 1:
        raise DatasetError(f"gold sample size must be >= 1, got {n}")
    queries = sorted(pool.queries(), key=lambda q: q.query_id)
    unlabeled_ids = [q.query_id for q in queries if not q.fully_labeled()]
    if unlabeled_ids:
        raise DatasetError(
            f"pool is not fully gold-labeled; first offenders: {unlabeled_ids[:5]}"
        )
    if n > len(queries):
        raise DatasetError(f"gold sample size {n} exceeds pool size {len(queries)}")
    gold_idx, rest_idx = split_indices(len(queries), n, seed)
    gold = [replace(queries[i], split=GOLD) for i in gold_idx]
    unlabeled = [replace(queries[i], split=UNLABELED) for i in rest_idx]
    return Dataset(k=pool.k, gold=gold, unlabeled=unlabeled)
