"""CSV ingestion, label encoding and leak-free stratified partitions."""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIELDS = ("case_id", "case_outcome", "case_title", "case_text")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    case_id: str
    outcome: str
    title: str
    body: str


@dataclass
class DocumentSet:
    docs: list[Document]
    dropped: int = 0

    def __len__(self):
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def __getitem__(self, i):
        return self.docs[i]

    def ids(self) -> list[str]:
        return [d.case_id for d in self.docs]

    def subset(self, case_ids) -> "DocumentSet":
        """Documents whose id is in ``case_ids``, kept in the order of ``case_ids``."""
        by_id = {d.case_id: d for d in self.docs}
        missing = [c for c in case_ids if c not in by_id]
        if missing:
            raise CorpusError(f"unknown case ids: {missing[:5]}")
        return DocumentSet([by_id[c] for c in case_ids])


@dataclass(frozen=True)
class LabelMap:
    labels: tuple[str, ...]
    index: dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if len(self.labels) < 2:
            raise CorpusError(f"need at least 2 distinct labels, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise CorpusError("duplicate labels in label map")
        object.__setattr__(self, "index", {lab: i for i, lab in enumerate(self.labels)})

    @property
    def K(self) -> int:
        return len(self.labels)

    def encode(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise CorpusError(f"label {label!r} not in label map") from None

    def decode(self, idx: int) -> str:
        return self.labels[idx]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    validation_fraction_of_train: float = 0.10
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if not 0.0 <= self.validation_fraction_of_train < 1.0:
            raise ValueError(
                f"validation_fraction_of_train must be in [0,1), got {self.validation_fraction_of_train}"
            )


def _header_key(name: str) -> str:
    return "_".join(name.strip().lower().replace("-", " ").split())


def load_corpus(path) -> DocumentSet:
    """Parse the four-column case-law CSV.

    Rows with an empty body or outcome are dropped and counted in
    ``DocumentSet.dropped``. Header names match case-insensitively and
    ``Case ID`` is accepted for ``case_id``.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    csv.field_size_limit(min(sys.maxsize, 2**31 - 1))
    docs, dropped, seen = [], 0, set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError(f"{path}: empty file, expected a header row") from None
        except csv.Error as e:
            raise CorpusError(f"{path}: unreadable header: {e}") from None
        keys = [_header_key(h) for h in header]
        cols = {}
        for f in FIELDS:
            if keys.count(f) != 1:
                raise CorpusError(f"{path}: malformed header {header!r}; need exactly one {f!r} column")
            cols[f] = keys.index(f)
        row_no = 1
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as e:
                raise CorpusError(f"{path}: unreadable row {row_no + 1}: {e}") from None
            row_no += 1
            if not row:
                continue
            if len(row) != len(header):
                raise CorpusError(
                    f"{path}: unreadable row {row_no}: {len(row)} fields, header has {len(header)}"
                )
            rec = {f: row[i] for f, i in cols.items()}
            if not rec["case_text"].strip() or not rec["case_outcome"].strip():
                dropped += 1
                continue
            cid = rec["case_id"].strip()
            if not cid:
                raise CorpusError(f"{path}: row {row_no}: empty case_id")
            if cid in seen:
                raise CorpusError(f"{path}: row {row_no}: duplicate case_id {cid!r}")
            seen.add(cid)
            docs.append(Document(cid, rec["case_outcome"].strip(), rec["case_title"], rec["case_text"]))
    return DocumentSet(docs, dropped)


def write_corpus(docs, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS)
        for d in docs:
            w.writerow([d.case_id, d.outcome, d.title, d.body])


def encode_labels(docs) -> LabelMap:
    labels = sorted({d.outcome for d in docs})
    if not labels:
        raise CorpusError("cannot encode labels of an empty document set")
    return LabelMap(tuple(labels))


def _stratified_take(docs: DocumentSet, fraction: float, seed: int, what: str):
    """Split ``docs`` so each class sends floor(fraction * n_c) members to the second side."""
    by_class: dict[str, list[int]] = {}
    for i, d in enumerate(docs.docs):
        by_class.setdefault(d.outcome, []).append(i)
    rng = np.random.default_rng(seed)
    taken = set()
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            raise CorpusError(f"class {label!r} has {len(members)} member(s); {what} needs at least 2")
        n_take = math.floor(fraction * len(members) + 1e-9)
        if n_take >= len(members):
            raise CorpusError(f"{what} would leave class {label!r} empty on the training side")
        perm = rng.permutation(len(members))
        taken.update(members[j] for j in perm[:n_take])
    keep = [d for i, d in enumerate(docs.docs) if i not in taken]
    take = [d for i, d in enumerate(docs.docs) if i in taken]
    return DocumentSet(keep), DocumentSet(take)


def stratified_split(docs: DocumentSet, spec: SplitSpec):
    """Return ``(train, test)``; per-class rounding remainders stay in train."""
    return _stratified_take(docs, 1.0 - spec.train_fraction, spec.seed, "stratified split")


def carve_validation(train: DocumentSet, spec: SplitSpec):
    """Return ``(train2, val)`` carved from the training split only."""
    if spec.validation_fraction_of_train <= 0:
        raise CorpusError("validation carve requested with validation_fraction_of_train == 0")
    # offset the seed so the carve is not correlated with the test draw
    return _stratified_take(train, spec.validation_fraction_of_train, spec.seed + 1, "validation carve")


def write_manifest(docs, path) -> None:
    Path(path).write_text("".join(f"{d.case_id}\n" for d in docs), encoding="utf-8")


def read_manifest(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
