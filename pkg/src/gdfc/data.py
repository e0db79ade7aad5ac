"""Dataset loading, normalization and the benchmark manifest."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MINMAX_CLIP = (-0.05, 1.05)


@dataclass(frozen=True)
class Normalizer:
    kind: str
    # (min, max) for minmax, (mean, std) for zscore
    low: np.ndarray
    high: np.ndarray

    def to_dict(self) -> dict:
        return {"kind": self.kind, "low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(d["kind"], np.asarray(d["low"], dtype=np.float64), np.asarray(d["high"], dtype=np.float64))


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str] | None = None
    normalizer: Normalizer | None = None
    n_classes: int = 0
    feature_names: list[str] | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        self.features = np.array(self.features, dtype=np.float64, ndmin=2)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on the number of samples")
        if np.isnan(self.features).any():
            raise ValueError("features contain NaN")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        if not self.n_classes:
            if self.class_names:
                self.n_classes = len(self.class_names)
            else:
                self.n_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and self.labels.max() >= self.n_classes:
            raise ValueError("label id exceeds n_classes")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, features=self.features[idx], labels=self.labels[idx], dropped_rows=0)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


# --------------------------------------------------------------------------- csv


@dataclass(frozen=True)
class CsvSchema:
    label_column: int | str = -1
    delimiter: str = ","
    header: bool = False
    missing: tuple[str, ...] = ("?", "")
    # "auto" one-hot encodes every non-numeric column; a list restricts
    # encoding to those columns and makes other non-numeric cells an error
    categorical: str | tuple = "auto"
    drop_columns: tuple = ()
    # columns where a literal 0 denotes a missing measurement
    zero_missing: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        d = dict(d)
        for key in ("missing", "drop_columns", "zero_missing"):
            if key in d:
                d[key] = tuple(d[key])
        if isinstance(d.get("categorical"), list):
            d["categorical"] = tuple(d["categorical"])
        return cls(**d)


def _resolve_col(ref, names: list[str] | None, width: int) -> int:
    if isinstance(ref, str):
        if names is None or ref not in names:
            raise ValueError(f"column {ref!r} not found in header")
        return names.index(ref)
    idx = int(ref)
    if not -width <= idx < width:
        raise ValueError(f"column index {ref} out of range for {width} columns")
    return idx % width


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _sort_key(s: str):
    return (0, float(s), s) if _is_number(s) else (1, 0.0, s)


def parse_csv(text: str, schema: CsvSchema = CsvSchema()) -> Dataset:
    if schema.delimiter == "whitespace":
        rows = [line.split() for line in text.splitlines()]
    else:
        rows = list(csv.reader(io.StringIO(text), delimiter=schema.delimiter))
    rows = [r for r in rows if any(c.strip() for c in r)]
    names = None
    if schema.header:
        if not rows:
            raise ValueError("empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise ValueError("no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValueError(f"row {i} has {len(r)} cells, expected {width}")
    rows = [[c.strip() for c in r] for r in rows]

    label_col = _resolve_col(schema.label_column, names, width)
    dropped_cols = {_resolve_col(c, names, width) for c in schema.drop_columns}
    zero_cols = {_resolve_col(c, names, width) for c in schema.zero_missing}
    feat_cols = [c for c in range(width) if c != label_col and c not in dropped_cols]
    explicit_cat = None
    if schema.categorical != "auto":
        explicit_cat = {_resolve_col(c, names, width) for c in schema.categorical}

    missing = set(schema.missing)
    kept = []
    for r in rows:
        used = [r[c] for c in feat_cols] + [r[label_col]]
        if any(v in missing for v in used):
            continue
        if any(_is_number(r[c]) and float(r[c]) == 0.0 for c in zero_cols):
            continue
        kept.append(r)
    dropped = len(rows) - len(kept)
    if not kept:
        raise ValueError("every row was dropped as missing")

    columns, out_names = [], []
    for c in feat_cols:
        values = [r[c] for r in kept]
        numeric = all(_is_number(v) for v in values)
        as_cat = (explicit_cat is not None and c in explicit_cat) or (explicit_cat is None and not numeric)
        base = names[c] if names else f"x{c}"
        if not as_cat:
            if not numeric:
                bad = next(v for v in values if not _is_number(v))
                raise ValueError(f"non-numeric cell {bad!r} in column {base}")
            columns.append(np.array([float(v) for v in values]))
            out_names.append(base)
            continue
        cats = list(dict.fromkeys(values))
        if len(cats) <= 2:
            # binary category: one 0/1 column, first-seen category is 0
            columns.append(np.array([float(v != cats[0]) for v in values]))
            out_names.append(f"{base}={cats[-1]}")
        else:
            for cat in cats:
                columns.append(np.array([float(v == cat) for v in values]))
                out_names.append(f"{base}={cat}")

    raw_labels = [r[label_col] for r in kept]
    class_names = sorted(set(raw_labels), key=_sort_key)
    lookup = {name: i for i, name in enumerate(class_names)}
    X = np.column_stack(columns) if columns else np.zeros((len(kept), 0))
    return Dataset(X, [lookup[v] for v in raw_labels], class_names, None, len(class_names), out_names, dropped)


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    return parse_csv(text, schema)


# --------------------------------------------------------------------- normalize


def fit_normalizer(data: Dataset, kind: str = "minmax") -> Normalizer:
    X = data.features
    if len(X) == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    if kind == "minmax":
        return Normalizer(kind, X.min(axis=0), X.max(axis=0))
    if kind == "zscore":
        return Normalizer(kind, X.mean(axis=0), X.std(axis=0))
    raise ValueError(f"unknown normalizer kind {kind!r}")


def normalize_array(X, stats: Normalizer) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != stats.low.shape[0]:
        raise ValueError(f"data has {X.shape[-1]} columns, normalizer expects {stats.low.shape[0]}")
    if stats.kind == "minmax":
        span = stats.high - stats.low
    else:
        span = stats.high
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (X - stats.low) / safe, 0.0)
    if stats.kind == "minmax":
        out = np.clip(out, *MINMAX_CLIP)
    return out


def apply_normalizer(data: Dataset, stats: Normalizer) -> Dataset:
    return replace(data, features=normalize_array(data.features, stats), normalizer=stats)


# ---------------------------------------------------------------------- manifest


@dataclass
class ManifestEntry:
    key: str
    name: str
    file: str
    schema: CsvSchema
    expected: dict = field(default_factory=dict)
    notes: str = ""


def data_dir(path=None) -> Path:
    return Path(path or os.environ.get("GDFC_DATA_DIR", "datasets"))


def load_manifest(path=None) -> dict[str, ManifestEntry]:
    path = path or os.environ.get("GDFC_MANIFEST")
    if path:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        doc = json.loads(resources.files("gdfc").joinpath("manifest.json").read_text(encoding="utf-8"))
    return {
        key: ManifestEntry(key, e["name"], e["file"], CsvSchema.from_dict(e.get("schema", {})),
                           e.get("expected", {}), e.get("notes", ""))
        for key, e in doc["datasets"].items()
    }


def load_dataset(key: str, directory=None, manifest=None) -> Dataset:
    entries = manifest if manifest is not None else load_manifest()
    if key not in entries:
        raise KeyError(f"unknown dataset {key!r}; manifest keys: {', '.join(sorted(entries))}")
    entry = entries[key]
    path = data_dir(directory) / entry.file
    if not path.exists():
        raise FileNotFoundError(
            f"{entry.name}: expected {path}; run `gdfc bench prepare-data` or place the file there")
    ds = load_csv(path, entry.schema)
    exp = entry.expected
    got = {"size": len(ds), "dim": ds.n_features, "classes": ds.n_classes}
    diff = {k: (exp[k], got[k]) for k in got if k in exp and exp[k] != got[k]}
    if diff:
        log.warning("%s differs from reference shape (expected, got): %s", key, diff)
    return ds


# ---------------------------------------------------------------------- prepare


def balance_scale_rows() -> list[list[str]]:
    """All 625 Balance Scale instances, in the UCI file's enumeration order."""
    rows = []
    for lw, ld, rw, rd in itertools.product(range(1, 6), repeat=4):
        left, right = lw * ld, rw * rd
        cls = "B" if left == right else ("L" if left > right else "R")
        rows.append([cls, str(lw), str(ld), str(rw), str(rd)])
    return rows


def _write_rows(path: Path, rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _keel_raw(name: str) -> str:
    return resources.files("keel_ds").joinpath("data", "balanced", "raw", f"{name}.dat").read_text(encoding="utf-8")


def prepare_datasets(directory=None) -> dict[str, str]:
    """Materialise the benchmark CSVs obtainable without a network fetch.

    Wine comes from scikit-learn's bundled copy, Balance Scale is generated
    from its defining rule, and Vote / Hayes-Roth / Pima come from the
    keel-ds package when installed.  Returns ``{key: status}``.
    """
    out = data_dir(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = load_manifest()
    status: dict[str, str] = {}

    def target(key):
        return out / entries[key].file

    _write_rows(target("balance"), balance_scale_rows())
    status["balance"] = "generated"

    try:
        from sklearn.datasets import load_wine
    except ImportError:
        status["wine"] = "skipped (scikit-learn not installed)"
    else:
        w = load_wine()
        _write_rows(target("wine"), [[str(int(t)), *(repr(float(v)) for v in row)] for row, t in zip(w.data, w.target)])
        status["wine"] = "scikit-learn"

    keel = {"vote": "housevotes", "hr": "hayes-roth", "diabetes": "pima"}
    for key, name in keel.items():
        try:
            text = _keel_raw(name)
        except (ModuleNotFoundError, FileNotFoundError) as exc:
            status[key] = f"skipped ({exc.__class__.__name__}: install keel-ds)"
            continue
        target(key).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        status[key] = "keel-ds"

    for key in entries:
        if key not in status:
            status[key] = "present" if target(key).exists() else "missing (place the UCI file manually)"
    return status
