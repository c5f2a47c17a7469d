"""Benchmark dataset ingestion, two-class subsampling, reduction, and splits.

Each of the four benchmarks is validated against its published row/column
counts at load time, restricted to its first two classes, stratified into
fixed train/validation/test splits, reduced to at most one feature per qubit,
and rescaled so every retained dimension lies in [0, pi] (the injective range
of the RX angle encoding).

The reducer is principal component analysis fitted on the training split
only, with components and scaling bounds applied unchanged to the held-out
splits; the choice is recorded in ``reducer_provenance`` of every prepared
dataset.  PCA was selected over non-parametric embeddings because held-out
points must be embedded consistently and preparation must be a deterministic
function of (file bytes, spec, seed).

Titanic preprocessing is fixed here since no canonical recipe exists: drop
the passenger id and the free-text name/ticket/cabin columns, integer-encode
sex and port of embarkation, and impute missing ages with the column median.
"""
from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_CACHE_MAGIC = b"BPLD"
_CACHE_VERSION = 1

MNIST_IMAGES_FILE = "train-images-idx3-ubyte"
MNIST_LABELS_FILE = "train-labels-idx1-ubyte"


@dataclass(frozen=True)
class DatasetInfo:
    rows: int
    columns: int       # published feature-column count (label excluded)
    classes: int
    splits: tuple[int, int, int]


DATASET_TABLE = {
    "iris": DatasetInfo(rows=150, columns=4, classes=3, splits=(60, 20, 20)),
    "wine": DatasetInfo(rows=178, columns=13, classes=3, splits=(80, 20, 30)),
    "titanic": DatasetInfo(rows=891, columns=11, classes=2, splits=(320, 80, 179)),
    "mnist": DatasetInfo(rows=60_000, columns=784, classes=10, splits=(320, 80, 400)),
}

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetSpec:
    """Which benchmark to load, from where, keeping which classes."""

    name: str
    source_path: Path
    classes_kept: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.name not in DATASET_TABLE:
            raise ValueError(f"unknown dataset {self.name!r}; "
                             f"choose from {sorted(DATASET_TABLE)}")
        object.__setattr__(self, "source_path", Path(self.source_path))

    @property
    def info(self) -> DatasetInfo:
        return DATASET_TABLE[self.name]

    @property
    def splits(self) -> tuple[int, int, int]:
        return self.info.splits


@dataclass
class RawTable:
    """Numeric view of a benchmark after its fixed encoding recipe."""

    name: str
    features: np.ndarray   # (M, d) float64, categorical fields already encoded
    labels: np.ndarray     # (M,) int64, class ids starting at 0
    raw_columns: int       # published column count before any recipe

    @property
    def num_rows(self) -> int:
        return len(self.labels)


# ---------------------------------------------------------------------------
# Format loaders
# ---------------------------------------------------------------------------


def _read_csv_rows(path: Path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def _load_iris(path: Path) -> RawTable:
    rows = _read_csv_rows(path)
    feats, species = [], []
    for row in rows:
        if len(row) != 5:
            raise ValueError(f"iris rows need 4 features + species, got {len(row)}")
        feats.append([float(v) for v in row[:4]])
        species.append(row[4].strip())
    order: dict[str, int] = {}
    for name in species:
        order.setdefault(name, len(order))  # class ids by first appearance
    labels = np.array([order[name] for name in species], dtype=np.int64)
    return RawTable("iris", np.array(feats), labels, raw_columns=4)


def _load_wine(path: Path) -> RawTable:
    rows = _read_csv_rows(path)
    feats, classes = [], []
    for row in rows:
        if len(row) != 14:
            raise ValueError(f"wine rows need class + 13 features, got {len(row)}")
        classes.append(int(float(row[0])))
        feats.append([float(v) for v in row[1:]])
    ids = sorted(set(classes))
    remap = {c: i for i, c in enumerate(ids)}
    labels = np.array([remap[c] for c in classes], dtype=np.int64)
    return RawTable("wine", np.array(feats), labels, raw_columns=13)


_TITANIC_COLUMNS = ["PassengerId", "Survived", "Pclass", "Name", "Sex", "Age",
                    "SibSp", "Parch", "Ticket", "Fare", "Cabin", "Embarked"]
_TITANIC_KEPT = ["Pclass", "Sex", "Age", "SibSp", "Parch", "Fare", "Embarked"]
_SEX_CODES = {"male": 0, "female": 1}
_EMBARKED_CODES = {"": -1, "C": 0, "Q": 1, "S": 2}


def _load_titanic(path: Path) -> RawTable:
    rows = _read_csv_rows(path)
    header, body = rows[0], rows[1:]
    if header != _TITANIC_COLUMNS:
        raise ValueError(f"unexpected titanic header: {header}")
    col = {name: i for i, name in enumerate(header)}
    feats = np.empty((len(body), len(_TITANIC_KEPT)))
    labels = np.empty(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"titanic row {i + 2} has {len(row)} fields")
        labels[i] = int(row[col["Survived"]])
        for j, name in enumerate(_TITANIC_KEPT):
            value = row[col[name]].strip()
            if name == "Sex":
                feats[i, j] = _SEX_CODES[value.lower()]
            elif name == "Embarked":
                feats[i, j] = _EMBARKED_CODES[value.upper()]
            elif name == "Age":
                feats[i, j] = float(value) if value else np.nan
            else:
                feats[i, j] = float(value)
    age = feats[:, _TITANIC_KEPT.index("Age")]
    median_age = float(np.nanmedian(age))
    age[np.isnan(age)] = median_age
    return RawTable("titanic", feats, labels, raw_columns=11)


def read_idx_images(path: Path) -> np.ndarray:
    """Parse a big-endian image file into (count, rows*cols) float64."""
    data = Path(path).read_bytes()
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"bad image magic 0x{magic:08x}, "
                         f"expected 0x{IDX_IMAGES_MAGIC:08x}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    if pixels.size != count * rows * cols:
        raise ValueError(f"image payload holds {pixels.size} bytes, "
                         f"expected {count * rows * cols}")
    return pixels.reshape(count, rows * cols).astype(np.float64)


def read_idx_labels(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(f"bad label magic 0x{magic:08x}, "
                         f"expected 0x{IDX_LABELS_MAGIC:08x}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if labels.size != count:
        raise ValueError(f"label payload holds {labels.size} bytes, expected {count}")
    return labels.astype(np.int64)


def _load_mnist(path: Path) -> RawTable:
    root = Path(path)
    images = read_idx_images(root / MNIST_IMAGES_FILE)
    labels = read_idx_labels(root / MNIST_LABELS_FILE)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images vs {len(labels)} labels")
    return RawTable("mnist", images, labels, raw_columns=784)


_LOADERS = {"iris": _load_iris, "wine": _load_wine,
            "titanic": _load_titanic, "mnist": _load_mnist}


def load_raw(spec: DatasetSpec) -> RawTable:
    """Load and validate a benchmark against its published statistics."""
    path = spec.source_path
    if not path.exists():
        raise FileNotFoundError(f"dataset path {path} does not exist")
    table = _LOADERS[spec.name](path)
    info = spec.info
    if table.num_rows != info.rows:
        raise ValueError(f"{spec.name}: {table.num_rows} rows, expected {info.rows}")
    if table.raw_columns != info.columns:
        raise ValueError(f"{spec.name}: {table.raw_columns} columns, "
                         f"expected {info.columns}")
    observed_classes = len(np.unique(table.labels))
    if observed_classes != info.classes:
        raise ValueError(f"{spec.name}: {observed_classes} classes, "
                         f"expected {info.classes}")
    return table


# ---------------------------------------------------------------------------
# Reduction
# ---------------------------------------------------------------------------


class PcaReducer:
    """Principal components via SVD with a deterministic sign convention."""

    def __init__(self, n_components: int):
        if n_components < 1:
            raise ValueError("n_components must be >= 1")
        self.n_components = n_components
        self.mean_: np.ndarray | None = None
        self.components_: np.ndarray | None = None

    def fit(self, x: np.ndarray) -> "PcaReducer":
        x = np.asarray(x, dtype=float)
        if self.n_components > min(x.shape):
            raise ValueError(f"cannot extract {self.n_components} components "
                             f"from data of shape {x.shape}")
        self.mean_ = x.mean(axis=0)
        _, _, vt = np.linalg.svd(x - self.mean_, full_matrices=False)
        components = vt[: self.n_components]
        # Sign convention: largest-magnitude loading of each component > 0.
        for row in components:
            pivot = row[np.argmax(np.abs(row))]
            if pivot < 0:
                row *= -1.0
        self.components_ = components
        return self

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.components_ is None:
            raise RuntimeError("reducer is not fitted")
        return (np.asarray(x, dtype=float) - self.mean_) @ self.components_.T


# ---------------------------------------------------------------------------
# Preparation
# ---------------------------------------------------------------------------


@dataclass
class PreparedDataset:
    name: str
    num_qubits: int
    seed: int
    features: np.ndarray                    # (M, d), every value in [0, pi]
    labels: np.ndarray                      # (M,) in {0, 1}
    split_indices: dict[str, np.ndarray]
    reducer_provenance: str
    # Raw-table row of each prepared row; in-memory traceability only, not
    # serialized by the cache container.
    source_rows: np.ndarray | None = None

    def split(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.split_indices[which]
        return self.features[idx], self.labels[idx]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update(struct.pack("<qq", self.num_qubits, self.seed))
        h.update(np.ascontiguousarray(self.features, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        for name in SPLIT_NAMES:
            h.update(np.ascontiguousarray(self.split_indices[name],
                                          dtype=np.int64).tobytes())
        h.update(self.reducer_provenance.encode())
        return h.hexdigest()


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` along ``weights``; sums exactly."""
    quotas = total * weights / weights.sum()
    counts = np.floor(quotas).astype(int)
    remainder = total - counts.sum()
    order = np.argsort(-(quotas - counts))
    counts[order[:remainder]] += 1
    return counts


def prepare(raw: RawTable, num_qubits: int, seed: int,
            classes_kept: tuple[int, int] = (0, 1)) -> PreparedDataset:
    """Subsample two classes, split, reduce, and rescale for angle encoding.

    Steps, all deterministic given the seed:

    1. keep rows of the two requested classes;
    2. draw the split total with class proportions preserved
       (largest-remainder apportionment);
    3. assign train/val/test per class so split sizes match the table;
    4. fit the reducer on the training rows only when the feature count
       exceeds the qubit count, and transform every split with it;
    5. map each retained dimension onto [0, pi] using training-split bounds,
       clipping held-out values that fall outside them.
    """
    if num_qubits < 1:
        raise ValueError("num_qubits must be >= 1")
    info = DATASET_TABLE[raw.name]
    split_sizes = np.array(info.splits, dtype=int)
    total_needed = int(split_sizes.sum())

    rng = np.random.default_rng(seed)
    class_rows = []
    for cls in classes_kept:
        rows = np.nonzero(raw.labels == cls)[0]
        if rows.size == 0:
            raise ValueError(f"class {cls} is absent from {raw.name}")
        class_rows.append(rows)
    available = np.array([rows.size for rows in class_rows])
    if available.sum() < total_needed:
        raise ValueError(f"{raw.name}: need {total_needed} two-class instances, "
                         f"only {available.sum()} available")

    per_class = _apportion(total_needed, available.astype(float))
    if np.any(per_class > available):
        # A class hit its ceiling; push the excess onto the other class.
        over = per_class - available
        per_class = np.minimum(per_class, available)
        per_class[np.argmin(over)] += over.clip(min=0).sum()

    # Per-split class-0 counts by largest remainder; class 1 fills the rest.
    class0_split = _apportion(int(per_class[0]),
                              split_sizes.astype(float))
    class1_split = split_sizes - class0_split
    if np.any(class1_split < 0) or class1_split.sum() != per_class[1]:
        raise ValueError("split apportionment failed; check split sizes")

    split_members: dict[str, list[np.ndarray]] = {name: [] for name in SPLIT_NAMES}
    for rows, plan in zip(class_rows, (class0_split, class1_split)):
        chosen = rng.choice(rows, size=int(plan.sum()), replace=False)
        start = 0
        for name, count in zip(SPLIT_NAMES, plan):
            split_members[name].append(chosen[start:start + int(count)])
            start += int(count)

    ordered = []
    split_indices: dict[str, np.ndarray] = {}
    cursor = 0
    for name in SPLIT_NAMES:
        members = np.concatenate(split_members[name])
        ordered.append(members)
        split_indices[name] = np.arange(cursor, cursor + members.size)
        cursor += members.size
    row_order = np.concatenate(ordered)

    feats = raw.features[row_order]
    labels = np.where(raw.labels[row_order] == classes_kept[0], 0, 1).astype(np.int64)
    train_idx = split_indices["train"]

    original_d = feats.shape[1]
    target_d = min(original_d, num_qubits)
    if original_d > num_qubits:
        reducer = PcaReducer(target_d).fit(feats[train_idx])
        feats = reducer.transform(feats)
        provenance = f"pca(fit=train,{original_d}->{target_d})"
    else:
        provenance = f"identity({original_d}d)"

    lo = feats[train_idx].min(axis=0)
    hi = feats[train_idx].max(axis=0)
    span = hi - lo
    degenerate = span <= 0
    span = np.where(degenerate, 1.0, span)
    feats = (feats - lo) / span * np.pi
    feats[:, degenerate] = 0.0  # constant training dimension carries no signal
    np.clip(feats, 0.0, np.pi, out=feats)
    provenance += ";scale=train-minmax[0,pi]"

    return PreparedDataset(
        name=raw.name, num_qubits=num_qubits, seed=seed,
        features=feats, labels=labels, split_indices=split_indices,
        reducer_provenance=provenance, source_rows=row_order,
    )


# ---------------------------------------------------------------------------
# Binary cache
# ---------------------------------------------------------------------------


def save_prepared(ds: PreparedDataset, path: Path) -> None:
    """Write the simple binary container: header, float64 rows, byte labels."""
    name_bytes = ds.name.encode()
    prov_bytes = ds.reducer_provenance.encode()
    m, d = ds.features.shape
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<H", _CACHE_VERSION))
        fh.write(struct.pack("<H", len(name_bytes)))
        fh.write(name_bytes)
        fh.write(struct.pack("<iq", ds.num_qubits, ds.seed))
        fh.write(struct.pack("<qi", m, d))
        for name in SPLIT_NAMES:
            fh.write(struct.pack("<q", len(ds.split_indices[name])))
        fh.write(struct.pack("<H", len(prov_bytes)))
        fh.write(prov_bytes)
        fh.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
        fh.write(ds.labels.astype(np.uint8).tobytes())
        for name in SPLIT_NAMES:
            fh.write(np.ascontiguousarray(ds.split_indices[name],
                                          dtype="<i8").tobytes())


def load_prepared(path: Path) -> PreparedDataset:
    data = Path(path).read_bytes()
    if data[:4] != _CACHE_MAGIC:
        raise ValueError(f"{path} is not a prepared-dataset container")
    off = 4
    (version,) = struct.unpack_from("<H", data, off); off += 2
    if version != _CACHE_VERSION:
        raise ValueError(f"unsupported container version {version}")
    (name_len,) = struct.unpack_from("<H", data, off); off += 2
    name = data[off:off + name_len].decode(); off += name_len
    num_qubits, seed = struct.unpack_from("<iq", data, off); off += 12
    m, d = struct.unpack_from("<qi", data, off); off += 12
    split_lens = []
    for _ in SPLIT_NAMES:
        (n,) = struct.unpack_from("<q", data, off); off += 8
        split_lens.append(n)
    (prov_len,) = struct.unpack_from("<H", data, off); off += 2
    provenance = data[off:off + prov_len].decode(); off += prov_len
    feats = np.frombuffer(data, dtype="<f8", count=m * d, offset=off)
    off += m * d * 8
    features = feats.reshape(m, d).copy()
    labels = np.frombuffer(data, dtype=np.uint8, count=m,
                           offset=off).astype(np.int64)
    off += m
    split_indices = {}
    for split_name, n in zip(SPLIT_NAMES, split_lens):
        idx = np.frombuffer(data, dtype="<i8", count=n, offset=off)
        split_indices[split_name] = idx.copy()
        off += n * 8
    return PreparedDataset(name=name, num_qubits=num_qubits, seed=seed,
                           features=features, labels=labels,
                           split_indices=split_indices,
                           reducer_provenance=provenance)
