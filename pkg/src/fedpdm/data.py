"""Dataset loading, synthetic generation and client partitioning.

Feature vectors always carry a trailing bias coordinate fixed at 1.0, so a
loader advertising n features exposes n-1 informative columns.

Partition schemes:
  iid                 shuffle globally, deal per_client_size to each client
  one-class           every client holds a single label; labels assigned by
                      repeatedly draining the class with the most samples left
  labels-per-client   every client holds exactly L distinct labels; pools are
                      drained by a greedy that pairs the L-1 fullest label
                      pools with the emptiest nonzero pool and waterfills the
                      client's quota across them
All schemes produce disjoint shards and raise ConfigError when the requested
layout cannot be met exactly.
"""
from __future__ import annotations

import csv
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptDataError
from .workload import Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Shard:
    """One client's private slice of the training set."""

    owner: int
    data: Dataset
    label_set: frozenset[int]


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str
    n_clients: int
    per_client_size: int
    labels_per_client: int = 4

    def __post_init__(self) -> None:
        if self.scheme not in ("iid", "one-class", "labels-per-client"):
            raise ConfigError(f"unknown partition scheme {self.scheme!r}")
        if self.n_clients < 1:
            raise ConfigError("n_clients must be positive")
        if self.per_client_size < 1:
            raise ConfigError("per_client_size must be positive")
        if self.labels_per_client < 1:
            raise ConfigError("labels_per_client must be positive")


# ---------------------------------------------------------------- partition


def partition(train: Dataset, spec: PartitionSpec, rng: np.random.Generator) -> list[Shard]:
    """Split a training set into disjoint client shards."""
    needed = spec.n_clients * spec.per_client_size
    if needed > len(train):
        raise ConfigError(
            f"partition needs {needed} samples but the dataset has {len(train)}"
        )
    if spec.scheme == "iid":
        return _partition_iid(train, spec, rng)
    if spec.scheme == "one-class":
        return _partition_one_class(train, spec, rng)
    return _partition_labels_per_client(train, spec, rng)


def _label_pools(train: Dataset, rng: np.random.Generator) -> dict[int, np.ndarray]:
    pools: dict[int, np.ndarray] = {}
    for label in np.unique(train.labels):
        idx = np.flatnonzero(train.labels == label)
        pools[int(label)] = rng.permutation(idx)
    return pools


def _make_shard(train: Dataset, owner: int, indices: np.ndarray) -> Shard:
    data = train.subset(indices)
    return Shard(owner, data, frozenset(int(v) for v in np.unique(data.labels)))


def _partition_iid(train: Dataset, spec: PartitionSpec, rng: np.random.Generator) -> list[Shard]:
    order = rng.permutation(len(train))
    size = spec.per_client_size
    return [
        _make_shard(train, j, order[j * size : (j + 1) * size])
        for j in range(spec.n_clients)
    ]


def _partition_one_class(
    train: Dataset, spec: PartitionSpec, rng: np.random.Generator
) -> list[Shard]:
    pools = _label_pools(train, rng)
    cursor = {c: 0 for c in pools}
    size = spec.per_client_size
    shards = []
    for j in range(spec.n_clients):
        # Fullest pool first keeps client counts roughly proportional to labels.
        label = min(pools, key=lambda c: (-(len(pools[c]) - cursor[c]), c))
        if len(pools[label]) - cursor[label] < size:
            raise ConfigError(
                "one-class partition infeasible: no label has "
                f"{size} samples left for client {j}"
            )
        idx = pools[label][cursor[label] : cursor[label] + size]
        cursor[label] += size
        shards.append(_make_shard(train, j, idx))
    return shards


def _partition_labels_per_client(
    train: Dataset, spec: PartitionSpec, rng: np.random.Generator
) -> list[Shard]:
    """Exactly L distinct labels and an exact sample count per client.

    Total demand is first carved out of the label pools proportionally, so
    any surplus samples are set aside and the allocation below consumes its
    budget exactly. Mid-run clients pair the L-1 fullest label pools with
    the emptiest nonzero pool and waterfill roughly equal shares. Because
    that keeps pools alive, an endgame phase retires the smallest pools
    whole as soon as the remaining clients could no longer absorb all
    surplus labels (each client can retire at most L-1 pools). When exactly
    L pools are alive, every later client needs all of them, so takes are
    capped to leave one sample per future client.
    """
    L = spec.labels_per_client
    size = spec.per_client_size
    if size < L:
        raise ConfigError("per_client_size must be at least labels_per_client")
    pools = _label_pools(train, rng)
    if len(pools) < L:
        raise ConfigError("dataset has fewer labels than labels_per_client")
    cursor = {c: 0 for c in pools}
    remaining = _demand_quota(pools, spec.n_clients * size)
    shards = []

    def fail(j: int, why: str):
        raise ConfigError(f"labels-per-client partition infeasible at client {j}: {why}")

    for j in range(spec.n_clients):
        k_left = spec.n_clients - j
        alive = [c for c in sorted(pools) if remaining[c] > 0]
        excess = len(alive) - L
        if excess < 0:
            fail(j, f"only {len(alive)} labels still have samples")
        if excess > (k_left - 1) * (L - 1):
            fail(j, f"{excess} surplus labels cannot be retired by {k_left} clients")
        by_size = sorted(alive, key=lambda c: (remaining[c], c))
        if k_left == 1:
            takes = {c: remaining[c] for c in alive}
            if sum(takes.values()) != size:
                fail(j, "leftover samples do not match the final client size")
        elif excess > 0 and excess > (k_left - 2) * (L - 1):
            takes = _endgame_takes(by_size, remaining, size, L, excess, k_left)
            if takes is None:
                fail(j, "cannot retire surplus label pools fast enough")
        else:
            fullest = sorted(alive, key=lambda c: (-remaining[c], c))[: L - 1]
            emptiest = next(c for c in by_size if c not in fullest)
            reserve = k_left - 1 if len(alive) == L else 0
            takes = _waterfill(fullest + [emptiest], remaining, size, reserve)
            if takes is None:
                fail(j, f"chosen labels cannot supply {size} samples")
        parts = []
        for c, t in takes.items():
            parts.append(pools[c][cursor[c] : cursor[c] + t])
            cursor[c] += t
            remaining[c] -= t
        shards.append(_make_shard(train, j, np.concatenate(parts)))
    return shards


def _demand_quota(pools, demand) -> dict[int, int]:
    """Per-label budgets proportional to pool sizes, summing to `demand`."""
    labels = sorted(pools)
    supply = sum(len(pools[c]) for c in labels)
    exact = {c: demand * len(pools[c]) / supply for c in labels}
    quota = {c: int(exact[c]) for c in labels}
    short = demand - sum(quota.values())
    order = sorted(labels, key=lambda c: (quota[c] - exact[c], c))
    for c in order[:short]:
        quota[c] += 1
    return quota


def _endgame_takes(by_size, remaining, size, L, excess, k_left):
    """Retire as many of the smallest pools as fit into one client."""
    kills = []
    killed_total = 0
    for c in by_size:
        if len(kills) == min(L - 1, excess):
            break
        slots_after = L - (len(kills) + 1)
        if killed_total + remaining[c] <= size - slots_after:
            kills.append(c)
            killed_total += remaining[c]
    if not kills:
        return None
    takes = {c: remaining[c] for c in kills}
    survivors = [c for c in by_size if c not in kills]
    rest = sorted(survivors, key=lambda c: (-remaining[c], c))[: L - len(kills)]
    reserve = k_left - 1 if len(survivors) == L else 0
    fill = _waterfill(rest, remaining, size - killed_total, reserve)
    if fill is None:
        return None
    takes.update(fill)
    return takes


def _waterfill(chosen, remaining, size, reserve=0) -> dict[int, int] | None:
    """Split `size` across the chosen labels, equal shares where supply allows.

    Labels are served emptiest first with a ceil(need/left) share, so scarce
    pools contribute what they can and fuller pools absorb the deficit.
    `reserve` holds back that many samples per label for future clients.
    Returns None when the chosen labels cannot cover `size` with at least one
    sample each.
    """
    cap = {c: max(0, remaining[c] - reserve) for c in chosen}
    takes: dict[int, int] = {}
    need = size
    order = sorted(chosen, key=lambda c: (remaining[c], c))
    for pos, c in enumerate(order):
        share = -(-need // (len(order) - pos))
        t = min(share, cap[c])
        takes[c] = t
        need -= t
    if need > 0:
        for c in sorted(chosen, key=lambda c: (-(cap[c] - takes[c]), c)):
            extra = min(need, cap[c] - takes[c])
            takes[c] += extra
            need -= extra
            if need == 0:
                break
    if need > 0 or any(t < 1 for t in takes.values()):
        return None
    return takes


# ---------------------------------------------------------------- synthetic


def synth_generate(
    n_classes: int,
    n_features: int,
    n_train: int,
    n_test: int,
    separation: float,
    rng: np.random.Generator,
) -> tuple[Dataset, Dataset]:
    """Gaussian class clusters with unit covariance and balanced labels.

    Class centers are standard normal draws rescaled so the closest pair of
    centers sits `separation` apart. n_features includes the bias column.
    """
    if n_classes < 1 or n_features < 2:
        raise ValueError("need at least one class and two features (incl. bias)")
    if n_train < n_classes or n_test < n_classes:
        raise ValueError("need at least one sample per class in each split")
    if separation <= 0:
        raise ValueError("separation must be positive")
    centers = rng.normal(size=(n_classes, n_features - 1))
    if n_classes > 1:
        dists = [
            float(np.linalg.norm(centers[a] - centers[b]))
            for a in range(n_classes)
            for b in range(a + 1, n_classes)
        ]
        centers *= separation / min(dists)
    train = _synth_split(centers, n_train, rng)
    test = _synth_split(centers, n_test, rng)
    return train, test


def _synth_split(centers: np.ndarray, count: int, rng: np.random.Generator) -> Dataset:
    n_classes, width = centers.shape
    labels = np.repeat(np.arange(n_classes), -(-count // n_classes))[:count]
    labels = labels[rng.permutation(count)].astype(np.int64)
    feats = centers[labels] + rng.normal(size=(count, width))
    feats = np.hstack([feats, np.ones((count, 1))])
    return Dataset(feats, labels)


# ---------------------------------------------------------------- MNIST idx


_MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _open_auto(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _find_file(data_dir: Path, stem: str) -> Path:
    for cand in (data_dir / stem, data_dir / (stem + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"missing {stem}[.gz] under {data_dir}")


def read_idx_images(path: Path) -> np.ndarray:
    """Pixels of an idx3 image file scaled to [0,1], flattened, bias appended."""
    with _open_auto(path) as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise CorruptDataError(f"{path}: truncated idx header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != 2051:
            raise CorruptDataError(f"{path}: bad idx3 magic {magic}")
        raw = fh.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise CorruptDataError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    feats = pixels.astype(np.float64) / 255.0
    return np.hstack([feats, np.ones((count, 1))])


def read_idx_labels(path: Path) -> np.ndarray:
    with _open_auto(path) as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise CorruptDataError(f"{path}: truncated idx header")
        magic, count = struct.unpack(">II", header)
        if magic != 2049:
            raise CorruptDataError(f"{path}: bad idx1 magic {magic}")
        raw = fh.read(count)
    if len(raw) != count:
        raise CorruptDataError(f"{path}: truncated label data")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_mnist(data_dir: str | Path) -> tuple[Dataset, Dataset]:
    """MNIST train/test from idx files (raw or gzipped) in data_dir."""
    data_dir = Path(data_dir)
    out = []
    for split in ("train", "test"):
        img_stem, lbl_stem = _MNIST_FILES[split]
        feats = read_idx_images(_find_file(data_dir, img_stem))
        labels = read_idx_labels(_find_file(data_dir, lbl_stem))
        if feats.shape[0] != labels.shape[0]:
            raise CorruptDataError(f"MNIST {split}: image/label counts differ")
        out.append(Dataset(feats, labels))
    return out[0], out[1]


# ---------------------------------------------------------------- UCI Adult


_ADULT_VOCAB = {
    "workclass": [
        "Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
        "Local-gov", "State-gov", "Without-pay", "Never-worked",
    ],
    "education": [
        "Bachelors", "Some-college", "11th", "HS-grad", "Prof-school",
        "Assoc-acdm", "Assoc-voc", "9th", "7th-8th", "12th", "Masters",
        "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool",
    ],
    "marital-status": [
        "Married-civ-spouse", "Divorced", "Never-married", "Separated",
        "Widowed", "Married-spouse-absent", "Married-AF-spouse",
    ],
    "occupation": [
        "Tech-support", "Craft-repair", "Other-service", "Sales",
        "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
        "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
        "Transport-moving", "Priv-house-serv", "Protective-serv",
        "Armed-Forces",
    ],
    "relationship": [
        "Wife", "Own-child", "Husband", "Not-in-family", "Other-relative",
        "Unmarried",
    ],
    "race": [
        "White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black",
    ],
    "sex": ["Female", "Male"],
}

# Countries with their own indicator column; everything else shares "other".
_ADULT_TOP_COUNTRIES = [
    "United-States", "Mexico", "Philippines", "Germany", "Canada",
    "Puerto-Rico", "El-Salvador", "India", "Cuba", "England", "Jamaica",
    "South", "China", "Italy", "Dominican-Republic",
]

# Row layout of adult.data / adult.test.
_ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "label",
]
_ADULT_CONTINUOUS = [
    "age", "fnlwgt", "education-num", "capital-gain", "capital-loss",
    "hours-per-week",
]

# 6 continuous + 8+16+7+14+6+5+2 one-hot + 16 country + bias = 81.
ADULT_DIM = (
    len(_ADULT_CONTINUOUS)
    + sum(len(v) for v in _ADULT_VOCAB.values())
    + len(_ADULT_TOP_COUNTRIES) + 1
    + 1
)


def _adult_rows(path: Path) -> tuple[list[list[str]], int]:
    """Parsed rows with complete fields, plus how many rows were dropped."""
    rows, dropped = [], 0
    with open(path, newline="") as fh:
        for line in csv.reader(fh, skipinitialspace=True):
            if not line or line[0].startswith("|"):
                continue
            if len(line) == 1 and not line[0].strip():
                continue
            if len(line) != len(_ADULT_COLUMNS):
                raise CorruptDataError(
                    f"{path}: row with {len(line)} fields, expected {len(_ADULT_COLUMNS)}"
                )
            fields = [f.strip() for f in line]
            if "?" in fields:
                dropped += 1
                continue
            rows.append(fields)
    return rows, dropped


def _adult_encode(rows: list[list[str]], path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Raw continuous block + one-hot block (bias and scaling applied later)."""
    count = len(rows)
    cont = np.zeros((count, len(_ADULT_CONTINUOUS)))
    cat_width = ADULT_DIM - len(_ADULT_CONTINUOUS) - 1
    cats = np.zeros((count, cat_width))
    labels = np.zeros(count, dtype=np.int64)
    col_of = {name: i for i, name in enumerate(_ADULT_COLUMNS)}
    for r, fields in enumerate(rows):
        for i, name in enumerate(_ADULT_CONTINUOUS):
            try:
                cont[r, i] = float(fields[col_of[name]])
            except ValueError as exc:
                raise CorruptDataError(f"{path}: non-numeric {name}: {exc}") from exc
        off = 0
        for name, vocab in _ADULT_VOCAB.items():
            value = fields[col_of[name]]
            try:
                cats[r, off + vocab.index(value)] = 1.0
            except ValueError:
                raise CorruptDataError(f"{path}: unknown {name} value {value!r}")
            off += len(vocab)
        country = fields[col_of["native-country"]]
        if country in _ADULT_TOP_COUNTRIES:
            cats[r, off + _ADULT_TOP_COUNTRIES.index(country)] = 1.0
        else:
            cats[r, off + len(_ADULT_TOP_COUNTRIES)] = 1.0
        raw_label = fields[col_of["label"]].rstrip(".")
        if raw_label == ">50K":
            labels[r] = 1
        elif raw_label == "<=50K":
            labels[r] = 0
        else:
            raise CorruptDataError(f"{path}: unknown label {raw_label!r}")
    return np.hstack([cont, cats]), labels


def load_adult(data_dir: str | Path) -> tuple[Dataset, Dataset]:
    """UCI Adult train/test, one-hot encoded into 81 features (incl. bias).

    Rows with missing fields are dropped. Continuous columns are min-max
    scaled with ranges taken from the training split.
    """
    data_dir = Path(data_dir)
    train_path = data_dir / "adult.data"
    test_path = data_dir / "adult.test"
    for p in (train_path, test_path):
        if not p.exists():
            raise FileNotFoundError(f"missing {p}")
    splits = []
    for path in (train_path, test_path):
        rows, dropped = _adult_rows(path)
        if dropped:
            log.info("adult: dropped %d incomplete rows from %s", dropped, path.name)
        if not rows:
            raise CorruptDataError(f"{path}: no usable rows")
        splits.append(_adult_encode(rows, path))
    n_cont = len(_ADULT_CONTINUOUS)
    lo = splits[0][0][:, :n_cont].min(axis=0)
    hi = splits[0][0][:, :n_cont].max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    out = []
    for feats, labels in splits:
        feats = feats.copy()
        feats[:, :n_cont] = (feats[:, :n_cont] - lo) / span
        feats = np.hstack([feats, np.ones((feats.shape[0], 1))])
        out.append(Dataset(feats, labels))
    return out[0], out[1]


# ---------------------------------------------------------------- CSV dumps


def save_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset as label,f0,...  (bias column omitted)."""
    path = Path(path)
    width = data.features.shape[1] - 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(width)])
        for label, row in zip(data.labels, data.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row[:width]])


def load_csv(path: str | Path) -> Dataset:
    """Read a dataset written by save_csv; bias column re-appended."""
    path = Path(path)
    feats, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise CorruptDataError(f"{path}: missing label header")
        width = len(header) - 1
        for line in reader:
            if len(line) != width + 1:
                raise CorruptDataError(f"{path}: row width {len(line)} != {width + 1}")
            try:
                labels.append(int(line[0]))
                feats.append([float(v) for v in line[1:]])
            except ValueError as exc:
                raise CorruptDataError(f"{path}: {exc}") from exc
    if not feats:
        raise CorruptDataError(f"{path}: no data rows")
    arr = np.asarray(feats)
    arr = np.hstack([arr, np.ones((arr.shape[0], 1))])
    return Dataset(arr, np.asarray(labels, dtype=np.int64))
