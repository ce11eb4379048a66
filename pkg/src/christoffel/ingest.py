"""Loading labeled point clouds: generic CSV, the KDD Cup 99 pipeline and synthetic clouds."""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np


class DataError(ValueError):
    """Malformed input data (row and column are part of the message)."""


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.points, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.labels, dtype=bool).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} points but {y.shape[0]} labels")
        if not np.isfinite(X).all():
            raise ValueError("dataset contains non-finite coordinates")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    @property
    def attack_fraction(self) -> float:
        return float(self.labels.mean()) if self.n else math.nan

    def __len__(self) -> int:
        return self.n


def _open_text(path) -> io.TextIOBase:
    path = os.fspath(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", newline="")
    return open(path, newline="")


_TRUE = {"1", "true", "yes", "t", "y"}
_FALSE = {"0", "false", "no", "f", "n"}


def load_csv(path, feature_columns: Optional[Sequence[Union[str, int]]] = None,
             label_column: Optional[Union[str, int]] = None,
             label_positive_values: Optional[Iterable[str]] = None,
             header: bool = True, name: Optional[str] = None) -> LabeledDataset:
    """Read a comma-separated file into a :class:`LabeledDataset`.

    Columns are referred to by header name (or by 0-based index when the file
    has no header).  Without ``feature_columns`` every column except the
    label is a feature.  Labels are true when the cell is one of
    ``label_positive_values``, or, if those are not given, when it parses as
    a true boolean (``1``/``true``/...).  Without ``label_column`` all labels
    are false.
    """
    positives = None if label_positive_values is None else {str(v).strip() for v in label_positive_values}
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            names = [] if header else None
            rows: list = []
        else:
            names = [c.strip() for c in first] if header else None
            rows = list(reader) if header else [first] + list(reader)

    width = len(names) if names is not None else (len(rows[0]) if rows else 0)

    def resolve(col) -> int:
        if isinstance(col, int) or (isinstance(col, str) and col.isdigit() and names is None):
            i = int(col)
            if not 0 <= i < width:
                raise DataError(f"{path}: column index {i} out of range (file has {width} columns)")
            return i
        if names is None:
            raise DataError(f"{path}: column {col!r} given by name but the file has no header")
        if col not in names:
            raise DataError(f"{path}: column {col!r} not found in header {names}")
        return names.index(col)

    label_idx = resolve(label_column) if label_column is not None else None
    if feature_columns is None:
        feat_idx = [i for i in range(width) if i != label_idx]
    else:
        feat_idx = [resolve(c) for c in feature_columns]
    if not feat_idx and rows:
        raise DataError(f"{path}: no feature columns")

    offset = 2 if header else 1
    X = np.empty((len(rows), len(feat_idx)))
    y = np.zeros(len(rows), dtype=bool)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {r + offset} has {len(row)} fields, expected {width}")
        for k, c in enumerate(feat_idx):
            cell = row[c].strip()
            try:
                val = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r + offset}, column {_colname(names, c)}: "
                                f"cannot parse {cell!r} as a number") from None
            if not math.isfinite(val):
                raise DataError(f"{path}: row {r + offset}, column {_colname(names, c)}: non-finite value {cell!r}")
            X[r, k] = val
        if label_idx is not None:
            cell = row[label_idx].strip()
            if positives is not None:
                y[r] = cell in positives
            elif cell.lower() in _TRUE:
                y[r] = True
            elif cell.lower() not in _FALSE:
                raise DataError(f"{path}: row {r + offset}, column {_colname(names, label_idx)}: "
                                f"label {cell!r} is not boolean; pass label_positive_values")
    return LabeledDataset(X, y, name if name is not None else os.path.basename(os.fspath(path)))


def _colname(names, c) -> str:
    return repr(names[c]) if names is not None else str(c)


def write_csv(dataset: LabeledDataset, path) -> None:
    """Write ``x1,...,xp,label`` with labels as 0/1, rows in dataset order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(dataset.p)] + ["label"])
        for x, lab in zip(dataset.points, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(lab)])


# KDD Cup 99 ------------------------------------------------------------

KDD_FIELDS = 42
KDD_DURATION, KDD_SERVICE, KDD_SRC_BYTES, KDD_DST_BYTES, KDD_LOGGED_IN, KDD_LABEL = 0, 2, 4, 5, 11, 41
KDD_FEATURES = ("duration", "src_bytes", "dst_bytes")
KDD_RAW_ROWS = 4898431

# reference sizes and attack proportions of the five datasets
KDD_TABLE = {
    "http": (567498, 0.004),
    "smtp": (95156, 0.0003),
    "ftp-data": (30464, 0.023),
    "ftp": (4091, 0.077),
    "others": (5858, 0.016),
}


def kdd_log_transform(x, base: Optional[float] = None):
    """x -> log(x + 0.1) / 10, natural log unless ``base`` is given."""
    out = np.log(np.asarray(x, dtype=np.float64) + 0.1) / 10.0
    return out / math.log(base) if base is not None else out


def _dataset_name(service: str) -> str:
    return service.replace("_", "-")


def kdd_prepare(raw_path, transform: Callable = kdd_log_transform, n_split: int = 4) -> dict[str, LabeledDataset]:
    """Build the http/smtp/ftp-data/ftp/others datasets from the raw connection log.

    Keeps rows with logged_in > 0, takes duration, src_bytes and dst_bytes
    through ``transform`` and splits by the ``n_split`` most frequent
    services (counted after filtering); all remaining services are pooled
    into ``others``.  Any connection type other than ``normal`` is an attack.
    Datasets are returned in decreasing order of service frequency, then
    ``others``; row order follows the input.
    """
    services: list[str] = []
    feats: list[tuple[float, float, float]] = []
    labels: list[bool] = []
    with _open_text(raw_path) as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != KDD_FIELDS:
                raise DataError(f"{raw_path}: line {lineno} has {len(row)} fields, expected {KDD_FIELDS}")
            try:
                logged_in = float(row[KDD_LOGGED_IN])
                if not logged_in > 0:
                    continue
                vals = (float(row[KDD_DURATION]), float(row[KDD_SRC_BYTES]), float(row[KDD_DST_BYTES]))
            except ValueError as exc:
                raise DataError(f"{raw_path}: line {lineno}: {exc}") from None
            services.append(row[KDD_SERVICE])
            feats.append(vals)
            labels.append(row[KDD_LABEL].strip().rstrip(".") != "normal")

    counts = Counter(services)
    # ties broken by service name so the split is deterministic
    top = [s for s, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n_split]]
    X = transform(np.array(feats, dtype=np.float64).reshape(-1, 3))
    y = np.array(labels, dtype=bool)
    svc = np.array(services, dtype=object)

    out: dict[str, LabeledDataset] = {}
    rest = np.ones(len(services), dtype=bool)
    for s in top:
        mask = svc == s
        rest &= ~mask
        out[_dataset_name(s)] = LabeledDataset(X[mask], y[mask], _dataset_name(s))
    out["others"] = LabeledDataset(X[rest], y[rest], "others")
    return out


def kdd_table_check(datasets: dict[str, LabeledDataset]) -> list[str]:
    """Differences between ``datasets`` and the reference sizes/proportions (empty when all match)."""
    problems = []
    for name, (size, prop) in KDD_TABLE.items():
        ds = datasets.get(name)
        if ds is None:
            problems.append(f"{name}: missing")
            continue
        if ds.n != size:
            problems.append(f"{name}: {ds.n} rows, expected {size}")
        if not matches_printed(ds.attack_fraction, prop):
            problems.append(f"{name}: attack proportion {ds.attack_fraction:.6f}, expected {prop}")
    return problems


def matches_printed(value: float, printed: float) -> bool:
    """True if ``value`` rounds to ``printed`` at the precision ``printed`` is written with."""
    text = repr(printed)
    decimals = len(text.split(".")[1]) if "." in text else 0
    return round(value, decimals) == printed


def sha256_file(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(chunk), b""):
            h.update(block)
    return h.hexdigest()


# synthetic clouds --------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Equal-weight mixture; ``n`` points split as evenly as possible. No outliers."""

    n: int = 1000
    means: tuple = ((0.0, 0.0), (3.0, 2.0))
    covariances: tuple = (((1.0, 0.6), (0.6, 0.8)), ((0.6, -0.4), (-0.4, 0.9)))
    kind: str = field(default="gaussians", init=False)


@dataclass(frozen=True)
class RingSpec:
    """Points near a circle plus uniform background points on a larger square (labeled outliers)."""

    n_ring: int = 1000
    n_bg: int = 40
    radius: float = 1.0
    noise: float = 0.05
    half_width: float = 3.0
    kind: str = field(default="ring", init=False)


SPEC_KINDS = {"gaussians": GaussianMixtureSpec, "ring": RingSpec}


def _parse_spec(spec) -> Union[GaussianMixtureSpec, RingSpec]:
    if isinstance(spec, (GaussianMixtureSpec, RingSpec)):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or spec.get("kind") not in SPEC_KINDS:
        raise ValueError(f"synthetic spec needs kind in {sorted(SPEC_KINDS)}, got {spec!r}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        return SPEC_KINDS[spec["kind"]](**params)
    except TypeError as exc:
        raise ValueError(f"invalid {spec['kind']} spec: {exc}") from None


def synth_cloud(spec, seed: int) -> LabeledDataset:
    """Deterministic synthetic cloud in the plane for a given ``seed``."""
    spec = _parse_spec(spec)
    rng = np.random.default_rng(seed)
    if isinstance(spec, GaussianMixtureSpec):
        k = len(spec.means)
        if spec.n < 1 or k == 0 or len(spec.covariances) != k:
            raise ValueError("gaussian mixture spec needs n >= 1 and one covariance per mean")
        sizes = [spec.n // k + (i < spec.n % k) for i in range(k)]
        parts = [rng.multivariate_normal(np.asarray(m, float), np.asarray(c, float), size=m_n)
                 for m, c, m_n in zip(spec.means, spec.covariances, sizes)]
        X = np.vstack(parts)
        return LabeledDataset(X, np.zeros(spec.n, dtype=bool), "gaussians")
    if spec.n_ring < 0 or spec.n_bg < 0 or spec.n_ring + spec.n_bg == 0:
        raise ValueError("ring spec needs nonnegative counts and at least one point")
    if not (spec.radius > 0 and spec.noise >= 0 and spec.half_width > 0):
        raise ValueError("ring spec needs radius > 0, noise >= 0, half_width > 0")
    angle = rng.uniform(0.0, 2 * np.pi, size=spec.n_ring)
    r = spec.radius + spec.noise * rng.standard_normal(spec.n_ring)
    ring = np.column_stack([r * np.cos(angle), r * np.sin(angle)])
    bg = rng.uniform(-spec.half_width, spec.half_width, size=(spec.n_bg, 2))
    labels = np.concatenate([np.zeros(spec.n_ring, dtype=bool), np.ones(spec.n_bg, dtype=bool)])
    return LabeledDataset(np.vstack([ring, bg]), labels, "ring")
