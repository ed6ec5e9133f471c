"""Dataset ingestion, normalization, MCAR masking, splits, and the synthetic
milk-study stand-in.

CSV convention: header row first, comma delimiter, decimal point, one column
designated as the class by name or zero-based index. Missing cells carry a
marker string (default "?"). Internally a missing cell is NaN; parsed data
cells must otherwise be finite numbers.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .rng import RngStream

MISSING_MARKER_DEFAULT = "?"

# Seed for the shipped synthetic milk stand-in, fixed so the dataset is the
# same across experiments; variation across runs comes from masking/training.
SYNTH_MILK_SEED = 20


def round_half_up(x):
    """Fixed rounding convention for instance and cell counts."""
    return int(np.floor(x + 0.5))


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawTable:
    """Parsed table: numeric cells (NaN where missing) plus class labels."""

    attribute_names: list
    values: np.ndarray  # (N, d) float64, NaN marks a missing cell
    class_labels: np.ndarray  # (N,) str
    source_id: str

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_attributes(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class NormParams:
    """Per-attribute min/max in original units."""

    mins: np.ndarray
    maxs: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Complete numeric matrix scaled to [0,1], with labels and scaling params."""

    values: np.ndarray  # (N, d) in [0, 1]
    class_labels: np.ndarray  # (N,)
    norm: NormParams
    attribute_names: list
    source_id: str = ""

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_attributes(self):
        return self.values.shape[1]

    def subset(self, idx):
        return Dataset(
            values=_frozen(self.values[idx]),
            class_labels=self.class_labels[idx],
            norm=self.norm,
            attribute_names=self.attribute_names,
            source_id=self.source_id,
        )


@dataclass(frozen=True)
class MaskedDataset:
    """A Dataset plus a missing-cell mask and the -1 sentinel view."""

    base: Dataset
    mask: np.ndarray  # (N, d) bool, True = missing
    sentinel_view: np.ndarray  # base.values with -1 at masked cells
    rate: float


@dataclass(frozen=True)
class FoldSplit:
    k: int
    fold_assignment: np.ndarray  # (N,) ints in [0, k)


def _parse_cell(text, marker, where):
    cell = text.strip()
    if cell == marker:
        return np.nan
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"non-numeric cell {cell!r} at {where}") from None
    if not np.isfinite(v):
        raise DataError(f"non-finite cell {cell!r} at {where}")
    return v


def resolve_class_index(header, class_column):
    """Map a class-column name or (possibly negative) index to a position."""
    if isinstance(class_column, int) or (isinstance(class_column, str) and class_column.lstrip("-").isdigit()):
        class_idx = int(class_column)
        if class_idx < 0:
            class_idx += len(header)
        if not 0 <= class_idx < len(header):
            raise DataError(f"class column index {class_column} out of range")
        return class_idx
    if class_column is None or class_column not in header:
        raise DataError(f"class column {class_column!r} not found in header {header}")
    return header.index(class_column)


def parse_csv_text(text, class_column, missing_marker=MISSING_MARKER_DEFAULT,
                   attribute_names=None, source_id=""):
    """Parse CSV text into a RawTable.

    Returns (table, header, raw_rows); raw_rows holds the original cell
    strings (class column included) so callers can write outputs that keep
    observed cells verbatim. When attribute_names is given the text is read
    without a header row and the names must cover every column.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() != "" for cell in row)]
    if attribute_names is None:
        if not rows:
            raise DataError("no data rows")
        header = [h.strip() for h in rows[0]]
        data_rows = rows[1:]
    else:
        header = list(attribute_names)
        data_rows = rows
    if not data_rows:
        raise DataError("no data rows")

    class_idx = resolve_class_index(header, class_column)

    names = [h for i, h in enumerate(header) if i != class_idx]
    if len(set(names)) != len(names):
        raise DataError("attribute names are not unique")

    width = len(header)
    values = np.empty((len(data_rows), width - 1), dtype=np.float64)
    labels = []
    for r, row in enumerate(data_rows):
        if len(row) != width:
            raise DataError(f"ragged row {r}: expected {width} cells, got {len(row)}")
        label = row[class_idx].strip()
        if label == "" or label == missing_marker:
            raise DataError(f"missing class label at row {r}")
        labels.append(label)
        c = 0
        for i, cell in enumerate(row):
            if i == class_idx:
                continue
            values[r, c] = _parse_cell(cell, missing_marker, f"row {r}, column {header[i]!r}")
            c += 1
    table = RawTable(
        attribute_names=names,
        values=_frozen(values),
        class_labels=np.array(labels, dtype=object),
        source_id=source_id,
    )
    return table, header, [list(row) for row in data_rows]


def load_csv(path, class_column, missing_marker=MISSING_MARKER_DEFAULT, attribute_names=None):
    """Load a CSV file into a RawTable. See parse_csv_text for the format."""
    try:
        with open(path, "r", newline="") as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    table, _, _ = parse_csv_text(
        text, class_column, missing_marker=missing_marker,
        attribute_names=attribute_names, source_id=str(path),
    )
    return table


def complete_cases(raw):
    """Rows of `raw` with zero missing cells, original order preserved."""
    keep = ~np.isnan(raw.values).any(axis=1)
    if not keep.any():
        raise DataError("no complete cases")
    return RawTable(
        attribute_names=raw.attribute_names,
        values=_frozen(raw.values[keep]),
        class_labels=raw.class_labels[keep],
        source_id=raw.source_id,
    )


def drop_attributes(raw, names):
    """Remove the named attribute columns (e.g. a sample-id column)."""
    missing = [n for n in names if n not in raw.attribute_names]
    if missing:
        raise DataError(f"cannot drop unknown attributes {missing}")
    keep = [i for i, n in enumerate(raw.attribute_names) if n not in names]
    return RawTable(
        attribute_names=[raw.attribute_names[i] for i in keep],
        values=_frozen(raw.values[:, keep]),
        class_labels=raw.class_labels,
        source_id=raw.source_id,
    )


def normalize(raw):
    """Per-attribute min-max scaling of a complete table to [0, 1].

    Zero-range attributes map to 0.0 with min == max recorded so the
    constant survives denormalization.
    """
    if np.isnan(raw.values).any():
        raise DataError("cannot normalize a table with missing cells")
    mins = raw.values.min(axis=0)
    maxs = raw.values.max(axis=0)
    span = maxs - mins
    scaled = np.where(span > 0, (raw.values - mins) / np.where(span > 0, span, 1.0), 0.0)
    return Dataset(
        values=_frozen(scaled),
        class_labels=raw.class_labels.copy(),
        norm=NormParams(mins=_frozen(mins), maxs=_frozen(maxs)),
        attribute_names=list(raw.attribute_names),
        source_id=raw.source_id,
    )


def denormalize(ds, values):
    """Map [0,1]-scaled values back to original units using ds.norm."""
    values = np.asarray(values, dtype=np.float64)
    d = ds.norm.mins.shape[0]
    if values.ndim != 2 or values.shape[1] != d:
        raise UsageError(f"expected (n, {d}) values, got shape {values.shape}")
    span = ds.norm.maxs - ds.norm.mins
    return ds.norm.mins + values * span


def mcar_cell_mask(n_rows, n_cols, rate, gen):
    """Boolean mask with exactly round_half_up(rate*cells) True entries,
    chosen uniformly without replacement."""
    total = n_rows * n_cols
    k = round_half_up(rate * total)
    mask = np.zeros(total, dtype=bool)
    if k > 0:
        mask[gen.choice(total, size=k, replace=False)] = True
    return mask.reshape(n_rows, n_cols)


def mask_mcar(ds, rate, rng):
    """MCAR-mask a dataset: masked cells become -1 in the sentinel view.

    Masking covers the numeric attributes only; class labels are never
    masked. Deterministic given the rng seed.
    """
    if not 0.0 <= rate <= 1.0:
        raise UsageError(f"missing rate must be in [0, 1], got {rate}")
    mask = mcar_cell_mask(ds.n_rows, ds.n_attributes, rate, rng.generator)
    sentinel = np.where(mask, -1.0, ds.values)
    return MaskedDataset(base=ds, mask=_frozen(mask), sentinel_view=_frozen(sentinel), rate=rate)


def split(ds, train_fraction, rng):
    """Random partition into (train, test) with round_half_up(f*N) train rows."""
    if not 0.0 < train_fraction < 1.0:
        raise UsageError(f"train fraction must be in (0, 1), got {train_fraction}")
    n = ds.n_rows
    n_train = round_half_up(train_fraction * n)
    if n_train == 0 or n_train == n:
        raise UsageError(f"split of {n} rows at {train_fraction} leaves an empty part")
    perm = rng.generator.permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def kfold(ds, k, rng):
    """Random fold assignment with fold sizes differing by at most one."""
    n = ds.n_rows
    if not 2 <= k <= n:
        raise UsageError(f"fold count must be in [2, {n}], got {k}")
    perm = rng.generator.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    start = 0
    for fold, size in enumerate(sizes):
        assignment[perm[start:start + size]] = fold
        start += size
    return FoldSplit(k=k, fold_assignment=_frozen(assignment))


# Synthetic stand-in for the proprietary milk study: 11 correlated numeric
# attributes, two classes of equal weight. Units are plausible but invented.
MILK_ATTRIBUTES = [
    "milk_quantity", "casein", "fat", "lactose", "ph", "protein",
    "urea", "somatic_cells", "dry_matter", "density", "conductivity",
]
_MILK_MEAN = np.array([22.0, 2.6, 3.9, 4.7, 6.6, 3.3, 25.0, 200.0, 12.5, 1.031, 4.8])
_MILK_SIGMA = np.array([6.0, 0.3, 0.7, 0.25, 0.15, 0.35, 6.0, 150.0, 1.0, 0.002, 0.6])
_MILK_SHIFT = np.array([-4.0, -0.2, -0.3, -0.35, 0.12, -0.15, 3.0, 250.0, -0.7, -0.001, 0.8])
# AR(1)-style attribute correlation; strong, matching how tightly milk
# composition attributes (casein, protein, fat, ...) track each other
_MILK_RHO = 0.88


def synth_milk(n, seed=SYNTH_MILK_SEED):
    """Seeded synthetic dataset shaped like the milk study (d=11, two classes).

    Rows are drawn from a two-component correlated Gaussian mixture with
    equal component weights; the component id is the class label. Values are
    clipped to fixed bounds and then min-max normalized.
    """
    if n < 2:
        raise UsageError(f"need at least 2 instances, got {n}")
    gen = RngStream(seed).generator
    d = len(MILK_ATTRIBUTES)
    corr = _MILK_RHO ** np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    cov = corr * np.outer(_MILK_SIGMA, _MILK_SIGMA)
    component = gen.integers(0, 2, size=n)
    noise = gen.multivariate_normal(np.zeros(d), cov, size=n, method="cholesky")
    values = _MILK_MEAN + component[:, None] * _MILK_SHIFT + noise
    lo = _MILK_MEAN - 3.5 * _MILK_SIGMA
    hi = _MILK_MEAN + _MILK_SHIFT + 3.5 * _MILK_SIGMA
    values = np.clip(values, np.minimum(lo, hi), np.maximum(lo, hi))
    table = RawTable(
        attribute_names=list(MILK_ATTRIBUTES),
        values=_frozen(values),
        class_labels=np.array([str(c) for c in component], dtype=object),
        source_id=f"synth-milk(n={n}, seed={seed})",
    )
    return normalize(table)


def dataset_to_csv(ds, class_name="class", denormalized=True):
    """Serialize a Dataset in the package CSV convention (header + class column)."""
    values = denormalize(ds, ds.values) if denormalized else ds.values
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(ds.attribute_names) + [class_name])
    for row, label in zip(values, ds.class_labels):
        writer.writerow([repr(float(v)) for v in row] + [str(label)])
    return buf.getvalue()


# Built-in dataset schemas. The UCI files are not fetched automatically;
# place them under the data directory (see data/README.md).
_WISC_COLUMNS = [
    "sample_id", "clump_thickness", "cell_size_uniformity", "cell_shape_uniformity",
    "marginal_adhesion", "single_epithelial_cell_size", "bare_nuclei",
    "bland_chromatin", "normal_nucleoli", "mitoses", "class",
]
_PIMA_COLUMNS = [
    "pregnancies", "glucose", "blood_pressure", "skin_thickness",
    "insulin", "bmi", "diabetes_pedigree", "age", "class",
]
BUILTIN_DATASETS = {
    "wisc": ["breast-cancer-wisconsin.data", "wisc.csv"],
    "pima": ["pima-indians-diabetes.csv", "pima-indians-diabetes.data", "pima.csv"],
    "synth-milk": [],
}


def _find_builtin_file(name, data_dir):
    import os

    for candidate in BUILTIN_DATASETS[name]:
        path = os.path.join(data_dir, candidate)
        if os.path.exists(path):
            return path
    raise DataError(
        f"dataset {name!r} not found under {data_dir!r}; expected one of "
        f"{BUILTIN_DATASETS[name]} (see data/README.md for fetch instructions)"
    )


def load_builtin(name, data_dir="data", n_synth=610, synth_seed=SYNTH_MILK_SEED):
    """Resolve a builtin dataset id to a normalized complete-case Dataset."""
    if name == "synth-milk":
        return synth_milk(n_synth, seed=synth_seed)
    if name not in BUILTIN_DATASETS:
        raise UsageError(f"unknown builtin dataset {name!r}")
    path = _find_builtin_file(name, data_dir)
    if name == "wisc":
        raw = load_csv(path, class_column="class", missing_marker="?",
                       attribute_names=_WISC_COLUMNS)
        raw = drop_attributes(raw, ["sample_id"])
    else:  # pima
        raw = load_csv(path, class_column="class", missing_marker="?",
                       attribute_names=_PIMA_COLUMNS)
    return normalize(complete_cases(raw))


def load_dataset(spec, class_column=None, missing_marker=MISSING_MARKER_DEFAULT,
                 data_dir="data"):
    """Load either a builtin dataset id or a CSV path into a Dataset."""
    if spec in BUILTIN_DATASETS:
        return load_builtin(spec, data_dir=data_dir)
    if class_column is None:
        raise UsageError(f"class column required for CSV dataset {spec!r}")
    raw = load_csv(spec, class_column=class_column, missing_marker=missing_marker)
    return normalize(complete_cases(raw))
