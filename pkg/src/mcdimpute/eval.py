"""Metrics and the cross-validated experiment grid.

Two metrics: RMSE over masked cells (normalized scale) and
delta-acc, the accuracy difference between a classifier trained on
original data and one trained on imputed data, both evaluated on data
neither saw. run_cv drives the (dataset x model x rate x fold) grid.

Fold protocol: the fold's training portion trains the imputation model
(denoising corruption at the experiment's rate); the held-out portion is
masked at the same rate and imputed; RMSE compares imputed to truth on
masked cells; delta-acc uses the original/imputed held-out portion as the
two classifier training sets and the fold's training portion as the
classifier evaluation set.

Every job reseeds from (master seed, cell key), so reports are identical
for any --jobs value; the same fold mask is shared by all model kinds and
the deterministic/MCD variants of a family share one trained network.
"""

import ast
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dataio, imputer, models
from .config import config_items
from .errors import DataError, DivergenceError, UsageError
from .nn import sigmoid
from .rng import RngStream

CLASSIFIER_LR = 0.1
CLASSIFIER_ITERATIONS = 500


def rmse_masked(imputed, truth, mask):
    """Root mean squared error over masked cells only."""
    imputed = np.asarray(imputed, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not imputed.shape == truth.shape == mask.shape:
        raise UsageError(f"shape mismatch {imputed.shape}/{truth.shape}/{mask.shape}")
    if not mask.any():
        raise UsageError("no masked cells")
    diff = imputed[mask] - truth[mask]
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class Classifier:
    """Binary logistic regression; weights[-1] is the bias."""

    weights: np.ndarray
    classes: tuple  # (negative, positive), sorted label order
    lr: float = CLASSIFIER_LR
    iterations: int = CLASSIFIER_ITERATIONS
    seed: int = 0


def _augment(values):
    return np.hstack([values, np.ones((values.shape[0], 1))])


def classifier_fit(train, seed=0, lr=CLASSIFIER_LR, iterations=CLASSIFIER_ITERATIONS):
    """Full-batch gradient descent from all-zero weights; deterministic."""
    classes = tuple(sorted(set(train.class_labels)))
    if len(classes) != 2:
        raise DataError(f"need exactly 2 classes, got {len(classes)}: {classes}")
    X = _augment(train.values)
    y = (train.class_labels == classes[1]).astype(np.float64)
    w = np.zeros(X.shape[1])
    n = X.shape[0]
    for _ in range(iterations):
        p = sigmoid(X @ w)
        w -= lr * (X.T @ (p - y)) / n
    return Classifier(weights=w, classes=classes, lr=lr, iterations=iterations, seed=seed)


def classifier_accuracy(c, test):
    """Fraction of rows whose thresholded prediction matches the label."""
    if test.n_rows == 0:
        raise UsageError("empty test set")
    unknown = set(test.class_labels) - set(c.classes)
    if unknown:
        raise DataError(f"labels {sorted(unknown)} unseen during training")
    if test.values.shape[1] + 1 != c.weights.shape[0]:
        raise UsageError("attribute count does not match classifier")
    p = sigmoid(_augment(test.values) @ c.weights)
    predicted = p >= 0.5
    actual = test.class_labels == c.classes[1]
    return float(np.mean(predicted == actual))


def delta_acc(original_train, imputed_train, eval_set, seed=0):
    """acc(classifier on original) - acc(classifier on imputed), on eval_set."""
    c1 = classifier_fit(original_train, seed)
    c2 = classifier_fit(imputed_train, seed)
    return classifier_accuracy(c1, eval_set) - classifier_accuracy(c2, eval_set)


def _sample_std(xs):
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


@dataclass
class CellResult:
    """Per-fold metrics for one (dataset, model kind, rate) grid cell."""

    rmse_folds: list = field(default_factory=list)
    delta_folds: list = field(default_factory=list)
    failed: bool = False
    error: str = ""

    @property
    def rmse_mean(self):
        return float(np.mean(self.rmse_folds))

    @property
    def rmse_std(self):
        return _sample_std(self.rmse_folds)

    @property
    def delta_mean(self):
        return float(np.mean(self.delta_folds))

    @property
    def delta_std(self):
        return _sample_std(self.delta_folds)


@dataclass
class EvalReport:
    cells: dict  # (dataset, kind, rate) -> CellResult
    datasets: list
    model_kinds: list
    rates: list
    folds: int
    config: dict  # resolved-config echo


def _run_fold(p):
    """One grid job: train one network, score its requested kind(s)."""
    ds = p["dataset"]
    name, rate, fold, base = p["name"], p["rate"], p["fold"], p["base_kind"]
    root = RngStream(p["seed"])
    key = (name, rate, fold)
    try:
        train_rows = p["assignment"] != fold
        train_ds = ds.subset(train_rows)
        held = ds.subset(~train_rows)
        if base == "ae":
            model = models.build_ae(ds.n_attributes, p["dropout_p"],
                                    root.child("build", *key, base))
        else:
            model = models.build_vae(ds.n_attributes, p["dropout_p"], p["kl_weight"],
                                     root.child("build", *key, base))
        tc = models.TrainConfig(epochs=p["epochs"], batch_size=p["batch_size"],
                                corruption_rate=rate, lr=p["lr"])
        models.train_denoising(model, train_ds, tc, rng=root.child("train", *key, base))
        md = dataio.mask_mcar(held, rate, root.child("mask", *key))
        out = {}
        for kind in p["kinds"]:
            if kind.startswith("mcd-"):
                icfg = imputer.ImputeConfig(mode="mcd", T=p["T"])
                imputed = imputer.impute_dataset(kind, model, md, icfg,
                                                 rng=root.child("impute", *key, kind))
            else:
                imputed = imputer.impute_dataset(kind, model, md)
            rmse = rmse_masked(imputed.values, held.values, md.mask)
            delta = delta_acc(held, imputed, train_ds)
            out[kind] = (rmse, delta)
        return name, rate, fold, p["kinds"], out, None
    except (DivergenceError, DataError) as e:
        return name, rate, fold, p["kinds"], None, f"{type(e).__name__}: {e}"


def run_cv(config):
    """Run the full grid described by an ExperimentConfig."""
    if not config.dataset:
        raise UsageError("dataset missing")
    loaded = {}
    for name in config.dataset:
        loaded[name] = dataio.load_dataset(name, class_column=config.class_column,
                                           data_dir=config.data_dir)
        if loaded[name].n_rows < config.folds:
            raise UsageError(f"{name}: fewer rows than folds")
    root = RngStream(config.seed)
    assignments = {
        name: dataio.kfold(ds, config.folds, root.child("folds", name)).fold_assignment
        for name, ds in loaded.items()
    }

    # one job trains one network and serves both its deterministic and MCD
    # consumers, so e.g. ae and mcd-ae really share weights
    base_map = {}
    for kind in config.model_kinds:
        base_map.setdefault(kind.removeprefix("mcd-"), []).append(kind)

    jobs = []
    for name in config.dataset:
        for rate in config.missing_rates:
            for base, kinds in base_map.items():
                for fold in range(config.folds):
                    jobs.append({
                        "name": name, "dataset": loaded[name],
                        "assignment": assignments[name],
                        "base_kind": base, "kinds": kinds,
                        "rate": rate, "fold": fold,
                        "seed": config.seed, "epochs": config.epochs,
                        "dropout_p": config.dropout_p, "T": config.mc_samples,
                        "batch_size": config.batch_size, "lr": config.lr,
                        "kl_weight": config.kl_weight,
                    })

    if config.jobs == 1:
        results = [_run_fold(p) for p in jobs]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=config.jobs, mp_context=ctx) as ex:
            results = list(ex.map(_run_fold, jobs))

    cells = {}
    for name, rate, fold, kinds, out, err in results:
        for kind in kinds:
            cell = cells.setdefault((name, kind, rate), CellResult())
            if err is not None:
                cell.failed = True
                if not cell.error:
                    cell.error = err
            else:
                rmse, delta = out[kind]
                cell.rmse_folds.append(rmse)
                cell.delta_folds.append(delta)
    return EvalReport(
        cells=cells,
        datasets=list(config.dataset),
        model_kinds=list(config.model_kinds),
        rates=list(config.missing_rates),
        folds=config.folds,
        config={k: v for k, v in config_items(config)},
    )


def _rate_label(rate):
    return f"{rate:.10g}"


def _format_table(title, columns, rows):
    """rows: list of (label, [cell strings]); columns: header names."""
    widths = [max(len("model"), *(len(r[0]) for r in rows))]
    for j, col in enumerate(columns):
        widths.append(max(len(col), *(len(r[1][j]) for r in rows)))
    lines = [title]
    header = ["model".ljust(widths[0])] + [c.ljust(widths[j + 1]) for j, c in enumerate(columns)]
    lines.append("  ".join(header).rstrip())
    for label, cells in rows:
        line = [label.ljust(widths[0])] + [c.ljust(widths[j + 1]) for j, c in enumerate(cells)]
        lines.append("  ".join(line).rstrip())
    return lines


def format_report(report):
    """Report text: per rate an RMSE table, then a delta-acc table.

    The lowest RMSE in each dataset column is marked with '*'. Failed
    cells print as 'failed'.
    """
    lines = ["# imputation benchmark report", ""]
    lines += [f"config.{k}={v!r}" for k, v in report.config.items()]
    lines.append("")
    for rate in report.rates:
        best = {}
        for name in report.datasets:
            ok = [(report.cells[(name, kind, rate)].rmse_mean, kind)
                  for kind in report.model_kinds
                  if not report.cells[(name, kind, rate)].failed]
            if ok:
                best[name] = min(ok)[1]
        rows = []
        for kind in report.model_kinds:
            cells = []
            for name in report.datasets:
                cell = report.cells[(name, kind, rate)]
                if cell.failed:
                    cells.append("failed")
                else:
                    mark = "*" if best.get(name) == kind else ""
                    cells.append(f"{cell.rmse_mean:.5f}[{cell.rmse_std:.4f}]{mark}")
            rows.append((kind, cells))
        lines += _format_table(f"RMSE, missing rate {_rate_label(rate)}",
                               report.datasets, rows)
        lines.append("")
        rows = []
        for kind in report.model_kinds:
            cells = []
            for name in report.datasets:
                cell = report.cells[(name, kind, rate)]
                cells.append("failed" if cell.failed else f"{cell.delta_mean:.5f}")
            rows.append((kind, cells))
        lines += _format_table(f"delta-acc, missing rate {_rate_label(rate)}",
                               report.datasets, rows)
        lines.append("")
    return "\n".join(lines)


def format_kv(report):
    """Line-oriented key=value dump of the config and every per-fold number."""
    lines = [f"config.{k}={v!r}" for k, v in report.config.items()]
    for name in report.datasets:
        for kind in report.model_kinds:
            for rate in report.rates:
                cell = report.cells[(name, kind, rate)]
                prefix = f"result.{name}.{kind}.{_rate_label(rate)}"
                if cell.failed:
                    lines.append(f"{prefix}.failed={cell.error!r}")
                for i, (rmse, delta) in enumerate(zip(cell.rmse_folds, cell.delta_folds)):
                    lines.append(f"{prefix}.fold{i}.rmse={rmse!r}")
                    lines.append(f"{prefix}.fold{i}.delta_acc={delta!r}")
                if cell.rmse_folds:
                    lines.append(f"{prefix}.rmse_mean={cell.rmse_mean!r}")
                    lines.append(f"{prefix}.rmse_std={cell.rmse_std!r}")
                    lines.append(f"{prefix}.delta_acc_mean={cell.delta_mean!r}")
                    lines.append(f"{prefix}.delta_acc_std={cell.delta_std!r}")
    return "\n".join(lines) + "\n"


def config_from_kv(text):
    """Recover the config dict embedded in a report or kv dump."""
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("config.") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        key = key[len("config."):]
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            raise DataError(f"cannot parse config line {line!r}") from None
    if not out:
        raise DataError("no config lines found")
    return out
