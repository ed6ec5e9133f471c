"""End-to-end command implementations behind the service endpoints.

Each function takes a resolved ExperimentConfig plus any file contents the
caller supplied and returns plain serializable values. File reading and
writing stay with the caller (CLI or service client), so these run the
same in-process or behind HTTP.
"""

import csv
import io

import numpy as np

from . import dataio, eval as evalmod, imputer, models
from .errors import DataError, UsageError
from .imputer import MODEL_KINDS
from .rng import RngStream

IMPUTE_DEFAULT_KIND = "mcd-vae"
_DEFAULT_RATES = (0.1, 0.3, 0.5)


def _single_kind(cfg, command):
    if len(cfg.model_kinds) == 1:
        return cfg.model_kinds[0]
    if command == "impute" and tuple(cfg.model_kinds) == MODEL_KINDS:
        # untouched default: fall back to the strongest variant
        return IMPUTE_DEFAULT_KIND
    raise UsageError(f"{command} needs exactly one --model, got {list(cfg.model_kinds)}")


def _single_rate(cfg, command, fallback=None):
    if len(cfg.missing_rates) == 1:
        return cfg.missing_rates[0]
    if fallback is not None and tuple(cfg.missing_rates) == _DEFAULT_RATES:
        return fallback
    raise UsageError(
        f"{command} needs exactly one --missing-rate (the denoising corruption rate), "
        f"got {list(cfg.missing_rates)}"
    )


def _require_class_column(cfg):
    if cfg.class_column is None:
        raise UsageError("class column required (--class-column)")
    return cfg.class_column


def _training_dataset(cfg, train_csv):
    """Complete-case normalized Dataset from CSV text or the configured id."""
    if train_csv is not None:
        table, _, _ = dataio.parse_csv_text(train_csv, _require_class_column(cfg))
        return dataio.normalize(dataio.complete_cases(table))
    if not cfg.dataset:
        raise UsageError("dataset missing")
    if len(cfg.dataset) != 1:
        raise UsageError(f"need exactly one training dataset, got {list(cfg.dataset)}")
    return dataio.load_dataset(cfg.dataset[0], class_column=cfg.class_column,
                               data_dir=cfg.data_dir)


def _build_and_train(cfg, base_kind, train_ds, corruption_rate):
    root = RngStream(cfg.seed)
    d = train_ds.n_attributes
    if base_kind == "ae":
        model = models.build_ae(d, cfg.dropout_p, root.child("build", base_kind))
    else:
        model = models.build_vae(d, cfg.dropout_p, cfg.kl_weight, root.child("build", base_kind))
    tc = models.TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                            corruption_rate=corruption_rate, lr=cfg.lr)
    _, history = models.train_denoising(model, train_ds, tc,
                                        rng=root.child("train", base_kind))
    return model, history


def run_train(cfg, train_csv=None):
    """Train one model and return its serialized form plus the loss history."""
    kind = _single_kind(cfg, "train")
    rate = _single_rate(cfg, "train")
    train_ds = _training_dataset(cfg, train_csv)
    model, history = _build_and_train(cfg, kind.removeprefix("mcd-"), train_ds, rate)
    return {"model": models.model_to_dict(model), "history": history}


def _observed_norm(values):
    """Min/max over observed cells; every attribute needs at least one."""
    holes = np.isnan(values)
    empty = holes.all(axis=0)
    if empty.any():
        raise DataError(f"attribute index {int(np.argmax(empty))} has no observed values")
    with np.errstate(invalid="ignore"):
        mins = np.nanmin(values, axis=0)
        maxs = np.nanmax(values, axis=0)
    return dataio.NormParams(mins=mins, maxs=maxs)


def _masked_input(table, norm):
    """MaskedDataset for a table with holes, scaled by the given params.

    Observed values are clipped to [0,1] for the network (they can fall
    outside when the scaling came from a different training set); the -1
    sentinel stays distinct either way.
    """
    holes = np.isnan(table.values)
    span = norm.maxs - norm.mins
    with np.errstate(invalid="ignore"):
        scaled = np.where(span > 0, (table.values - norm.mins) / np.where(span > 0, span, 1.0), 0.0)
    scaled = np.clip(scaled, 0.0, 1.0)
    base = dataio.Dataset(
        values=np.where(holes, 0.0, scaled),
        class_labels=table.class_labels,
        norm=norm,
        attribute_names=list(table.attribute_names),
        source_id=table.source_id,
    )
    sentinel = np.where(holes, -1.0, scaled)
    return dataio.MaskedDataset(base=base, mask=holes, sentinel_view=sentinel,
                                rate=float(holes.mean()))


def _completed_csv(header, raw_rows, class_idx, holes, filled):
    """Re-serialize the input, substituting only the cells that were missing."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    width = len(raw_rows[0])
    attr_of_col = [None] * width
    a = 0
    for c in range(width):
        if c != class_idx:
            attr_of_col[c] = a
            a += 1
    for i, row in enumerate(raw_rows):
        out = list(row)
        for c in range(width):
            j = attr_of_col[c]
            if j is not None and holes[i, j]:
                out[c] = repr(float(filled[i, j]))
        writer.writerow(out)
    return buf.getvalue()


def run_impute(cfg, input_csv, model_json=None, train_csv=None):
    """Complete a CSV with missing cells.

    Model resolution order: a supplied trained model, else training data
    (CSV text or configured dataset id), else the input's own complete
    rows. Scaling comes from the training data when a model is trained
    here, otherwise from the input's observed cells. Returns the completed
    CSV (observed cells verbatim), per-missing-cell standard deviations
    for MCD kinds, and the count of filled cells.
    """
    kind = _single_kind(cfg, "impute")
    class_column = _require_class_column(cfg)
    table, header, raw_rows = dataio.parse_csv_text(input_csv, class_column)
    class_idx = dataio.resolve_class_index(header, class_column)
    holes = np.isnan(table.values)

    if not holes.any():
        # nothing to fill: echo the input
        text = _completed_csv(header, raw_rows, class_idx, holes, table.values)
        uncertainty = [] if kind.startswith("mcd-") else None
        return {"completed_csv": text, "uncertainty": uncertainty, "imputed_cells": 0}

    base_kind = kind.removeprefix("mcd-")
    if model_json is not None:
        model = models.model_from_dict(model_json)
        if model.kind != base_kind:
            raise UsageError(f"kind {kind!r} needs a {base_kind} model, got {model.kind}")
        norm = _observed_norm(table.values)
    else:
        if train_csv is not None or cfg.dataset:
            train_ds = _training_dataset(cfg, train_csv)
            if train_ds.attribute_names != list(table.attribute_names):
                raise DataError(
                    f"training attributes {train_ds.attribute_names} do not match "
                    f"input attributes {list(table.attribute_names)}"
                )
            norm = train_ds.norm
        else:
            complete = dataio.complete_cases(table)
            train_ds = dataio.normalize(complete)
            norm = train_ds.norm
        rate = _single_rate(cfg, "impute", fallback=float(holes.mean()))
        model, _ = _build_and_train(cfg, base_kind, train_ds, rate)

    md = _masked_input(table, norm)
    rng = RngStream(cfg.seed).child("impute", kind)
    if kind.startswith("mcd-"):
        icfg = imputer.ImputeConfig(mode="mcd", T=cfg.mc_samples)
        result = imputer.impute_mcd(model, md, icfg, rng=rng)
    else:
        result = imputer.impute_deterministic(model, md)

    span = norm.maxs - norm.mins
    filled = norm.mins + result.imputed * span
    text = _completed_csv(header, raw_rows, class_idx, holes, filled)

    uncertainty = None
    if result.cell_std is not None:
        names = list(table.attribute_names)
        uncertainty = [
            {"row": i, "column": names[j], "std": float(s * span[j])}
            for i, j, s in imputer.uncertainty_records(result)
        ]
    return {
        "completed_csv": text,
        "uncertainty": uncertainty,
        "imputed_cells": int(holes.sum()),
    }


def run_reproduce(cfg):
    """Run the configured grid and render both report forms."""
    report = evalmod.run_cv(cfg)
    return {
        "table_text": evalmod.format_report(report),
        "kv_text": evalmod.format_kv(report),
    }
