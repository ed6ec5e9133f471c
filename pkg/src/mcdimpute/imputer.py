"""Filling masked cells with model reconstructions.

Two modes share one trained network. Deterministic mode is a single pass
with dropout off everywhere (VAE latent = mu). MCD mode encodes once
deterministicly, then runs the decoder T times with dropout active (and,
for the VAE, a fresh eps per pass), averaging the passes per missing cell
and reporting their spread.

Pass t draws from a child stream keyed by the sample index, so the passes
could run in any order; the mean is reduced in index order either way.
"""

from dataclasses import dataclass

import numpy as np

from . import models
from .dataio import Dataset
from .errors import UsageError
from .rng import RngStream

MODEL_KINDS = ("ae", "vae", "mcd-ae", "mcd-vae")


@dataclass(frozen=True)
class ImputeConfig:
    mode: str = "deterministic"  # or "mcd"
    T: int = 100
    seed: int = 0
    # diagnostic switch: False forces eps=0 so a dropout-free MCD-VAE run
    # collapses onto the deterministic path
    sample_latent: bool = True


@dataclass
class ImputationResult:
    imputed: np.ndarray  # (N, d), observed cells copied through
    mask: np.ndarray  # (N, d) bool, True = was missing
    samples: np.ndarray | None = None  # (T, masked-cell count), mcd mode
    cell_std: np.ndarray | None = None  # (masked-cell count,), mcd mode


def _check_width(model, md):
    d = md.base.n_attributes
    if model.d != d:
        raise UsageError(f"model expects {model.d} attributes, data has {d}")


def impute_deterministic(model, md):
    """Single dropout-free pass; missing cells take the network output."""
    _check_width(model, md)
    x = md.sentinel_view
    if model.kind == "ae":
        out = models.ae_decode(model, models.ae_encode(model, x))
    else:
        mu, _ = models.vae_encode(model, x)
        out = models.vae_decode(model, mu)
    return ImputationResult(imputed=np.where(md.mask, out, x), mask=md.mask)


def impute_mcd(model, md, cfg, rng=None):
    """T stochastic decoder passes; missing cells take the per-cell mean.

    The encoder runs once with dropout off, so every pass shares one latent
    encoding (AE) or one (mu, logvar) pair (VAE). cell_std is the
    population standard deviation over the T passes (0 when T=1).
    """
    if cfg.mode != "mcd":
        raise UsageError(f"impute_mcd needs mode='mcd', got {cfg.mode!r}")
    if cfg.T < 1:
        raise UsageError(f"T must be >= 1, got {cfg.T}")
    _check_width(model, md)
    rng = RngStream(cfg.seed) if rng is None else rng
    x = md.sentinel_view
    mask = md.mask

    if model.kind == "ae":
        h = models.ae_encode(model, x)
    else:
        mu, logvar = models.vae_encode(model, x)

    samples = np.empty((cfg.T, int(mask.sum())))
    for t in range(cfg.T):
        stream = rng.child("sample", t)
        if model.kind == "ae":
            out = models.ae_decode(model, h, stream, stochastic=True)
        else:
            if cfg.sample_latent:
                eps = stream.generator.standard_normal(mu.shape)
            else:
                eps = np.zeros_like(mu)
            z = models.reparameterize(mu, logvar, eps)
            out = models.vae_decode(model, z, stream, stochastic=True)
        samples[t] = out[mask]

    # anchored at samples[0]: exactly samples[0] (and std exactly 0) when
    # all passes agree, so the dropout-free case reproduces the
    # deterministic result bit-for-bit
    centered = samples - samples[0]
    mean = samples[0] + centered.mean(axis=0)
    imputed = x.copy()
    imputed[mask] = mean
    return ImputationResult(
        imputed=imputed,
        mask=mask,
        samples=samples,
        cell_std=centered.std(axis=0),
    )


def impute_dataset(model_kind, model, md, cfg=None, rng=None):
    """Dispatch by kind and wrap the result as a complete Dataset."""
    if model_kind not in MODEL_KINDS:
        raise UsageError(f"unknown model kind {model_kind!r}, expected one of {MODEL_KINDS}")
    base_kind = model_kind.removeprefix("mcd-")
    if base_kind != model.kind:
        raise UsageError(f"kind {model_kind!r} needs a {base_kind} model, got {model.kind}")
    if model_kind.startswith("mcd-"):
        cfg = ImputeConfig(mode="mcd") if cfg is None else cfg
        result = impute_mcd(model, md, cfg, rng)
    else:
        result = impute_deterministic(model, md)
    return Dataset(
        values=result.imputed,
        class_labels=md.base.class_labels,
        norm=md.base.norm,
        attribute_names=md.base.attribute_names,
        source_id=md.base.source_id,
    )


def uncertainty_records(result):
    """(row, column, std) per missing cell, in row-major cell order."""
    if result.cell_std is None:
        raise UsageError("no uncertainty available (deterministic result)")
    cells = np.argwhere(result.mask)
    return [(int(i), int(j), float(s)) for (i, j), s in zip(cells, result.cell_std)]
