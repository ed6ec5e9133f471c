"""The two imputation model families.

Both share a fixed architecture around a width-20 bottleneck:

  AE : d -> 80 -> 20 -> 80 -> d     (relu hidden, sigmoid output)
  VAE: d -> 80 -> (mu, logvar) 20 -> 80 -> d

Dropout sits on the hidden layers (AE: both encoder layers and the decoder
hidden layer; VAE: trunk and decoder hidden layer). Training is denoising:
each mini-batch is corrupted by a fresh MCAR mask whose cells are set to
the -1 sentinel, and the target is the clean batch. The same trained
network serves both the deterministic and the Monte-Carlo-dropout variants.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .dataio import mcar_cell_mask
from .errors import DataError, DivergenceError, UsageError
from .rng import RngStream

HIDDEN_WIDTH = 80
LATENT_WIDTH = 20


def _as_stream(seed):
    return seed if isinstance(seed, RngStream) else RngStream(seed)


@dataclass
class AEModel:
    """Four dense layers, widths d -> 80 -> 20 -> 80 -> d."""

    layers: list

    kind = "ae"

    @property
    def d(self):
        return self.layers[0].n_in

    @property
    def encoder(self):
        return self.layers[:2]

    @property
    def decoder(self):
        return self.layers[2:]


@dataclass
class VAEModel:
    """Relu trunk, two linear latent heads, two-layer decoder."""

    trunk: nn.DenseLayer
    mu_head: nn.DenseLayer
    logvar_head: nn.DenseLayer
    decoder: list
    kl_weight: float

    kind = "vae"

    @property
    def d(self):
        return self.trunk.n_in

    @property
    def all_layers(self):
        # fixed parameter order used by the optimizer and persistence
        return [self.trunk, self.mu_head, self.logvar_head] + self.decoder


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    corruption_rate: float = 0.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def build_ae(d, dropout_p, seed):
    """Seeded AE with dropout on the three hidden layers."""
    if d < 1:
        raise UsageError(f"d must be >= 1, got {d}")
    rng = _as_stream(seed)
    return AEModel(layers=[
        nn.init_dense(d, HIDDEN_WIDTH, "relu", rng.child("enc", 0), dropout_p=dropout_p),
        nn.init_dense(HIDDEN_WIDTH, LATENT_WIDTH, "relu", rng.child("enc", 1), dropout_p=dropout_p),
        nn.init_dense(LATENT_WIDTH, HIDDEN_WIDTH, "relu", rng.child("dec", 0), dropout_p=dropout_p),
        nn.init_dense(HIDDEN_WIDTH, d, "sigmoid", rng.child("dec", 1)),
    ])


def build_vae(d, dropout_p, kl_weight, seed):
    """Seeded VAE; dropout on the trunk and the decoder hidden layer."""
    if d < 1:
        raise UsageError(f"d must be >= 1, got {d}")
    if not kl_weight > 0:
        raise UsageError(f"kl_weight must be > 0, got {kl_weight}")
    rng = _as_stream(seed)
    return VAEModel(
        trunk=nn.init_dense(d, HIDDEN_WIDTH, "relu", rng.child("trunk"), dropout_p=dropout_p),
        mu_head=nn.init_dense(HIDDEN_WIDTH, LATENT_WIDTH, "linear", rng.child("mu")),
        logvar_head=nn.init_dense(HIDDEN_WIDTH, LATENT_WIDTH, "linear", rng.child("logvar")),
        decoder=[
            nn.init_dense(LATENT_WIDTH, HIDDEN_WIDTH, "relu", rng.child("dec", 0), dropout_p=dropout_p),
            nn.init_dense(HIDDEN_WIDTH, d, "sigmoid", rng.child("dec", 1)),
        ],
        kl_weight=float(kl_weight),
    )


def param_count(model):
    layers = model.layers if model.kind == "ae" else model.all_layers
    return sum(layer.W.size + layer.b.size for layer in layers)


def reparameterize(mu, logvar, eps):
    """z = mu + exp(logvar/2) * eps."""
    return mu + np.exp(0.5 * np.asarray(logvar)) * eps


def kl_gauss(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, 1)), summed over all entries."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return float(-0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar)))


def vae_loss(xhat, x, mu, logvar, kl_weight):
    """(total, recon, kl) with kl the weighted, batch-averaged term."""
    xhat = np.asarray(xhat)
    recon = nn.mse_loss(xhat, x)
    kl = kl_weight * kl_gauss(mu, logvar) / xhat.shape[0]
    return recon + kl, recon, kl


@dataclass
class VAETrace:
    """Everything vae_backward needs from one forward pass."""

    trunk_cache: nn.LayerCache
    trunk_out: np.ndarray  # post-dropout trunk activation
    mu: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray
    decoder_caches: list
    output: np.ndarray


def vae_forward(model, x, rng=None, training=False, sample_latent=True):
    """One VAE pass. With sample_latent=False the latent is mu exactly.

    Dropout (trunk and decoder hidden layer) is active only when training
    is True; eps is drawn fresh per instance when sample_latent is True.
    """
    x = np.asarray(x, dtype=np.float64)
    trunk_trace = nn.forward_pass([model.trunk], x, rng, training=training)
    h = trunk_trace.output
    mu = nn.dense_forward(model.mu_head, h)
    logvar = nn.dense_forward(model.logvar_head, h)
    if sample_latent:
        if rng is None:
            raise UsageError("sample_latent=True needs an rng for eps")
        eps = rng.generator.standard_normal(mu.shape)
    else:
        eps = np.zeros_like(mu)
    z = reparameterize(mu, logvar, eps)
    dec_trace = nn.forward_pass(model.decoder, z, rng, training=training)
    return VAETrace(
        trunk_cache=trunk_trace.caches[0],
        trunk_out=h,
        mu=mu,
        logvar=logvar,
        eps=eps,
        z=z,
        decoder_caches=dec_trace.caches,
        output=dec_trace.output,
    )


def vae_backward(model, trace, target):
    """Loss components and exact gradients for a recorded VAE pass.

    Returns (total, recon, kl, grads) with grads ordered like
    model.all_layers. Dropout masks and eps are constants. The KL term is
    averaged over the batch, so its gradients carry kl_weight/batch.
    """
    out = trace.output
    batch = out.shape[0]
    total, recon, kl = vae_loss(out, target, trace.mu, trace.logvar, model.kl_weight)

    grad = (2.0 / out.size) * (out - np.asarray(target, dtype=np.float64))
    dec_grads = [None, None]
    for i in (1, 0):
        cache = trace.decoder_caches[i]
        if cache.mask is not None:
            grad = grad * cache.mask
        grad, dW, db = nn.dense_backward(model.decoder[i], cache, grad)
        dec_grads[i] = (dW, db)
    grad_z = grad

    w = model.kl_weight / batch
    grad_mu = grad_z + w * trace.mu
    grad_logvar = grad_z * (0.5 * np.exp(0.5 * trace.logvar) * trace.eps) \
        + w * 0.5 * (np.exp(trace.logvar) - 1.0)

    # linear heads share the trunk output
    dW_mu = grad_mu.T @ trace.trunk_out
    db_mu = grad_mu.sum(axis=0)
    dW_lv = grad_logvar.T @ trace.trunk_out
    db_lv = grad_logvar.sum(axis=0)
    grad_h = grad_mu @ model.mu_head.W + grad_logvar @ model.logvar_head.W

    if trace.trunk_cache.mask is not None:
        grad_h = grad_h * trace.trunk_cache.mask
    _, dW_t, db_t = nn.dense_backward(model.trunk, trace.trunk_cache, grad_h)

    grads = [(dW_t, db_t), (dW_mu, db_mu), (dW_lv, db_lv)] + dec_grads
    return total, recon, kl, grads


def _corruptor(rate, d):
    if rate == 0.0:
        return None

    def corrupt(batch, gen):
        mask = mcar_cell_mask(batch.shape[0], d, rate, gen)
        return np.where(mask, -1.0, batch)

    return corrupt


def train_denoising(model, train, cfg, rng=None):
    """Denoising training on a complete Dataset; returns (model, history).

    history holds per-epoch mean total loss. Deterministic given cfg.seed
    (or the rng override): one stream drives shuffling, corruption masks,
    dropout, and (for the VAE) eps, in a fixed order.
    """
    if not 0.0 <= cfg.corruption_rate < 1.0:
        raise UsageError(f"corruption_rate must be in [0, 1), got {cfg.corruption_rate}")
    values = train.values if hasattr(train, "values") else np.asarray(train, dtype=np.float64)
    if np.isnan(values).any():
        raise DataError("training data contains missing values")
    if values.shape[1] != model.d:
        raise UsageError(f"model expects {model.d} attributes, data has {values.shape[1]}")
    rng = _as_stream(cfg.seed) if rng is None else rng
    corrupt = _corruptor(cfg.corruption_rate, model.d)

    if model.kind == "ae":
        spec = nn.TrainSpec(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                            beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, corrupt=corrupt)
        _, history = nn.train(model.layers, values, values, spec, rng)
        return model, history
    return _train_vae(model, values, cfg, rng, corrupt)


def _train_vae(model, values, cfg, rng, corrupt):
    if cfg.epochs < 1:
        raise UsageError(f"epochs must be >= 1, got {cfg.epochs}")
    if cfg.batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {cfg.batch_size}")
    n = values.shape[0]
    gen = rng.generator
    layers = model.all_layers
    state = nn.adam_init(layers, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    history = []
    for epoch in range(cfg.epochs):
        perm = gen.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb = values[idx]
            if corrupt is not None:
                xb = corrupt(xb, gen)
            trace = vae_forward(model, xb, rng, training=True, sample_latent=True)
            loss, _, _, grads = vae_backward(model, trace, values[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"training diverged at epoch {epoch}")
            nn.adam_step(layers, grads, state)
            total += loss * len(idx)
        history.append(total / n)
    return model, history


def ae_encode(model, x):
    """Deterministic encoder pass (dropout off)."""
    h = np.asarray(x, dtype=np.float64)
    for layer in model.encoder:
        h = nn.dense_forward(layer, h)
    return h


def ae_decode(model, h, rng=None, stochastic=False):
    """Decoder pass; stochastic=True re-enables decoder dropout."""
    trace = nn.forward_pass(model.decoder, h, rng, training=stochastic)
    return trace.output


def vae_encode(model, x):
    """Deterministic trunk + heads (dropout off). Returns (mu, logvar)."""
    h = nn.dense_forward(model.trunk, np.asarray(x, dtype=np.float64))
    return nn.dense_forward(model.mu_head, h), nn.dense_forward(model.logvar_head, h)


def vae_decode(model, z, rng=None, stochastic=False):
    """Decoder pass; stochastic=True re-enables decoder dropout."""
    trace = nn.forward_pass(model.decoder, z, rng, training=stochastic)
    return trace.output


def model_to_dict(model):
    layers = model.layers if model.kind == "ae" else model.all_layers
    d = nn.layers_to_dict(layers)
    d["kind"] = model.kind
    if model.kind == "vae":
        d["kl_weight"] = model.kl_weight
    return d


def model_from_dict(d):
    kind = d.get("kind")
    layers = nn.layers_from_dict(d)
    if kind == "ae":
        if len(layers) != 4:
            raise DataError(f"ae model needs 4 layers, found {len(layers)}")
        model = AEModel(layers=layers)
    elif kind == "vae":
        if len(layers) != 5:
            raise DataError(f"vae model needs 5 layers, found {len(layers)}")
        kl_weight = d.get("kl_weight")
        if not isinstance(kl_weight, (int, float)) or not kl_weight > 0:
            raise DataError(f"bad kl_weight {kl_weight!r}")
        model = VAEModel(trunk=layers[0], mu_head=layers[1], logvar_head=layers[2],
                         decoder=layers[3:], kl_weight=float(kl_weight))
    else:
        raise DataError(f"unknown model kind {kind!r}")
    _check_widths(model)
    return model


def _check_widths(model):
    if model.kind == "ae":
        widths = [model.layers[0].n_in] + [layer.n_out for layer in model.layers]
        expect = [model.d, HIDDEN_WIDTH, LATENT_WIDTH, HIDDEN_WIDTH, model.d]
    else:
        widths = [model.trunk.n_in, model.trunk.n_out, model.mu_head.n_out,
                  model.logvar_head.n_out, model.decoder[0].n_in,
                  model.decoder[0].n_out, model.decoder[1].n_out]
        expect = [model.d, HIDDEN_WIDTH, LATENT_WIDTH, LATENT_WIDTH,
                  LATENT_WIDTH, HIDDEN_WIDTH, model.d]
    if widths != expect:
        raise DataError(f"stored layer widths {widths} do not match {expect}")


def save_model(model, path):
    with open(path, "w", newline="\n") as f:
        json.dump(model_to_dict(model), f)
        f.write("\n")


def load_model(path):
    try:
        with open(path, "r") as f:
            d = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"not a model file: {e}") from None
    return model_from_dict(d)
