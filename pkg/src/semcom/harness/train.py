"""End-to-end training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Adam, NonFiniteGradientError, Tape
from ..channel import complex_noise, deep_fade_two_ray, sample_channels, snr_to_noise_var
from ..config import ConfigError, TrainConfig
from ..models import SemanticSystem, composite_loss
from ..precoder import SingularMatrixError
from .checkpoint import ModelCheckpoint, from_model
from .data import ImageSet, load_dataset

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: SemanticSystem
    config: TrainConfig
    trace: list = field(default_factory=list)     # {"epoch", "mean_loss", "grad_norm"} per finished epoch
    abort: dict | None = None                      # {"epoch", "step", "grad_norm", "loss", "reason"}
    steps: int = 0

    @property
    def completed(self) -> bool:
        return self.abort is None

    def checkpoint(self) -> ModelCheckpoint:
        return from_model(self.model, self.config)


def draw_channels(cfg: TrainConfig, n: int, rng: np.random.Generator, scenarios=None) -> np.ndarray:
    """One block-fading channel per sample; the scenario is drawn per sample."""
    link = cfg.link
    dims = (link.n_f, link.n_t, link.n_k, link.n_m)
    if cfg.channel_model == "two_ray":
        return deep_fade_two_ray(n, *dims, spacing=link.subcarrier_spacing, rng=rng)
    if scenarios is None:
        scenarios = rng.choice(len(cfg.scenarios), size=n)
    h = np.empty((n,) + dims, dtype=np.complex128)
    for i, s in enumerate(scenarios):
        name = cfg.scenarios[s] if isinstance(s, (int, np.integer)) else s
        h[i] = sample_channels(name, 1, *dims, spacing=link.subcarrier_spacing, rng=rng)[0]
    return h


def grad_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def train(cfg: TrainConfig, variant: str = "full", data: ImageSet | None = None,
          model: SemanticSystem | None = None) -> TrainResult:
    """Train ``variant`` for ``cfg.epochs`` epochs.

    Each step draws a batch of ``cfg.batch`` images (``cfg.batch / N_k``
    multi-user samples), a scenario, SNR and channel per sample, and takes
    one Adam step on the composite loss. A singular zero-forcing inverse, a
    non-finite loss or gradient, or a gradient norm above
    ``cfg.max_grad_norm`` stops training and fills ``abort``.
    """
    link = cfg.link
    if data is None:
        data = load_dataset(cfg.dataset, cfg.n_images, "train")
    steps_per_epoch = len(data) // cfg.batch
    if steps_per_epoch < 1:
        raise ConfigError(f"{len(data)} images cannot fill one batch of {cfg.batch}")
    if model is None:
        model = SemanticSystem(link, variant, cfg.seed, cfg.snr_range_db)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    es = link.power / link.n_m
    n_samples = cfg.batch // link.n_k
    result = TrainResult(model, cfg)

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(data))
        losses, norms, mses = [], [], []
        for step in range(steps_per_epoch):
            idx = perm[step * cfg.batch:(step + 1) * cfg.batch]
            images = data.images[idx].reshape((n_samples, link.n_k) + data.images.shape[1:])
            labels = data.labels[idx].reshape(n_samples, link.n_k)
            h = draw_channels(cfg, n_samples, rng)
            snr = rng.uniform(*cfg.snr_range_db, size=n_samples)
            nv = snr_to_noise_var(snr, es)
            noise = complex_noise((n_samples, link.n_f, link.n_t, link.n_k), nv[:, None, None, None], rng)

            def stop(reason, loss=float("nan"), norm=float("nan")):
                result.abort = {"epoch": epoch, "step": step, "grad_norm": norm, "loss": loss,
                                "reason": reason}
                log.warning("training aborted at epoch %d step %d: %s", epoch, step, reason)
                return result

            try:
                with Tape() as tape:
                    recon, logits, _ = model(images, h, nv, noise, train=True)
                    loss = composite_loss(recon, images, logits, labels, cfg.lam, cfg.recon_scale)
            except SingularMatrixError as exc:
                return stop(f"singular precoder inverse: {exc}")
            loss_value = float(loss.data)
            if not math.isfinite(loss_value):
                return stop("non-finite loss", loss_value)
            grads = tape.backward(loss)
            ids = {p.node_id for p in params.values()}
            norm = grad_norm({k: g for k, g in grads.items() if k in ids})
            if not math.isfinite(norm) or norm > cfg.max_grad_norm:
                return stop("non-finite or exploding gradient", loss_value, norm)
            try:
                opt.step(grads)
            except NonFiniteGradientError as exc:
                return stop(str(exc), loss_value, norm)
            result.steps += 1
            losses.append(loss_value)
            norms.append(norm)
            mses.append(float(np.mean((recon.data - images) ** 2)))
        result.trace.append({"epoch": epoch, "mean_loss": float(np.mean(losses)),
                             "grad_norm": float(np.mean(norms)), "mean_mse": float(np.mean(mses))})
        log.info("epoch %d: mean loss %.5f, grad norm %.3g", epoch, result.trace[-1]["mean_loss"],
                 result.trace[-1]["grad_norm"])
    return result


def write_loss_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "grad_norm"])
        for row in trace:
            w.writerow([row["epoch"], repr(float(row["mean_loss"])), repr(float(row["grad_norm"]))])
