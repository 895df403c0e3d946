"""Evaluation sweeps over (scenario, SNR) cells and the result CSV."""

from __future__ import annotations

import csv
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..channel import complex_noise, snr_to_noise_var
from ..config import ConfigError, TrainConfig
from ..models import SemanticSystem
from .checkpoint import ModelCheckpoint, build_model
from .data import ImageSet, load_dataset
from .metrics import accuracy, image_psnr
from .train import draw_channels

CSV_FIELDS = ("variant", "scenario", "snr_db", "psnr_db", "accuracy", "bler", "seed", "n_images")


@dataclass(frozen=True)
class EvalRecord:
    variant: str
    scenario: str
    snr_db: float
    psnr_db: float | None
    accuracy: float | None
    bler: float | None
    seed: int
    n_images: int


def worker_count(default: int = 1) -> int:
    """Sweep parallelism, capped by the SEMCOM_THREADS environment variable."""
    raw = os.environ.get("SEMCOM_THREADS")
    if raw is None:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SEMCOM_THREADS must be an integer, got {raw!r}") from None


def cell_seed(seed: int, scenario: str, snr_db: float) -> list:
    """Independent, order-free RNG seed for one sweep cell."""
    return [seed, zlib.crc32(scenario.encode()), int(round(snr_db * 1000)) & 0xFFFFFFFF]


def evaluate_cell(model: SemanticSystem, cfg: TrainConfig, data: ImageSet, scenario: str,
                  snr_db: float, seed: int, batch: int | None = None) -> EvalRecord:
    link = model.link
    n_k = link.n_k
    n = (len(data) // n_k) * n_k
    if n == 0:
        raise ConfigError(f"need at least {n_k} images to evaluate")
    rng = np.random.default_rng(cell_seed(seed, scenario, snr_db))
    es = link.power / link.n_m
    samples_per_batch = max(1, (batch or cfg.batch) // n_k)
    psnrs, logits_all = [], []
    for start in range(0, n // n_k, samples_per_batch):
        stop = min(start + samples_per_batch, n // n_k)
        m = stop - start
        images = data.images[start * n_k:stop * n_k].reshape((m, n_k) + data.images.shape[1:])
        h = draw_channels(cfg, m, rng, scenarios=[scenario] * m) if cfg.channel_model == "tdl" \
            else draw_channels(cfg, m, rng)
        nv = np.full(m, snr_to_noise_var(snr_db, es))
        noise = complex_noise((m, link.n_f, link.n_t, n_k), nv[:, None, None, None], rng)
        recon, logits, _ = model(images, h, nv, noise, train=False)
        psnrs.append(image_psnr(recon.data, images).reshape(-1))
        logits_all.append(logits.data.reshape(-1, logits.shape[-1]))
    acc = accuracy(np.concatenate(logits_all), data.labels[:n])
    return EvalRecord(model.variant, scenario, float(snr_db), float(np.mean(np.concatenate(psnrs))),
                      acc, None, int(seed), int(n))


def eval_sweep(ckpt: ModelCheckpoint | SemanticSystem, snr_list, scenarios, n_images: int, seed: int,
               data: ImageSet | None = None, cfg: TrainConfig | None = None,
               threads: int | None = None) -> list[EvalRecord]:
    """PSNR/accuracy for every (scenario, snr) pair; deterministic per seed.

    ``ckpt`` is a checkpoint or a live model (then ``cfg`` is required).
    """
    if isinstance(ckpt, ModelCheckpoint):
        cfg = ckpt.train_config()
        model = build_model(ckpt)
    else:
        model = ckpt
        if cfg is None:
            raise ConfigError("eval_sweep on a live model needs its TrainConfig")
        if cfg.link != model.link:
            raise ConfigError("model link config does not match the evaluation config")
    if data is None:
        data = load_dataset(cfg.dataset, n_images, "test")
    elif len(data) < n_images:
        raise ConfigError(f"requested {n_images} images, dataset has {len(data)}")
    data = data.subset(slice(0, n_images))
    cells = [(s, float(snr)) for s in scenarios for snr in snr_list]
    threads = threads or worker_count()
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda c: evaluate_cell(model, cfg, data, c[0], c[1], seed), cells))
    return [evaluate_cell(model, cfg, data, s, snr, seed) for s, snr in cells]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_records_csv(records, path, append: bool = False) -> None:
    """One row per record in the fixed column order; header written for new files."""
    new = not append or not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_FIELDS)
        for r in records:
            d = asdict(r) if not isinstance(r, dict) else r
            w.writerow([_fmt(d.get(k)) for k in CSV_FIELDS])


def read_records_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
