"""Training collapse of in-loop zero forcing versus the neural residual precoder.

Both variants train on deep-fade two-ray channels, whose exact spectral
notch makes H H^H singular on some subcarriers. Zero forcing inverts it as
is; the residual precoder regularizes with alpha * sigma^2 first.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

from ..config import TrainConfig
from .data import load_dataset
from .train import train

FIELDS = ("variant", "seed", "completed", "epochs_run", "abort_epoch", "abort_step", "reason",
          "final_loss", "max_grad_norm")


@dataclass(frozen=True)
class InstabilityRecord:
    variant: str
    seed: int
    completed: bool
    epochs_run: int
    abort_epoch: int | None
    abort_step: int | None
    reason: str
    final_loss: float
    max_grad_norm: float


def instability_experiment(base: TrainConfig, seeds=range(5), variants=("zf_in_loop", "full"),
                           ) -> list[InstabilityRecord]:
    """Train every (variant, seed) on two-ray channels; one record per run."""
    cfg0 = dataclasses.replace(base, channel_model="two_ray")
    data = load_dataset(cfg0.dataset, cfg0.n_images, "train")
    out = []
    for variant in variants:
        for seed in seeds:
            cfg = dataclasses.replace(cfg0, seed=int(seed))
            res = train(cfg, variant, data=data)
            norms = [t["grad_norm"] for t in res.trace]
            ab = res.abort or {}
            if res.abort:
                norms.append(ab["grad_norm"])
                loss = ab["loss"]
            else:
                loss = res.trace[-1]["mean_loss"]
            finite = [n for n in norms if math.isfinite(n)]
            peak = max(finite) if len(finite) == len(norms) and finite else float("nan")
            out.append(InstabilityRecord(variant, int(seed), res.completed, len(res.trace),
                                         ab.get("epoch"), ab.get("step"), ab.get("reason", ""),
                                         float(loss), float(peak)))
    return out


def write_instability_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            d = dataclasses.asdict(r)
            w.writerow(["" if d[k] is None else (repr(d[k]) if isinstance(d[k], float) else d[k])
                         for k in FIELDS])
