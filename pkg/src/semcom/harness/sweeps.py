"""SSCC baseline sweeps: BLER versus Eb/N0 and image PSNR versus Eb/N0."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..config import LinkConfig, SsccConfig
from ..sscc.codec import Bitstream, dct_codec_decode, source_budget
from ..sscc.link import bler_point, cached_rate_control, sscc_link_run
from .evaluate import EvalRecord, cell_seed, worker_count
from .metrics import psnr


def sscc_label(link: LinkConfig, sscc: SsccConfig) -> str:
    """Variant column for SSCC rows, e.g. ``sscc-4qam-r1/2-perfect-nf32``."""
    return f"sscc-{2 ** sscc.m}qam-r{sscc.r}-{sscc.csi_mode}-nf{link.n_f}"


def _run_cells(fn, cells, threads):
    threads = threads or worker_count()
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def bler_sweep(link: LinkConfig, sscc: SsccConfig, scenarios, ebn0_list, n_blocks: int, seed: int,
               threads: int | None = None) -> list[EvalRecord]:
    """BLER with random full-budget payloads; ``n_images`` holds the block count."""
    label = sscc_label(link, sscc)

    def cell(c):
        scenario, ebn0 = c
        rate, _, n = bler_point(link, sscc, scenario, ebn0, n_blocks, cell_seed(seed, scenario, ebn0))
        return EvalRecord(label, scenario, ebn0, None, None, rate, int(seed), n)

    return _run_cells(cell, [(s, float(e)) for s in scenarios for e in ebn0_list], threads)


def codec_only_psnr(images, link: LinkConfig, sscc: SsccConfig) -> float:
    """Mean PSNR of rate control + decode with no channel; failures score 0 dB."""
    budget = source_budget(link, sscc.m, sscc.r)
    scores = []
    for img in np.asarray(images):
        bs = cached_rate_control(img, budget, sscc.quality_levels)
        scores.append(psnr(dct_codec_decode(bs, img.shape), img) if isinstance(bs, Bitstream) else 0.0)
    return float(np.mean(scores))


def sscc_psnr_sweep(images, link: LinkConfig, sscc: SsccConfig, scenarios, ebn0_list, seed: int,
                    threads: int | None = None) -> list[EvalRecord]:
    """Mean PSNR over images and users; ``bler`` counts codec failures as lost blocks."""
    images = np.asarray(images)
    n = (len(images) // link.n_k) * link.n_k
    if n == 0:
        raise ValueError(f"need at least {link.n_k} images")
    grouped = images[:n].reshape((n // link.n_k, link.n_k) + images.shape[1:])
    label = sscc_label(link, sscc)

    def cell(c):
        scenario, ebn0 = c
        recs = [r for row in sscc_link_run(grouped, link, sscc, scenario, ebn0,
                                           cell_seed(seed, scenario, ebn0)) for r in row]
        lost = sum(1 for r in recs if not r.block_ok)
        return EvalRecord(label, scenario, ebn0, float(np.mean([r.psnr for r in recs])), None,
                          lost / len(recs), int(seed), n)

    return _run_cells(cell, [(s, float(e)) for s in scenarios for e in ebn0_list], threads)
