"""scikit-learn style facade over training and link-level inference.

``fit`` trains one variant on (images, labels); ``transform`` returns the
images reconstructed after one pass over the simulated link; ``predict``
returns the receiver's class decisions. Link conditions for inference are
estimator parameters (``scenario``, ``snr_db``, ``random_state``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import complex_noise, snr_to_noise_var
from .config import LinkConfig, TrainConfig
from .harness.data import ImageSet
from .harness.train import draw_channels, train
from .models import IMAGE_SHAPE, N_CLASSES


def _images(x) -> np.ndarray:
    x = check_array(x, allow_nd=True, dtype=np.float32, ensure_2d=False)
    if x.ndim == 2 and x.shape[1] == np.prod(IMAGE_SHAPE):
        x = x.reshape((-1,) + IMAGE_SHAPE)
    if x.shape[1:] != IMAGE_SHAPE:
        raise ValueError(f"expected images [n, 32, 32, 3] or [n, 3072], got {x.shape}")
    if x.min() < 0 or x.max() > 1:
        raise ValueError("pixel values must lie in [0, 1]")
    return x


class SemanticTransceiver(ClassifierMixin, BaseEstimator):
    def __init__(self, variant="full", n_f=32, batch=16, epochs=10, lr=1e-3, lam=0.1,
                 recon_scale=100.0, train_snr_db=(-7.0, 7.0), scenario="UMi", snr_db=7.0,
                 random_state=0):
        self.variant = variant
        self.n_f = n_f
        self.batch = batch
        self.epochs = epochs
        self.lr = lr
        self.lam = lam
        self.recon_scale = recon_scale
        self.train_snr_db = train_snr_db
        self.scenario = scenario
        self.snr_db = snr_db
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(batch=self.batch, epochs=self.epochs, lr=self.lr, lam=self.lam,
                           recon_scale=self.recon_scale, snr_range_db=tuple(self.train_snr_db),
                           link=LinkConfig(n_f=self.n_f), seed=self.random_state)

    def fit(self, X, y):
        images = _images(X)
        labels = np.asarray(y, dtype=np.int64).reshape(-1)
        if labels.shape[0] != images.shape[0]:
            raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        if labels.min() < 0 or labels.max() >= N_CLASSES:
            raise ValueError(f"labels must lie in 0..{N_CLASSES - 1}")
        cfg = self._config()
        res = train(cfg, self.variant, data=ImageSet(images, labels))
        if not res.completed:
            raise RuntimeError(f"training aborted: {res.abort}")
        self.model_, self.config_, self.loss_trace_ = res.model, cfg, res.trace
        self.classes_ = np.arange(N_CLASSES)
        return self

    def _run(self, X):
        check_is_fitted(self, "model_")
        images = _images(X)
        n = len(images)
        n_k = self.model_.link.n_k
        pad = (-n) % n_k
        if pad:
            images = np.concatenate([images, images[:pad]])
        grouped = images.reshape((-1, n_k) + IMAGE_SHAPE)
        m = len(grouped)
        link = self.model_.link
        rng = np.random.default_rng(self.random_state)
        h = draw_channels(self.config_, m, rng, scenarios=[self.scenario] * m)
        nv = np.full(m, snr_to_noise_var(self.snr_db, link.power / link.n_m))
        noise = complex_noise((m, link.n_f, link.n_t, n_k), nv[:, None, None, None], rng)
        recon, logits, _ = self.model_(grouped, h, nv, noise, train=False)
        return recon.data.reshape((-1,) + IMAGE_SHAPE)[:n], logits.data.reshape(-1, N_CLASSES)[:n]

    def transform(self, X) -> np.ndarray:
        return self._run(X)[0]

    def predict_logits(self, X) -> np.ndarray:
        return self._run(X)[1]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_logits(X), axis=1)
