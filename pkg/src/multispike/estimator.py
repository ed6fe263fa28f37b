"""scikit-learn style front end.

:class:`LatencyEncoder` turns pixel intensities into spike times and
:class:`SpikingClassifier` trains the multi-spike network with ``fit`` /
``predict``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import RunConfig
from .data import latency_times
from .loss import LossConfig
from .optim import SpikingModel, evaluate, train_epoch


def _check_intensities(X):
    if X.size and (X.min() < 0 or X.max() > 255):
        raise ValueError("pixel intensities must lie in [0, 255]")
    return X


class LatencyEncoder(TransformerMixin, BaseEstimator):
    """Map intensities in [0, 255] to one spike time per pixel (ink fires first)."""

    def __init__(self, t_min: float = 0.0, t_max: float = 1.0):
        self.t_min = t_min
        self.t_max = t_max

    def fit(self, X, y=None):
        X = _check_intensities(check_array(X, dtype=np.float64))
        if not self.t_min < self.t_max:
            raise ValueError("need t_min < t_max")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _check_intensities(check_array(X, dtype=np.float64))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return latency_times(X, self.t_min, self.t_max)

    def inverse_transform(self, T):
        T = check_array(T, dtype=np.float64)
        return 255.0 - 255.0 * (T - self.t_min) / (self.t_max - self.t_min)


class SpikingClassifier(ClassifierMixin, BaseEstimator):
    """Multi-spike LIF network trained with exact spike-time gradients.

    Output class scores are the output neurons' membrane potentials at
    ``t_out``. ``history_`` holds one dict of metrics per epoch.
    """

    def __init__(self, hidden_layer_sizes=(400,), tau_i: float = 0.8, t_out: float = 1.0,
                 t_min: float = 0.0, t_max: float = 1.0, lam: float = 0.01, sigma: float = 1e-4,
                 dead_fraction: float = 0.1, learning_rate: float = 1e-3, max_epochs: int = 100,
                 batch_size: int = 100, n1: int = 3, n2: int = 16, single_spike: bool = False,
                 init_mean: float = 0.03, init_spread: float = 0.3, init_reading: str = "std",
                 random_state: int = 0, n_jobs: int = 1, warm_start: bool = False, verbose: int = 0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.tau_i = tau_i
        self.t_out = t_out
        self.t_min = t_min
        self.t_max = t_max
        self.lam = lam
        self.sigma = sigma
        self.dead_fraction = dead_fraction
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.n1 = n1
        self.n2 = n2
        self.single_spike = single_spike
        self.init_mean = init_mean
        self.init_spread = init_spread
        self.init_reading = init_reading
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.warm_start = warm_start
        self.verbose = verbose

    # conversion to and from the run configuration used by the CLI

    def run_config(self, n_features: int, n_classes: int, **extra) -> RunConfig:
        sizes = (n_features, *tuple(self.hidden_layer_sizes), n_classes)
        return RunConfig(sizes=sizes, tau_i=self.tau_i, t_out=self.t_out, t_min=self.t_min,
                         t_max=self.t_max, lam=self.lam, sigma=self.sigma,
                         dead_fraction=self.dead_fraction, lr=self.learning_rate,
                         epochs=self.max_epochs, batch_size=self.batch_size,
                         seed=int(self.random_state or 0), n1=self.n1, n2=self.n2,
                         single_spike=self.single_spike, init_mean=self.init_mean,
                         init_spread=self.init_spread, init_reading=self.init_reading,
                         n_jobs=self.n_jobs, **extra)

    @classmethod
    def from_run_config(cls, cfg: RunConfig) -> "SpikingClassifier":
        return cls(hidden_layer_sizes=cfg.sizes[1:-1], tau_i=cfg.tau_i, t_out=cfg.t_out,
                   t_min=cfg.t_min, t_max=cfg.t_max, lam=cfg.lam, sigma=cfg.sigma,
                   dead_fraction=cfg.dead_fraction, learning_rate=cfg.lr, max_epochs=cfg.epochs,
                   batch_size=cfg.batch_size, n1=cfg.n1, n2=cfg.n2, single_spike=cfg.single_spike,
                   init_mean=cfg.init_mean, init_spread=cfg.init_spread,
                   init_reading=cfg.init_reading, random_state=cfg.seed, n_jobs=cfg.n_jobs)

    @classmethod
    def from_model(cls, model: SpikingModel, cfg: RunConfig) -> "SpikingClassifier":
        """A warm-started estimator around existing state; classes are 0..n_out-1."""
        clf = cls.from_run_config(cfg).set_params(warm_start=True)
        clf.model_ = model
        clf.classes_ = np.arange(cfg.sizes[-1])
        clf.n_features_in_ = cfg.sizes[0]
        clf.history_ = []
        return clf

    def _validate_params(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.t_max > self.t_out:
            raise ValueError("input spikes after t_out would never be read out; need t_max <= t_out")

    def _init_model(self, n_features, n_classes):
        cfg = self.run_config(n_features, n_classes)
        return SpikingModel.create(cfg.sizes, cfg.neuron_params(), cfg.engine_config(),
                                   seed=cfg.seed, lr=cfg.lr, init_mean=cfg.init_mean,
                                   init_spread=cfg.init_spread, init_reading=cfg.init_reading,
                                   t_min=cfg.t_min, t_max=cfg.t_max)

    def fit(self, X, y, eval_set=None, on_epoch=None):
        """Train for ``max_epochs`` epochs in total.

        With ``warm_start`` an existing ``model_`` continues from its current
        epoch. ``eval_set=(X_val, y_val)`` adds validation accuracy to the
        history; ``on_epoch(self, record)`` is called after every epoch.
        """
        X, y = check_X_y(X, y, dtype=np.float64)
        _check_intensities(X)
        self._validate_params()
        fresh = not (self.warm_start and hasattr(self, "model_"))
        if fresh:
            self.classes_ = np.unique(y)
            if self.classes_.size < 2:
                raise ValueError("need at least two classes")
            self.n_features_in_ = X.shape[1]
            self.model_ = self._init_model(X.shape[1], self.classes_.size)
            self.history_ = []
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        targets = np.searchsorted(self.classes_, y)
        if np.any(self.classes_[np.minimum(targets, self.classes_.size - 1)] != y):
            raise ValueError("y contains labels unseen during the first fit")
        loss_config = LossConfig(lam=self.lam, sigma=self.sigma, dead_fraction=self.dead_fraction)
        if eval_set is not None:
            X_val, y_val = check_X_y(*eval_set, dtype=np.float64)

        while self.model_.epoch < self.max_epochs:
            m = train_epoch(self.model_, X, targets, self.batch_size, loss_config, self.n_jobs)
            record = {"epoch": self.model_.epoch, "train_loss": m.loss, "train_accuracy": m.accuracy,
                      "mean_spikes": m.mean_spikes, "dead_fraction": m.dead_fraction,
                      "truncated": m.truncated, "tangency_clips": m.tangency_clips}
            if eval_set is not None:
                record["test_accuracy"] = self.score(X_val, y_val)
            self.history_.append(record)
            if self.verbose:
                print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                               for k, v in record.items()), flush=True)
            if on_epoch is not None:
                on_epoch(self, record)
        return self

    def _forward(self, X):
        check_is_fitted(self, "model_")
        X = _check_intensities(check_array(X, dtype=np.float64))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return evaluate(self.model_, X, None, n_jobs=self.n_jobs)

    def decision_function(self, X):
        """Output potentials at ``t_out``, one column per class."""
        return self._forward(X).v_out

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def hidden_spike_counts(self, X) -> list[np.ndarray]:
        """Per hidden layer, the (n_samples, n_neurons) spike counts."""
        return self._forward(X).spike_counts
