import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from multispike.estimator import LatencyEncoder, SpikingClassifier


def two_halves(n=120, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = np.zeros((n, 784), dtype=np.uint8)
    cols = np.arange(784) % 28
    for i, lab in enumerate(y):
        mask = (cols < 14) if lab == 0 else (cols >= 14)
        x[i, mask & (rng.random(784) < 0.3)] = 255
    return x, np.where(y == 0, "left", "right")


def small(**kw):
    params = dict(hidden_layer_sizes=(10,), max_epochs=4, batch_size=20, learning_rate=0.01)
    params.update(kw)
    return SpikingClassifier(**params)


class TestEncoder:
    def test_transform_and_inverse(self):
        x = np.array([[0, 255, 51]])
        enc = LatencyEncoder().fit(x)
        t = enc.transform(x)
        assert t == pytest.approx(np.array([[1.0, 0.0, 0.8]]))
        assert enc.inverse_transform(t) == pytest.approx(x)

    def test_validation(self):
        with pytest.raises(ValueError):
            LatencyEncoder().fit(np.array([[300.0]]))
        with pytest.raises(NotFittedError):
            LatencyEncoder().transform(np.zeros((1, 3)))
        with pytest.raises(ValueError):
            LatencyEncoder().fit(np.zeros((1, 3))).transform(np.zeros((1, 4)))


class TestClassifier:
    def test_params_round_trip(self):
        clf = SpikingClassifier(tau_i=1.6, single_spike=True)
        assert clf.get_params()["tau_i"] == 1.6
        c2 = clone(clf)
        assert c2.get_params() == clf.get_params()
        clf.set_params(lam=0.0)
        assert clf.lam == 0.0

    def test_defaults_match_run_config(self):
        cfg = SpikingClassifier().run_config(784, 10)
        assert cfg.sizes == (784, 400, 10) and cfg.epochs == 100 and cfg.lr == 1e-3

    def test_fit_predict(self):
        x, y = two_halves()
        clf = small().fit(x, y)
        assert set(clf.classes_) == {"left", "right"}
        assert clf.score(x, y) > 0.9
        proba = clf.predict_proba(x[:5])
        assert proba.shape == (5, 2) and np.allclose(proba.sum(1), 1.0)
        assert clf.decision_function(x[:5]).shape == (5, 2)
        assert len(clf.history_) == 4

    def test_eval_set_and_callback(self):
        x, y = two_halves()
        seen = []
        clf = small(max_epochs=2).fit(x, y, eval_set=(x[:30], y[:30]), on_epoch=lambda e, r: seen.append(r))
        assert [r["epoch"] for r in seen] == [1, 2] and "test_accuracy" in clf.history_[0]

    def test_warm_start_continues(self):
        x, y = two_halves()
        a = small(max_epochs=2).fit(x, y)
        b = small(max_epochs=1, warm_start=True).fit(x, y)
        b.set_params(max_epochs=2).fit(x, y)
        assert all(np.array_equal(u, v) for u, v in zip(a.model_.weights, b.model_.weights))

    def test_deterministic(self):
        x, y = two_halves()
        a = small(max_epochs=1).fit(x, y).decision_function(x)
        b = small(max_epochs=1, n_jobs=2).fit(x, y).decision_function(x)
        assert np.array_equal(a, b)

    def test_input_validation(self):
        x, y = two_halves(40)
        with pytest.raises(ValueError):
            small().fit(x.astype(float) - 1.0, y)
        with pytest.raises(ValueError):
            small().fit(x, np.zeros(40))
        with pytest.raises(ValueError):
            small().fit(x[:10], y[:9])
        with pytest.raises(NotFittedError):
            small().predict(x)
        clf = small(max_epochs=1).fit(x, y)
        with pytest.raises(ValueError):
            clf.predict(x[:, :100])

    def test_single_spike_counts(self):
        x, y = two_halves(60)
        clf = small(max_epochs=1, single_spike=True).fit(x, y)
        assert clf.hidden_spike_counts(x)[0].max() <= 1

    def test_in_pipeline_with_scaler(self):
        from sklearn.preprocessing import FunctionTransformer
        x, y = two_halves(60)
        pipe = make_pipeline(FunctionTransformer(lambda a: a), small(max_epochs=1))
        pipe.fit(x, y)
        assert pipe.predict(x).shape == (60,)
