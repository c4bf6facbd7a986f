"""scikit-learn compatible wrappers around the numpy LSTM and the swarm search.

``X`` is always a batch of windows, shape ``(n_samples, n_steps, n_features)``;
a 2-D ``X`` is read as univariate windows ``(n_samples, n_steps)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, clone
from sklearn.model_selection import cross_val_score
from sklearn.utils.validation import check_is_fitted

from . import lstm, pso
from .pso import MAXIMIZE, ModelConfig, SearchBounds


def _check_windows(X, n_features=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ValueError(f"expected 3-D windows (n_samples, n_steps, n_features), got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("found array with 0 samples")
    if not np.isfinite(X).all():
        raise ValueError("input contains NaN or infinity")
    if n_features is not None and X.shape[2] != n_features:
        raise ValueError(f"X has {X.shape[2]} features, but the estimator was fitted with {n_features}")
    return X


class _LstmBase(BaseEstimator):
    _task = lstm.REGRESSION

    def __init__(self, n_layers=1, n_neurons=16, epochs=10, learning_rate=0.01, batch_size=32, random_state=0):
        self.n_layers = n_layers
        self.n_neurons = n_neurons
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state

    def _fit(self, X, y, output_width):
        cfg = ModelConfig(int(self.n_layers), int(self.n_neurons), int(self.epochs))
        seed = 0 if self.random_state is None else self.random_state
        model = lstm.init_model(cfg, X.shape[2], output_width, seed, self._task)
        spec = lstm.TrainSpec(
            epochs=cfg.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            shuffle_seed_base=seed,
        )
        self.model_ = lstm.train_local(model, lstm.Samples(X, y), spec)
        self.n_features_in_ = X.shape[2]
        return self


class LstmRegressor(RegressorMixin, _LstmBase):
    """Stacked LSTM regressor trained with plain mini-batch SGD."""

    def fit(self, X, y):
        X = _check_windows(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
        return self._fit(X, y, 1)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return lstm.predict(self.model_, _check_windows(X, self.n_features_in_))


class LstmClassifier(ClassifierMixin, _LstmBase):
    """Stacked LSTM classifier with a softmax head."""

    _task = lstm.CLASSIFICATION

    def fit(self, X, y):
        X = _check_windows(X)
        y = np.asarray(y).ravel()
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} samples but y has {len(y)}")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        return self._fit(X, encoded, len(self.classes_))

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return lstm.forward(self.model_, _check_windows(X, self.n_features_in_))

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]


class SwarmSearchCV(BaseEstimator):
    """Particle-swarm search over three integer hyperparameters.

    Like ``GridSearchCV`` but the candidates come from the swarm. Each
    candidate is scored by mean cross-validated score (higher is better);
    a configuration is scored at most once.

    Parameters
    ----------
    estimator : estimator object
        Must accept the three ``param_names`` via ``set_params``.
    bounds : SearchBounds, optional
        Integer box to search; defaults to layers [1, 5], neurons [1, 200],
        epochs [1, 50].
    pop_size, max_it : int
        Swarm size and iteration budget.
    w, c1, c2 : float
        Inertia and acceleration coefficients. When ``c1`` or ``c2`` is None
        both are drawn uniformly from [0, 4] once per fit.
    cv, scoring
        Passed to ``cross_val_score``.
    param_names : tuple of str
        Estimator parameters that receive (layers, neurons, epochs).
    """

    def __init__(
        self,
        estimator,
        bounds=None,
        pop_size=5,
        max_it=10,
        w=pso.DEFAULT_INERTIA,
        c1=None,
        c2=None,
        cv=3,
        scoring=None,
        param_names=("n_layers", "n_neurons", "epochs"),
        literal=False,
        refit=True,
        random_state=0,
    ):
        self.estimator = estimator
        self.bounds = bounds
        self.pop_size = pop_size
        self.max_it = max_it
        self.w = w
        self.c1 = c1
        self.c2 = c2
        self.cv = cv
        self.scoring = scoring
        self.param_names = param_names
        self.literal = literal
        self.refit = refit
        self.random_state = random_state

    def _params_for(self, cfg):
        return dict(zip(self.param_names, (int(v) for v in cfg)))

    def fit(self, X, y=None):
        bounds = self.bounds or SearchBounds()
        coef = None
        if self.c1 is not None and self.c2 is not None:
            coef = pso.PsoCoefficients(self.w, self.c1, self.c2)

        def fitness(cfg):
            est = clone(self.estimator).set_params(**self._params_for(cfg))
            return float(np.mean(cross_val_score(est, X, y, cv=self.cv, scoring=self.scoring)))

        self.search_ = pso.run(
            bounds,
            coef,
            self.pop_size,
            self.max_it,
            fitness,
            self.random_state,
            direction=MAXIMIZE,
            literal=self.literal,
            w=self.w,
        )
        self.best_params_ = self._params_for(self.search_.best_config)
        self.best_score_ = self.search_.best_fitness
        self.n_candidates_ = len({ev.config for ev in self.search_.evaluations})
        if self.refit:
            self.best_estimator_ = clone(self.estimator).set_params(**self.best_params_).fit(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.predict(X)

    def score(self, X, y=None):
        check_is_fitted(self, "best_estimator_")
        return self.best_estimator_.score(X, y)
