"""Small regression models for the train-on-synthetic efficacy comparison.

Two deliberately separate routes: the linear model is solved in closed form
(least squares), while :class:`GradientDescentRegressor` trains by
mini-batch gradient descent and doubles as the MLP (one rectified hidden
layer) when ``hidden_units > 0``. With ``hidden_units=0`` it fits a plain
linear model through the same training loop, which is the internal
consistency check against the closed-form solution.
"""

from __future__ import annotations

import numpy as np

from .base import ParamMixin, check_is_fitted, derive_rng


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_tot = ((y_true - y_true.mean()) ** 2).sum()
    if ss_tot == 0:
        raise ValueError("target variance is zero; coefficient of determination undefined")
    return 1.0 - float(((y_true - y_pred) ** 2).sum() / ss_tot)


class ClosedFormLinear(ParamMixin):
    """Ordinary least squares with intercept, solved by lstsq."""

    def __init__(self):
        pass

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        A = np.column_stack([X, np.ones(len(X))])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        self.coef_ = coef[:-1]
        self.intercept_ = coef[-1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_

    def score(self, X, y):
        return r2_score(y, self.predict(X))


class GradientDescentRegressor(ParamMixin):
    """Mini-batch SGD regressor; MLP with one ReLU hidden layer, or linear.

    Inputs and target are standardized internally; all weights come from a
    stream derived from ``seed``, so training is fully reproducible.
    ``batch_size=None`` runs full-batch gradient descent.
    """

    def __init__(self, hidden_units=32, epochs=200, batch_size=64,
                 learning_rate=0.01, momentum=0.9, seed=0):
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        self.x_mean_ = X.mean(axis=0)
        self.x_std_ = X.std(axis=0)
        self.x_std_[self.x_std_ == 0] = 1.0
        self.y_mean_ = y.mean()
        self.y_std_ = y.std() or 1.0
        Xs = (X - self.x_mean_) / self.x_std_
        ys = (y - self.y_mean_) / self.y_std_

        rng = derive_rng(self.seed, "gd-regressor")
        h = self.hidden_units
        if h > 0:
            params = [rng.normal(0, np.sqrt(2.0 / d), size=(d, h)), np.zeros(h),
                      rng.normal(0, np.sqrt(1.0 / h), size=h), np.array(0.0)]
        else:
            params = [np.zeros(d), np.array(0.0)]
        velocity = [np.zeros_like(p) for p in params]

        bs = n if self.batch_size is None else min(self.batch_size, n)
        for _ in range(self.epochs):
            order = rng.permutation(n) if self.batch_size is not None else np.arange(n)
            for s in range(0, n, bs):
                bi = order[s:s + bs]
                grads = self._grads(params, Xs[bi], ys[bi])
                for p, v, g in zip(params, velocity, grads):
                    v *= self.momentum
                    v -= self.learning_rate * g
                    p += v
        self.params_ = params
        return self

    def _forward(self, params, Xs):
        if self.hidden_units > 0:
            w1, b1, w2, b2 = params
            z = Xs @ w1 + b1
            a = np.maximum(z, 0.0)
            return a @ w2 + b2, (z, a)
        w, b = params
        return Xs @ w + b, None

    def _grads(self, params, Xs, ys):
        m = len(ys)
        pred, cache = self._forward(params, Xs)
        err = 2.0 * (pred - ys) / m
        if self.hidden_units > 0:
            w1, b1, w2, b2 = params
            z, a = cache
            gw2 = a.T @ err
            gb2 = err.sum()
            da = np.outer(err, w2)
            da[z <= 0] = 0.0
            gw1 = Xs.T @ da
            gb1 = da.sum(axis=0)
            return [gw1, gb1, gw2, np.asarray(gb2)]
        gw = Xs.T @ err
        return [gw, np.asarray(err.sum())]

    def predict(self, X):
        check_is_fitted(self, "params_")
        Xs = (np.asarray(X, dtype=float) - self.x_mean_) / self.x_std_
        pred, _ = self._forward(self.params_, Xs)
        return pred * self.y_std_ + self.y_mean_

    def score(self, X, y):
        return r2_score(y, self.predict(X))
