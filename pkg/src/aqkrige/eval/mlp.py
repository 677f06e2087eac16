"""One-hidden-layer perceptron mapping (lat, lon, time) to concentration."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import DataError, InsufficientDataError


def init_params(n_in, n_hidden, rng):
    return {
        "W1": rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, n_hidden)),
        "b1": np.zeros(n_hidden),
        "w2": rng.normal(0.0, 1.0 / np.sqrt(n_hidden), n_hidden),
        "b2": np.zeros(1),
    }


def forward(params, X):
    hidden = np.tanh(X @ params["W1"] + params["b1"])
    return hidden @ params["w2"] + params["b2"][0], hidden


def loss_and_grad(params, X, y):
    """Mean squared error and its gradient with respect to every parameter."""
    out, hidden = forward(params, X)
    n = len(y)
    resid = out - y
    loss = float(np.mean(resid**2))
    d_out = 2.0 * resid / n
    grads = {
        "w2": hidden.T @ d_out,
        "b2": np.array([d_out.sum()]),
    }
    d_hidden = np.outer(d_out, params["w2"]) * (1.0 - hidden**2)
    grads["W1"] = X.T @ d_hidden
    grads["b1"] = d_hidden.sum(axis=0)
    return loss, grads


def gradient_check(params, X, y, eps=1e-5):
    """Largest relative error between analytic and central-difference gradients."""
    _, grads = loss_and_grad(params, X, y)
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        g = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up, _ = loss_and_grad(params, X, y)
            flat[k] = orig - eps
            down, _ = loss_and_grad(params, X, y)
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(numeric) + abs(g[k]), 1e-10)
            worst = max(worst, abs(numeric - g[k]) / denom)
    return worst


class MLPInterpolator(RegressorMixin, BaseEstimator):
    """Tanh MLP trained with mini-batch Adam on min-max scaled inputs.

    Targets are standardised internally. A single model covers the whole
    dataset, so time is just a third input feature.
    """

    def __init__(self, hidden=32, epochs=200, batch_size=64, learning_rate=1e-2, seed=0,
                 min_samples=1000):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.min_samples = min_samples

    def _scale(self, X):
        return (X - self.x_min_) / self.x_span_

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if len(y) < self.min_samples:
            raise InsufficientDataError(
                f"MLP baseline needs >= {self.min_samples} training cells, got {len(y)}"
            )
        rng = np.random.default_rng(self.seed)
        self.x_min_ = X.min(axis=0)
        span = X.max(axis=0) - self.x_min_
        self.x_span_ = np.where(span > 0, span, 1.0)
        self.y_mean_ = float(y.mean())
        self.y_scale_ = float(y.std()) or 1.0
        Xs = self._scale(X)
        ys = (y - self.y_mean_) / self.y_scale_

        params = init_params(X.shape[1], self.hidden, rng)
        m = {k: np.zeros_like(v) for k, v in params.items()}
        v = {k: np.zeros_like(p) for k, p in params.items()}
        beta1, beta2, tiny = 0.9, 0.999, 1e-8
        step = 0
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            order = rng.permutation(len(ys))
            total = 0.0
            for start in range(0, len(ys), self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, grads = loss_and_grad(params, Xs[idx], ys[idx])
                if not np.isfinite(loss):
                    raise DataError(
                        f"MLP loss became non-finite at epoch {epoch}, step {step} "
                        f"(learning_rate={self.learning_rate}, batch_size={self.batch_size})"
                    )
                step += 1
                for k in params:
                    m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                    v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                    m_hat = m[k] / (1 - beta1**step)
                    v_hat = v[k] / (1 - beta2**step)
                    params[k] = params[k] - self.learning_rate * m_hat / (np.sqrt(v_hat) + tiny)
                total += loss * len(idx)
            self.loss_curve_.append(total / len(ys))
        self.params_ = params
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        out, _ = forward(self.params_, self._scale(X))
        return out * self.y_scale_ + self.y_mean_
