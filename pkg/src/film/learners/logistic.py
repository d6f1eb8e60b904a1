"""L2-penalized logistic regression fitted by Newton's method (IRLS).

The objective is the mean log-loss plus ``l2_penalty / 2 * ||w||^2`` (the
intercept is not penalized). Each Newton step is followed by a backtracking
line search; when the Hessian is singular the step falls back to the
minimum-norm solution and, failing that, to plain gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import SingularFit, WidthMismatch

SCORE_CLIP = 30.0
_COND_LIMIT = 1e12


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(np.clip(z, -SCORE_CLIP, SCORE_CLIP))


def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def log_loss(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0) -> float:
    """Penalized mean log-loss; ``params[0]`` is the intercept."""
    z = _design(X) @ params
    data = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(data + 0.5 * l2_penalty * np.dot(params[1:], params[1:]))


def log_loss_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2_penalty: float = 0.0) -> np.ndarray:
    A = _design(X)
    p = expit(A @ params)
    g = A.T @ (p - y) / X.shape[0]
    g[1:] += l2_penalty * params[1:]
    return g


def _hessian(params, A, l2_penalty):
    p = expit(np.clip(A @ params, -SCORE_CLIP, SCORE_CLIP))
    w = p * (1.0 - p)
    H = (A.T * w) @ A / A.shape[0]
    H[np.arange(1, H.shape[0]), np.arange(1, H.shape[0])] += l2_penalty
    return H


def _direction(H, g):
    try:
        if np.linalg.cond(H) < _COND_LIMIT:
            return np.linalg.solve(H, g)
        step = np.linalg.lstsq(H, g, rcond=1e-12)[0]
    except np.linalg.LinAlgError:
        return g
    return step if np.all(np.isfinite(step)) else g


@dataclass(frozen=True, eq=False)
class LogisticModel:
    spec: object
    coef: np.ndarray
    intercept: float
    iterations: int
    converged: bool

    @property
    def n_features(self) -> int:
        return int(self.coef.shape[0])

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise WidthMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        return X @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def state_json(self) -> dict:
        return {
            "coef": [float(c) for c in self.coef],
            "intercept": float(self.intercept),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _line_search(params, d, g, loss, X, y, l2):
    """Backtracking (Armijo) search along ``-d``; None if no step decreases the loss."""
    slope = float(np.dot(g, d))
    t = 1.0
    while t > 1e-10:
        cand = params - t * d
        new_loss = log_loss(cand, X, y, l2)
        if new_loss <= loss - 1e-4 * t * slope and new_loss < loss:
            return cand, new_loss
        t *= 0.5
    return None


def fit_logistic(spec, X: np.ndarray, y: np.ndarray) -> LogisticModel:
    hp = spec.params
    max_iter = int(hp["max_iterations"])
    tol = float(hp["convergence_tolerance"])
    l2 = float(hp["l2_penalty"])
    A = _design(X)
    y = y.astype(np.float64)
    params = np.zeros(A.shape[1])
    # intercept start at the log-odds of the base rate
    rate = y.mean()
    params[0] = np.log(rate / (1.0 - rate))
    loss = log_loss(params, X, y, l2)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = log_loss_grad(params, X, y, l2)
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        d = _direction(_hessian(params, A, l2), g)
        if np.dot(d, g) <= 0:  # not a descent direction
            d = g
        found = _line_search(params, d, g, loss, X, y, l2)
        if found is None and d is not g:
            found = _line_search(params, g, g, loss, X, y, l2)
        if found is None:
            if it == 1 and np.max(np.abs(g)) >= np.sqrt(tol):
                raise SingularFit("no descent step from the starting point")
            # no direction makes progress: stationary up to precision
            converged = bool(np.max(np.abs(g)) < np.sqrt(tol))
            break
        cand, new_loss = found
        if not np.isfinite(new_loss):
            raise SingularFit("log-loss became non-finite")
        step = np.max(np.abs(cand - params))
        params, prev, loss = cand, loss, new_loss
        if step < tol or prev - loss < tol * max(1.0, abs(loss)):
            converged = True
            break
    if not np.all(np.isfinite(params)):
        raise SingularFit("coefficients are not finite")
    return LogisticModel(spec, params[1:].copy(), float(params[0]), it, bool(converged))


def logistic_from_json(spec, state: dict) -> LogisticModel:
    return LogisticModel(spec, np.array(state["coef"], dtype=np.float64), float(state["intercept"]),
                         int(state["iterations"]), bool(state["converged"]))
