"""Augmented Dickey-Fuller unit-root test (constant-only regression)."""

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .exceptions import DataError, InsufficientDataError


@lru_cache(maxsize=None)
def critical_value_table():
    raw = json.loads(resources.files("aqkrige").joinpath("data/adf_critical_values.json").read_text())
    return {float(level): tuple(coefs) for level, coefs in raw["levels"].items()}


def critical_values(nobs):
    """Finite-sample critical values keyed by significance level."""
    out = {}
    for level, b in critical_value_table().items():
        out[level] = b[0] + b[1] / nobs + b[2] / nobs**2 + b[3] / nobs**3
    return out


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags: int
    p_bracket: str
    stationary_at_0_05: bool
    nobs: int
    critical_values: dict


def adf_test(series, lags=0):
    """Test the unit-root null on ``series``; small statistics reject it.

    Fits ``dy_t = a + b*y_{t-1} + sum_j phi_j*dy_{t-j} + e_t`` by OLS and
    returns ``b_hat / se(b_hat)``. Regression rows touching a missing value
    are dropped.
    """
    y = np.asarray(series, dtype=float)
    lags = int(lags)
    if lags < 0:
        raise DataError("lags must be >= 0")
    n_valid = int(np.isfinite(y).sum())
    if n_valid <= lags + 10:
        raise InsufficientDataError(
            f"series has {n_valid} usable values; need more than lags + 10 = {lags + 10}"
        )
    finite = y[np.isfinite(y)]
    if np.ptp(finite) == 0:
        raise DataError("series is constant")

    dy = np.diff(y)
    rows = np.arange(lags, len(dy))
    cols = [np.ones(len(rows)), y[rows]]
    for j in range(1, lags + 1):
        cols.append(dy[rows - j])
    X = np.column_stack(cols)
    target = dy[rows]
    ok = np.isfinite(target) & np.all(np.isfinite(X), axis=1)
    X, target = X[ok], target[ok]
    nobs, k = X.shape
    if nobs <= k:
        raise InsufficientDataError("too few complete regression rows")

    coef, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < k:
        raise DataError("singular Dickey-Fuller regression matrix")
    resid = target - X @ coef
    sigma2 = resid @ resid / (nobs - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(sigma2 * xtx_inv[1, 1])
    if not np.isfinite(se) or se == 0:
        raise DataError("degenerate Dickey-Fuller regression (zero residual variance)")
    stat = float(coef[1] / se)

    crit = critical_values(nobs)
    if stat < crit[0.01]:
        bracket = "below_0.01"
    elif stat < crit[0.05]:
        bracket = "below_0.05"
    elif stat < crit[0.10]:
        bracket = "below_0.10"
    else:
        bracket = "above_0.10"
    return AdfResult(stat, lags, bracket, stat < crit[0.05], nobs, crit)
