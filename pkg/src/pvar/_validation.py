"""Input validation helpers for the estimator API."""

import numpy as np
from sklearn.utils.validation import check_array


def check_series(X, season_length):
    """Validate an (n_samples, n_features) array spanning whole years."""
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[:, None]
    if season_length < 1:
        raise ValueError("season_length must be at least 1")
    if X.shape[0] % season_length:
        raise ValueError(f"{X.shape[0]} samples are not whole years of length {season_length}")
    if X.shape[0] < 2 * season_length:
        raise ValueError("need at least two whole years of data")
    return X


def check_orders(order, season_length):
    orders = np.broadcast_to(np.asarray(order, dtype=int), (season_length,))
    if np.any(orders < 0):
        raise ValueError("orders must be nonnegative")
    return tuple(int(k) for k in orders)
