import numpy as np


def separable_set(seed=0, n=200, d=16):
    """Labels split by feature 0 with a gap of at least 2 (margin >= 1 either side of 0)."""
    rng = np.random.default_rng(seed)
    y = np.array([1] * (n // 2) + [0] * (n - n // 2))
    rng.shuffle(y)
    x = rng.normal(size=(n, d))
    x[:, 0] = np.where(y == 1, 1.0 + np.abs(rng.normal(size=n)), -1.0 - np.abs(rng.normal(size=n)))
    return x, y
