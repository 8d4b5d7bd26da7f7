import numpy as np
import pytest

from embrich.data import SyntheticSpec, generate_synthetic


@pytest.fixture
def blob_xor():
    """200-point XOR: four tight Gaussian blobs, opposite corners share a class."""
    rng = np.random.default_rng(0)
    centers = [(1, 1), (-1, -1), (-1, 1), (1, -1)]
    labels = [0, 0, 1, 1]
    X, y = [], []
    for (cx, cy), lab in zip(centers, labels):
        X.append(rng.normal([cx, cy], 0.25, size=(50, 2)))
        y += [lab] * 50
    return np.vstack(X), np.array(y)


@pytest.fixture
def separable_1d():
    """Two well-separated 1-D Gaussians, 50 points each."""
    rng = np.random.default_rng(3)
    X = np.concatenate([rng.normal(-3, 0.5, 50), rng.normal(3, 0.5, 50)]).reshape(-1, 1)
    y = np.array([0] * 50 + [1] * 50)
    return X, y


@pytest.fixture
def two_clusters_64d():
    """Two 50-point Gaussian clusters with 20-sigma centroid separation in 64-D."""
    rng = np.random.default_rng(42)
    a = rng.normal(0, 1.0, size=(50, 64))
    b = rng.normal(0, 1.0, size=(50, 64))
    b[:, 0] += 20.0
    return np.vstack([a, b]), np.array([0] * 50 + [1] * 50)


@pytest.fixture
def text_signal_dataset():
    """Synthetic dataset whose target is reachable only through the text route."""
    spec = SyntheticSpec(
        n=200,
        numeric_count=3,
        categorical_count=1,
        signal_column="signal",
        noise_seed=5,
        signal_text_only=True,
    )
    return generate_synthetic(spec)
