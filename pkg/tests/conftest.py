import numpy as np
import pytest

from splatdyn.splats import SH_COEFFS, ObjectInfo, SplatScene


def random_scene(n, rng, labels=None, spread=1.0):
    """Valid random scene for round-trip and property tests."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    if labels is None:
        labels = np.zeros(n, dtype=np.int32)
    return SplatScene(
        means=rng.normal(scale=spread, size=(n, 3)).astype(np.float32),
        rotations=q.astype(np.float32),
        log_scales=rng.uniform(-3.0, 0.0, size=(n, 3)).astype(np.float32),
        opacity_logits=rng.normal(size=n).astype(np.float32),
        sh=rng.normal(scale=0.3, size=(n, 3, SH_COEFFS)).astype(np.float32),
        segment_labels=labels,
        objects={int(l): ObjectInfo(f"obj{int(l)}") for l in np.unique(labels)},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
