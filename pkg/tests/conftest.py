"""Shared fixtures: synthetic scenes and cached feature bundles.

Feature computation and the numba solvers dominate test runtime, so
scenes and bundles are built once per session and shared read-only.
"""

import numpy as np
import pytest

from tubetrace.pipeline import ExtractionConfig, compute_features
from tubetrace.synth import generate_synthetic_crossing, preset_spec, tube_image


@pytest.fixture(scope="session")
def default_config():
    return ExtractionConfig()


@pytest.fixture(scope="session")
def tube_bundle(default_config):
    """Straight radius-4 tube plus its feature bundle."""
    img, mask, line = tube_image(shape=(64, 128), half_width=4.0)
    feats = compute_features(img, default_config)
    return {"image": img, "mask": mask, "line": line, "features": feats}


@pytest.fixture(scope="session")
def weak_cross(default_config):
    """Weak arc crossed twice by a strong straight tube (seed 1)."""
    spec = preset_spec("weak-cross", seed=1)
    scene = generate_synthetic_crossing(
        spec["tubes"], spec["shape"], noise_sigma=spec["noise"], seed=1
    )
    feats = compute_features(scene.image, default_config)
    return {"spec": spec, "scene": scene, "features": feats}


@pytest.fixture(scope="session")
def cross_scene(default_config):
    """Single crossing of two similar tubes (seed 0)."""
    spec = preset_spec("cross", seed=0)
    scene = generate_synthetic_crossing(
        spec["tubes"], spec["shape"], noise_sigma=spec["noise"], seed=0
    )
    feats = compute_features(scene.image, default_config)
    return {"spec": spec, "scene": scene, "features": feats}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
