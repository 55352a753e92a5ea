"""Synthetic datasets in [0, 1]^d with a built-in class taxonomy.

The hierarchical Gaussian fixture has 8 classes in two super-collections
("alpha" holds classes 0-3, "beta" holds 4-7, matching the bundled fixture
hierarchy). Cluster centers place same-collection classes much closer to
one another than to the other collection, so misclassification under small
perturbations lands inside the collection by construction.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .evaluation import DatasetItem, LabeledDataset
from .rng import philox_rng

FIXTURE_CLASSES = 8


def fixture_centers(dim: int) -> np.ndarray:
    """Cluster centers: super-collections split on axis 0 (0.30 vs 0.70),
    sub-pairs on axis 1 (+-0.14), class pairs on axis 2 (+-0.09)."""
    if dim < 3:
        raise ContractError("fixture needs dim >= 3")
    centers = np.full((FIXTURE_CLASSES, dim), 0.5)
    for cls in range(FIXTURE_CLASSES):
        centers[cls, 0] = 0.30 if cls < 4 else 0.70
        centers[cls, 1] = 0.5 + (0.14 if (cls % 4) >= 2 else -0.14)
        centers[cls, 2] = 0.5 + (0.09 if cls % 2 else -0.09)
    return centers


def hierarchical_gaussian(per_class: int, *, dim: int = 8, noise: float = 0.03,
                          seed: int = 0, stream: int = 0, id_prefix: str = "item") -> LabeledDataset:
    """Sample `per_class` points around each fixture center, clipped to [0, 1]."""
    if per_class < 1:
        raise ContractError("per_class must be >= 1")
    rng = philox_rng(seed, stream=stream)
    centers = fixture_centers(dim)
    items = []
    idx = 0
    for cls in range(FIXTURE_CLASSES):
        pts = np.clip(centers[cls] + rng.normal(0.0, noise, size=(per_class, dim)), 0.0, 1.0)
        for row in pts:
            items.append(DatasetItem(item_id=f"{id_prefix}{idx:05d}", x=row, true_class=cls))
            idx += 1
    return LabeledDataset(items=items, num_classes=FIXTURE_CLASSES)


def two_blobs(per_class: int, *, noise: float = 0.05, seed: int = 0) -> LabeledDataset:
    """Linearly separable 2-class 2-D blobs for training sanity checks."""
    rng = philox_rng(seed, stream=0)
    centers = np.array([[0.3, 0.3], [0.7, 0.7]])
    items = []
    idx = 0
    for cls in range(2):
        pts = np.clip(centers[cls] + rng.normal(0.0, noise, size=(per_class, 2)), 0.0, 1.0)
        for row in pts:
            items.append(DatasetItem(item_id=f"blob{idx:04d}", x=row, true_class=cls))
            idx += 1
    return LabeledDataset(items=items, num_classes=2)
