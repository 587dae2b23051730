import json

import numpy as np
import pytest

from fusionbiopsy.core import GrayImage
from fusionbiopsy.fixture import FixtureSpec, build_fixture


def gray(arr, normalized=False) -> GrayImage:
    return GrayImage(np.asarray(arr, dtype=np.float64), normalized=normalized)


def random_image(rng, h=32, w=32) -> GrayImage:
    return GrayImage(rng.uniform(0.0, 1.0, size=(h, w)), normalized=True)


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """A small deterministic dataset shared by pipeline-level tests."""
    out = tmp_path_factory.mktemp("dataset")
    manifest = build_fixture(out, FixtureSpec(patients=20, seed=5))
    return manifest


def write_manifest(path, records):
    path.write_text(json.dumps(records, indent=1) + "\n")
    return path
