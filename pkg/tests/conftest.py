import numpy as np
import pytest

from gaimpute import dataset as ds


@pytest.fixture(scope="session")
def schema():
    return ds.default_schema()


@pytest.fixture(scope="session")
def synthetic_raw(schema):
    return ds.synthesize(schema, 1500, seed=11)


@pytest.fixture(scope="session")
def synthetic_parts(schema, synthetic_raw):
    return ds.partition(ds.normalize(synthetic_raw, schema), (0.6, 0.15, 0.25), seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
