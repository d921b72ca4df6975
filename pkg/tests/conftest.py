import numpy as np
import pytest

from gsmkit.alignment import AlignedDatabase, align_database, trapezoid_rule
from gsmkit.testbed import REFERENCE_DOMAIN, build_synthetic_database


@pytest.fixture(scope="session")
def quad():
    return trapezoid_rule(REFERENCE_DOMAIN, 33)


@pytest.fixture(scope="session")
def distorted_db():
    return build_synthetic_database(4, seed=0, distortions=True)


@pytest.fixture(scope="session")
def aligned_db(distorted_db, quad):
    return align_database(distorted_db.entries, REFERENCE_DOMAIN, quad)


@pytest.fixture(scope="session")
def plain_db():
    sdb = build_synthetic_database(5, seed=3, distortions=False)
    return AlignedDatabase(sdb.entries, REFERENCE_DOMAIN)


def lhs_unit(rng, n, d):
    return (np.column_stack([rng.permutation(n) for _ in range(d)]) + rng.uniform(size=(n, d))) / n
