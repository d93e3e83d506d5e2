import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hetgcn.matcore import CsrMatrix, normalize_adjacency
from hetgcn.reorder import Permutation, apply_permutation, gen_sbm

# seeded community fixture shared by several suites
SBM_NODES = 512
SBM_COMMUNITIES = 8
SBM_P_IN = 0.3
SBM_P_OUT = 0.01
SBM_SEED = 7
SHUFFLE_SEED = 7
F_IN = 512
HIDDEN = 128
CLASSES = 8


@pytest.fixture(scope="session")
def sbm():
    return gen_sbm(SBM_NODES, SBM_COMMUNITIES, SBM_P_IN, SBM_P_OUT, SBM_SEED)


@pytest.fixture(scope="session")
def shuffled_sbm(sbm):
    return apply_permutation(sbm, Permutation.random(SBM_NODES, SHUFFLE_SEED))


@pytest.fixture(scope="session")
def sbm_norm(sbm):
    return normalize_adjacency(sbm)


@pytest.fixture(scope="session")
def shuffled_norm(shuffled_sbm):
    return normalize_adjacency(shuffled_sbm)


@pytest.fixture(scope="session")
def sbm_features():
    return np.random.default_rng(3).random((SBM_NODES, F_IN), dtype=np.float32)


def random_csr(rng, rows, cols, density, low=-1.0, high=1.0):
    dense = rng.uniform(low, high, size=(rows, cols)).astype(np.float32)
    dense[rng.random((rows, cols)) >= density] = 0.0
    return CsrMatrix.from_dense(dense)
