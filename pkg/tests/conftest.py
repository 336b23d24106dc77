import math

import numpy as np
import pytest

from sparse_tracking.selection import SelectionParams, build_problem

# Six unit vectors in R^3; their Gram matrix is a valid correlation matrix.
FIXTURE_VECTORS = np.array([
    [1.0, 0.0, 0.0],
    [0.8, 0.6, 0.0],
    [0.0, 1.0, 0.0],
    [0.6, 0.0, 0.8],
    [0.0, 0.6, 0.8],
    [-0.6, 0.8, 0.0],
])


def distance_oracle(rho):
    k = len(rho)
    return np.array([[math.sqrt(max(0.0, 2.0 * (1.0 - rho[i][j]))) for j in range(k)]
                     for i in range(k)])


def random_correlation(rng, k, rank=None):
    rank = rank or int(rng.integers(1, k + 1))
    a = rng.normal(size=(k, rank))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    rho = np.clip(a @ a.T, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


def random_distance(rng, k, rank=None):
    return distance_oracle(random_correlation(rng, k, rank))


def objective_oracle(d, S, alpha, beta):
    """Direct double sum: beta * sum_i sum_j d_ij - alpha/2 * sum_{i,j in S} d_ij."""
    k = len(d)
    first = sum(d[i][j] for i in S for j in range(k))
    second = sum(d[i][j] for i in S for j in S)
    return beta * first - 0.5 * alpha * second


@pytest.fixture
def fixture_distance():
    return distance_oracle(FIXTURE_VECTORS @ FIXTURE_VECTORS.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def make_problem(d, K, H, N, M, alpha, beta):
    return build_problem(d, SelectionParams(K, H, N, M, alpha, beta))
