import numpy as np
import pytest

from mmropt.model import PairwiseProblem


def table_problem(blocks: dict, n_particles: int, sizes: list[int]) -> PairwiseProblem:
    """Pairwise problem whose cost is a lookup into given per-pair tables.

    Points are 1-D integer coordinates 0..size-1 per particle.
    """

    def cost(i, j, xi, xj):
        key = (i, j) if (i, j) in blocks else (j, i)
        B = blocks.get(key)
        if B is None:
            return np.zeros((len(xi), len(xj)))
        ai = xi[:, 0].astype(int)
        aj = xj[:, 0].astype(int)
        block = B if key == (i, j) else B.T
        return block[np.ix_(ai, aj)]

    return PairwiseProblem(n_particles=n_particles, dim=1, pair_cost=cost)


def index_points(sizes: list[int]) -> list[np.ndarray]:
    return [np.arange(s, dtype=float).reshape(-1, 1) for s in sizes]


def random_instance(rng, n_particles=None, sizes=None):
    """Random dense pairwise table instance with Unif[-1, 1] costs."""
    if n_particles is None:
        n_particles = int(rng.integers(2, 5))
    if sizes is None:
        sizes = [int(rng.integers(2, 5)) for _ in range(n_particles)]
    blocks = {
        (i, j): rng.uniform(-1.0, 1.0, (sizes[i], sizes[j]))
        for i in range(n_particles)
        for j in range(i + 1, n_particles)
    }
    return table_problem(blocks, n_particles, sizes), index_points(sizes), blocks


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
