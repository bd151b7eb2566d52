"""Instance generators shared by the test modules."""
from fractions import Fraction

import numpy as np

from measurable_ot.measures import ParamFamily, make_discrete, sample_cloud, uniform


def identity_family(d=1, seed=0, params=3):
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(params):
        mu = sample_cloud({"type": "uniform-box", "low": [-2.0] * d, "high": [2.0] * d}, 6, int(rng.integers(2**32)))
        entries.append((f"id{k}", Fraction(k + 1, 2), mu, mu))
    return ParamFamily.build(entries, p=2)


def two_atom_family(mass=1):
    return ParamFamily.build([("lam", mass, uniform([0, 1]), uniform([2, 3]))], p=2)


def random_family(seed, max_params=16, max_atoms=30):
    """Random family with unique optimal maps: affine or independent targets."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    p = float(rng.choice([1.5, 2.0, 3.0]))
    count = int(rng.integers(1, max_params + 1))
    entries = []
    for k in range(count):
        n = int(rng.integers(1, max_atoms + 1))
        mu = sample_cloud({"type": "gaussian", "mean": [0.0] * d, "std": 2.0}, n, int(rng.integers(2**32)))
        if p == 2.0 and rng.random() < 0.5:
            nu = make_discrete(rng.uniform(0.5, 2.0) * mu.points + rng.uniform(-3, 3, size=d), mu.weights)
        else:
            # equal atom counts and weights keep the optimal plan a map
            nu = sample_cloud({"type": "uniform-box", "low": [-3.0] * d, "high": [3.0] * d}, n, int(rng.integers(2**32)))
        entries.append((f"lam{k}", Fraction(int(rng.integers(1, 10)), int(rng.integers(1, 5))), mu, nu))
    return ParamFamily.build(entries, p=p)
