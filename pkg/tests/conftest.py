import numpy as np

from survmae import SurvivalDataset


def random_censored_dataset(rng, n=None, censor_count=None, t_scale=10.0):
    """A dataset with continuous times and an exact number of censored subjects."""
    if n is None:
        n = int(rng.integers(3, 51))
    times = rng.uniform(0.1, t_scale, n)
    if censor_count is None:
        censor_count = int(rng.integers(0, n))
    events = np.ones(n, dtype=bool)
    if censor_count:
        events[rng.choice(n, censor_count, replace=False)] = False
    return SurvivalDataset.from_arrays(times, events)
