"""
Seed derivation for reproducible generation. Every random draw in amodalforge comes from a numpy Generator seeded by one of these functions, so results depend only on the global seed and the position of the item being generated, never on thread scheduling.
"""
import numpy as np

_MASK64 = (1 << 64) - 1


def mix_seed(*keys):
    """
    Mix a sequence of integers into a single 64-bit seed.

    The mixing function is the first 64-bit word of numpy's SeedSequence built from the keys (each reduced modulo 2**64). This is fixed: changing it changes every generated dataset.

    Parameters
    ----------
    keys : int
        Integers to mix, for example (globalSeed, sceneIndex, attempt).

    Returns
    -------
    seed : int
        A seed in [0, 2**64).
    """
    entropy = [int(k) & _MASK64 for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def scene_seed(globalSeed, index, attempt=0):
    """
    Seed of scene number index in a batch. Attempt 0 is the first try, retries of a rejected scene use attempt 1, 2, ...
    """
    return mix_seed(globalSeed, index, attempt)


def make_rng(seed):
    """
    Returns a numpy Generator for the seed.
    """
    return np.random.default_rng(int(seed) & _MASK64)
