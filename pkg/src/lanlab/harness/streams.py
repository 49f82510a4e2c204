"""Counter-based random streams for reproducible parallel replications.

Every stream is a Philox4x64 generator. The 128-bit key comes from the
master seed through two rounds of the SplitMix64 finalizer; the replication
index and a purpose tag occupy the upper half of the 256-bit counter. Two
streams with different ``(index, purpose)`` therefore walk disjoint counter
blocks of length 2**128 under the same keyed bijection: they share no
subsequence by construction.
"""
import numpy as np

MASK64 = (1 << 64) - 1

# purpose tags keep e.g. rate-estimation paths apart from replication paths
PURPOSE_REPLICATION = 0
PURPOSE_RATE = 1
PURPOSE_MODEL = 2
PURPOSE_AUX = 3


def splitmix64(x):
    """SplitMix64 output function: a 64-bit bijective avalanche mixer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stream_key(master_seed):
    k0 = splitmix64(int(master_seed) & MASK64)
    return k0, splitmix64(k0)


def derive_stream(master_seed, index, purpose=PURPOSE_REPLICATION):
    """Independent generator for replication ``index`` under ``master_seed``."""
    if index < 0:
        raise ValueError("index must be >= 0")
    if not 0 <= index <= MASK64:
        raise ValueError("index must fit in 64 bits")
    key = np.array(stream_key(master_seed), dtype=np.uint64)
    counter = np.array([0, 0, int(index), int(purpose)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def derive_streams(master_seed, indices, purpose=PURPOSE_REPLICATION):
    return [derive_stream(master_seed, i, purpose) for i in indices]
