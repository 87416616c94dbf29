"""Counter-based random streams.

Every draw is addressed by (seed, block, stream, step). A block is a fixed
slice of BLOCK_SIZE consecutive trajectories, so the numbers a trajectory
sees do not depend on how blocks are scheduled across threads.
"""

import numpy as np

BLOCK_SIZE = 8192

STREAM_INIT = 1
STREAM_NOISE = 2
STREAM_FORWARD = 3

_MASK64 = (1 << 64) - 1


def generator(seed, block, stream, step):
    key = [int(seed) & _MASK64, ((int(block) << 8) | int(stream)) & _MASK64]
    # counter word 0 advances while drawing; steps live in word 2
    bitgen = np.random.Philox(key=np.array(key, dtype=np.uint64),
                              counter=np.array([0, 0, int(step), 0], dtype=np.uint64))
    return np.random.Generator(bitgen)


def normal(seed, block, stream, step, shape):
    return generator(seed, block, stream, step).standard_normal(shape)


def block_slices(n):
    return [slice(i, min(i + BLOCK_SIZE, n)) for i in range(0, n, BLOCK_SIZE)]
