"""Seeded counter-based random streams.

Every consumer asks for ``stream(seed, offset)``; streams with distinct
offsets are independent Philox keys, so results do not depend on the order
in which tasks draw.
"""

import numpy as np

# fixed offsets so that different tasks never share a stream
OFFSET_PHANTOM = 1 << 20
OFFSET_ADJOINT_TEST = 2 << 20
OFFSET_NOISE = 3 << 20
OFFSET_SYMBOL = 4 << 20
OFFSET_ELLIPTICITY = 5 << 20


def stream(seed: int, offset: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(offset) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
