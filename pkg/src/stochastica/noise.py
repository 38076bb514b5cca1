"""Deterministic Gaussian noise addressed by position, not by sequence.

Every draw is a pure function of (seed, substream, context, step, path,
component).  A Philox counter generator is keyed per (seed, substream,
context, step); the flat index path*width + component addresses a fixed
position inside that keyed stream.  Because addressing is positional,
any partition of the paths over workers reproduces exactly the same
numbers, which is what makes simulation output independent of thread
count and chunk size.

Gaussians are produced by the inverse normal CDF applied to 53-bit
uniforms in the open interval (0, 1), so each draw depends only on its
own address.

The ``context`` integer separates streams that must not be correlated,
e.g. grids with different step counts in a refinement study.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import ndtri

# Substream tags. Consumers with independent sampling duties use
# different tags so their draws never collide.
EULER = 0          # path simulation (mc engine)
TERMINAL = 1       # exact terminal samplers
KERNEL = 2         # kernel-based samplers (path-integral route)

_U53 = 2.0 ** -53
_SHIFT = np.uint64(11)


def validate_seed(seed) -> int:
    """Check that seed is a 64-bit unsigned integer and return it as int."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError("seed must be an integer")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must satisfy 0 <= seed < 2**64")
    return seed


def _keyed_generator(seed: int, substream: int, context: int, step: int,
                     block: int) -> Philox:
    key = SeedSequence(entropy=seed,
                       spawn_key=(substream, context, step)).generate_state(2, dtype=np.uint64)
    # Philox counters advance one 4-draw block per increment.
    return Philox(counter=[block, 0, 0, 0], key=key)


def uniform_block(seed: int, substream: int, context: int, step: int,
                  lo: int, hi: int, width: int) -> np.ndarray:
    """Uniforms in (0,1) for paths [lo, hi), each of `width` components.

    Element [p - lo, k] is the draw addressed by flat index p*width + k
    of the stream keyed by (seed, substream, context, step).
    """
    if not 0 <= lo <= hi:
        raise ValueError("need 0 <= lo <= hi")
    if width < 1:
        raise ValueError("width must be >= 1")
    a = lo * width
    b = hi * width
    if a == b:
        return np.empty((0, width))
    block = a // 4
    gen = _keyed_generator(seed, substream, context, step, block)
    raw = gen.random_raw(b - 4 * block)[a - 4 * block:]
    u = ((raw >> _SHIFT) + 0.5) * _U53
    return u.reshape(hi - lo, width)


def normal_block(seed: int, substream: int, context: int, step: int,
                 lo: int, hi: int, width: int) -> np.ndarray:
    """Standard normal draws for paths [lo, hi); see uniform_block."""
    return ndtri(uniform_block(seed, substream, context, step, lo, hi, width))


def chunk_ranges(n: int, n_chunks: int) -> list[tuple[int, int]]:
    """Split range(n) into at most n_chunks contiguous, near-equal spans."""
    n_chunks = max(1, min(n_chunks, n))
    edges = np.linspace(0, n, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
