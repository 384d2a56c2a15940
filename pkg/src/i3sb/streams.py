"""Seeded random streams.

Splitting rule used everywhere in the package: the stream for item ``i`` of a
run seeded with ``seed`` is ``default_rng(SeedSequence(seed, spawn_key=(i,)))``,
i.e. numpy's child-stream construction.  Child streams are independent of each
other and of the root stream ``default_rng(SeedSequence(seed))``, and do not
depend on how many items are processed or in what order.

(Entropy lists are deliberately avoided: ``SeedSequence([s, 0])`` produces the
same state as ``SeedSequence(s)``.)
"""

import numpy as np


def stream(seed: int, index: int | None = None) -> np.random.Generator:
    if index is None:
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))
