"""Seeded random streams with a documented per-iteration splitting rule.

Every stochastic component in the package draws from ``iteration_rng``.
The rule: a Philox counter-based generator is keyed by the 64-bit run
seed and advanced by ``t * 2**32`` for iteration ``t``.  One iteration
never consumes anywhere near 2**32 counter slots, so streams for
distinct ``t`` are non-overlapping, and the batch at iteration ``t`` is
a pure function of ``(seed, t)`` -- random access included.
"""

import numpy as np

_STRIDE = 2 ** 32


def iteration_rng(seed, t):
    """Generator for iteration ``t`` of the run identified by ``seed``."""
    if t < 0:
        raise ValueError(f"iteration index must be non-negative, got {t}")
    bitgen = np.random.Philox(key=np.uint64(seed))
    bitgen.advance(t * _STRIDE)
    return np.random.Generator(bitgen)


def trial_seed(seed, trial):
    """Derive an independent 64-bit seed for a numbered trial.

    Used by multi-seed experiments (lemma harness, escape trials) so a
    single top-level seed reproduces the whole sweep.
    """
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
               .generate_state(1, np.uint64)[0])
