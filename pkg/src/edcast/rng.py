"""Seeded random-number streams with a fixed, documented contract.

Every stochastic component draws from a Philox4x64-10 counter-based generator
(numpy's ``np.random.Philox``) keyed as::

    key = [seed, (domain << 32) | index]

where ``seed`` is the user-facing run seed, ``domain`` is a small integer
naming the consumer (see DOMAIN_* constants), and ``index`` separates units
within a domain (tree number, day number, ...). Units are therefore
independent streams: they can be generated in any order, serially or in
parallel, with identical results. The generator name and key scheme are
recorded in model files so results are reproducible by any implementation
of the same generator.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox4x64-10"
KEY_SCHEME = "key=[seed, (domain<<32)|index]"

DOMAIN_FOREST = 1
DOMAIN_SYNTH_DAY = 2
DOMAIN_SYNTH_WEATHER = 3
DOMAIN_SYNTH_CALENDAR = 4
DOMAIN_TEST = 7

_MASK64 = (1 << 64) - 1


def substream(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, domain, index) unit."""
    key = [int(seed) & _MASK64, ((int(domain) << 32) | int(index)) & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))


def describe(seed: int) -> dict:
    """Provenance stanza stored in model files and manifests."""
    return {"name": GENERATOR_NAME, "key_scheme": KEY_SCHEME, "seed": int(seed)}
