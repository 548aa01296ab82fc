"""Landscape drift schedules and multi-stage chaining.

Non-stationary tests mutate the landscape on a fixed period: every
``period`` steps the optimum translates, the shape rescales, or the noise
magnitude rescales.  ``evolve`` is a pure function: it returns a new
``MultiTest`` and draws all randomness from the step's seed context, so a
drifting run is exactly reproducible.

Rescale factors are log-normal with median one; the log-std is calibrated
so that the expected relative change per event, E|factor - 1|, equals the
requested magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .stochastic import DOMAIN_EVOLVE, derive_stream

__all__ = [
    "NonstationarityKind",
    "NonstationaritySpec",
    "evolve",
    "lognormal_sigma_for_mean_abs_change",
]


class NonstationarityKind:
    NONE = "none"
    TRANSLATE = "translate-optimum"
    RESCALE_SHAPE = "rescale-shape"
    RESCALE_NOISE = "rescale-noise"

    ALL = (NONE, TRANSLATE, RESCALE_SHAPE, RESCALE_NOISE)


@dataclass(frozen=True)
class NonstationaritySpec:
    kind: str = NonstationarityKind.NONE
    period: int = 10
    magnitude: float = 0.1

    def __post_init__(self):
        if self.kind not in NonstationarityKind.ALL:
            raise ValueError(f"unknown non-stationarity kind {self.kind!r}")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.magnitude < 0.0:
            raise ValueError("magnitude must be >= 0")

    def to_dict(self):
        return {"kind": self.kind, "period": self.period, "magnitude": self.magnitude}

    @classmethod
    def from_dict(cls, doc):
        if doc is None:
            return cls()
        return cls(
            kind=doc.get("kind", NonstationarityKind.NONE),
            period=doc.get("period", 10),
            magnitude=doc.get("magnitude", 0.1),
        )


def lognormal_sigma_for_mean_abs_change(magnitude):
    """Log-std sigma such that E|exp(sigma Z) - 1| equals ``magnitude``.

    For Z standard normal, E|exp(sigma Z) - 1| = exp(sigma^2/2) * (2 Phi(sigma) - 1),
    which is solved for sigma by bisection.
    """
    if magnitude <= 0.0:
        return 0.0

    def mean_abs(sig):
        phi = 0.5 * (1.0 + math.erf(sig / math.sqrt(2.0)))
        return math.exp(0.5 * sig * sig) * (2.0 * phi - 1.0)

    lo, hi = 0.0, 1.0
    while mean_abs(hi) < magnitude:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"magnitude {magnitude} out of range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_abs(mid) < magnitude:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def is_change_step(spec, step_index):
    """True when the schedule fires: every ``period`` steps, skipping step 0."""
    if spec is None or spec.kind == NonstationarityKind.NONE:
        return False
    return step_index > 0 and step_index % spec.period == 0


def evolve(test, spec, step_index, ctx):
    """One tick of the drift schedule applied to a MultiTest.

    Off-schedule steps return ``test`` unchanged (same object).  On-schedule
    steps draw from the stream derived from ``ctx`` with an evolve-specific
    domain tag, never from the gradient-noise stream.
    """
    if not is_change_step(spec, step_index):
        return test
    stream = derive_stream(ctx, domain=DOMAIN_EVOLVE)
    d = test.dim
    if spec.kind == NonstationarityKind.TRANSLATE:
        shift = spec.magnitude * stream.standard_normal(d)
        base = test.translation if test.translation is not None else np.zeros(d)
        return test.with_translation(base + shift)
    if spec.kind == NonstationarityKind.RESCALE_SHAPE:
        sigma = lognormal_sigma_for_mean_abs_change(spec.magnitude)
        factors = np.exp(sigma * stream.standard_normal(d))
        comps = [
            replace(f, scale=f.scale * float(factors[i]))
            for i, f in enumerate(test.components)
        ]
        return test.with_components(comps)
    if spec.kind == NonstationarityKind.RESCALE_NOISE:
        sigma = lognormal_sigma_for_mean_abs_change(spec.magnitude)
        factor = math.exp(sigma * float(stream.standard_normal()))
        return test.with_noise(replace(test.noise, scale=test.noise.scale * factor))
    raise AssertionError(spec.kind)
