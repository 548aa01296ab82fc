"""Gradient noise models and reproducible random streams.

Every random draw in a benchmark run is a pure function of a
``SeedContext``: suite seed, unit test, repeat, step and dimension index.
There is deliberately no algorithm identity in the context, so two
optimizers that visit the same point at the same step of the same repeat
see exactly the same perturbed gradient.

Streams are counter based (Philox keyed by a hash of the context), which
makes parallel execution bitwise reproducible regardless of scheduling.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseKind",
    "NoiseSpec",
    "SeedContext",
    "derive_stream",
    "sample_gradient",
    "StreamFactory",
]


class NoiseKind:
    NONE = "none"
    ADDITIVE_GAUSS = "additive-gauss"
    MULTIPLICATIVE_GAUSS = "multiplicative-gauss"
    ADDITIVE_CAUCHY = "additive-cauchy"
    MASK_OUT = "mask-out"

    ALL = (NONE, ADDITIVE_GAUSS, MULTIPLICATIVE_GAUSS, ADDITIVE_CAUCHY, MASK_OUT)


@dataclass(frozen=True)
class NoiseSpec:
    """How the true gradient is corrupted before the optimizer sees it.

    ``scale`` is the noise magnitude (standard deviation of the additive
    Gaussian, log-std of the multiplicative one, Cauchy scale).  ``drop_prob``
    is the per-dimension zeroing probability of the mask-out model.
    """

    kind: str = NoiseKind.NONE
    scale: float = 0.0
    drop_prob: float = 0.0

    def __post_init__(self):
        if self.kind not in NoiseKind.ALL:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0.0 or not math.isfinite(self.scale):
            raise ValueError(f"noise scale must be finite and >= 0, got {self.scale!r}")
        if not (0.0 <= self.drop_prob <= 1.0):
            raise ValueError(f"drop_prob must lie in [0, 1], got {self.drop_prob!r}")

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "drop_prob": self.drop_prob}

    @classmethod
    def from_dict(cls, doc):
        return cls(
            kind=doc.get("kind", NoiseKind.NONE),
            scale=doc.get("scale", 0.0),
            drop_prob=doc.get("drop_prob", 0.0),
        )


@dataclass(frozen=True)
class SeedContext:
    """Coordinates of one random draw.  No algorithm identity on purpose."""

    suite_seed: int
    test_id: int
    repeat_index: int
    step_index: int
    dim_index: int = 0


# Extra tag mixed into the key so that unrelated consumers (gradient noise,
# landscape drift, environment sampling) never share a stream.
DOMAIN_NOISE = 0
DOMAIN_EVOLVE = 1
DOMAIN_ENV = 2
DOMAIN_GENERATOR = 3

_MASK = (1 << 64) - 1


def _context_key(ctx, domain):
    packed = struct.pack(
        "<6Q",
        ctx.suite_seed & _MASK,
        ctx.test_id & _MASK,
        ctx.repeat_index & _MASK,
        ctx.step_index & _MASK,
        ctx.dim_index & _MASK,
        domain & _MASK,
    )
    return hashlib.blake2b(packed, digest_size=16).digest()


def derive_stream(ctx, domain=DOMAIN_NOISE):
    """A fresh Generator for this context; same context, same stream."""
    key = int.from_bytes(_context_key(ctx, domain), "little")
    return np.random.Generator(np.random.Philox(key=key))


class StreamFactory:
    """Re-keys one Philox generator per context instead of rebuilding it.

    Produces draws bit-identical to ``derive_stream(ctx).standard_normal()``
    and friends, at a fraction of the construction cost.  Not thread safe;
    use one factory per worker.
    """

    def __init__(self):
        self._bg = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def stream(self, ctx, domain=DOMAIN_NOISE):
        st = self._state
        st["state"]["key"] = np.frombuffer(
            _context_key(ctx, domain), dtype=np.uint64
        ).copy()
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen


def sample_gradient(true_grad, spec, ctx, factory=None):
    """Corrupt a gradient according to ``spec``.

    ``true_grad`` may be a float or a 1-d array; the return type matches.
    Each dimension draws from its own stream (``dim_index`` enters the seed),
    so masking and noise are independent across dimensions.
    """
    if spec.kind == NoiseKind.NONE:
        return true_grad

    scalar = np.isscalar(true_grad)
    g = np.atleast_1d(np.asarray(true_grad, dtype=float))
    out = np.empty_like(g)
    make = factory.stream if factory is not None else derive_stream
    for i in range(g.shape[0]):
        # a scalar is "the dimension the caller says"; a vector entry is
        # the dimension it sits at
        dim = ctx.dim_index if scalar else i
        sub = (
            ctx
            if dim == ctx.dim_index
            else SeedContext(
                ctx.suite_seed, ctx.test_id, ctx.repeat_index, ctx.step_index, dim
            )
        )
        stream = make(sub)
        if spec.kind == NoiseKind.ADDITIVE_GAUSS:
            out[i] = g[i] + spec.scale * stream.standard_normal()
        elif spec.kind == NoiseKind.MULTIPLICATIVE_GAUSS:
            # sign preserving, median one
            out[i] = g[i] * math.exp(spec.scale * stream.standard_normal())
        elif spec.kind == NoiseKind.ADDITIVE_CAUCHY:
            out[i] = g[i] + spec.scale * stream.standard_cauchy()
        elif spec.kind == NoiseKind.MASK_OUT:
            out[i] = g[i] if stream.random() >= spec.drop_prob else 0.0
        else:
            raise AssertionError(spec.kind)
    if scalar:
        return float(out[0])
    return out
