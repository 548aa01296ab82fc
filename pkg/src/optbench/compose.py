"""Multi-dimensional test functions composed from 1-d landscapes.

A ``MultiTest`` applies a rotation to the parameters, evaluates one
prototype per rotated coordinate, and combines the component losses with a
p-norm:

    L(theta) = (sum_i L_i(phi_i)^p)^(1/p),   phi = R (theta - t)

With ``p = 1`` this is the plain sum of the components.  The query field is
the exact gradient of that loss, optionally post-multiplied by a rotation
matrix ("curl") that makes the field non-conservative while preserving its
zero set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .stochastic import NoiseSpec

__all__ = [
    "MultiTest",
    "random_rotation",
    "curl_matrix",
    "EPS_GUARD",
]

# Below this composite magnitude the p-norm chain rule is singular; the
# field is defined as exactly zero there.
EPS_GUARD = 1e-30


@dataclass(frozen=True)
class MultiTest:
    """A d-dimensional test function.

    ``components`` is one PrototypeFunction per dimension.  ``rotation``
    and ``curl`` are optional (d, d) arrays; ``None`` means identity and is
    skipped arithmetically, so a 1-d MultiTest evaluates its component
    bit-for-bit.  ``translation`` shifts the whole landscape in parameter
    space (used by the non-stationarity schedules).
    """

    components: tuple
    p: float = 2.0
    rotation: np.ndarray | None = None
    curl: np.ndarray | None = None
    noise: NoiseSpec = NoiseSpec()
    translation: np.ndarray | None = None

    def __post_init__(self):
        if not self.components:
            raise ValueError("MultiTest needs at least one component")
        if not (self.p >= 1.0):
            raise ValueError(f"p must be >= 1, got {self.p!r}")
        d = len(self.components)
        for name in ("rotation", "curl"):
            m = getattr(self, name)
            if m is not None and m.shape != (d, d):
                raise ValueError(f"{name} must be ({d}, {d}), got {m.shape}")
        for f in self.components:
            if f.min_value != 0.0:
                raise ValueError("components must have min_value == 0")

    @property
    def dim(self):
        return len(self.components)

    # -- geometry ----------------------------------------------------------

    def _phi(self, theta):
        x = theta
        if self.translation is not None:
            x = x - self.translation
        if self.rotation is not None:
            x = self.rotation @ x
        return x

    def default_start(self):
        """Start point: per-component default starts, pulled back through
        the rotation."""
        phi0 = np.array([f.default_start() for f in self.components])
        if self.rotation is not None:
            phi0 = self.rotation.T @ phi0
        if self.translation is not None:
            phi0 = phi0 + self.translation
        return phi0

    def minimum(self):
        """A point where every component attains its minimum."""
        phi = np.array([f.min_location for f in self.components])
        if self.rotation is not None:
            phi = self.rotation.T @ phi
        if self.translation is not None:
            phi = phi + self.translation
        return phi

    # -- evaluation ----------------------------------------------------------

    def loss(self, theta):
        theta = np.asarray(theta, dtype=float)
        phi = self._phi(theta)
        vals = [f.value(phi[i]) for i, f in enumerate(self.components)]
        if len(vals) == 1:
            return vals[0]
        if self.p == 1.0:
            return math.fsum(vals)
        s = 0.0
        for v in vals:
            s += abs(v) ** self.p
        return s ** (1.0 / self.p)

    def field(self, theta):
        """Gradient of ``loss`` (with the curl rotation applied last)."""
        theta = np.asarray(theta, dtype=float)
        phi = self._phi(theta)
        comps = self.components
        d = len(comps)
        grad_phi = np.empty(d)
        if d == 1:
            grad_phi[0] = comps[0].true_gradient(phi[0])
        elif self.p == 1.0:
            for i, f in enumerate(comps):
                grad_phi[i] = f.true_gradient(phi[i])
        else:
            vals = np.empty(d)
            slopes = np.empty(d)
            for i, f in enumerate(comps):
                vals[i] = f.value(phi[i])
                slopes[i] = f.true_gradient(phi[i])
            p = self.p
            s = float(np.sum(np.abs(vals) ** p))
            if s <= 0.0 or s ** (1.0 / p) < EPS_GUARD:
                return np.zeros(d)
            outer = s ** ((1.0 - p) / p)
            grad_phi = (np.abs(vals) ** (p - 1.0)) * np.sign(vals) * slopes * outer
        grad = grad_phi if self.rotation is None else self.rotation.T @ grad_phi
        if self.curl is not None:
            grad = self.curl @ grad
        return grad

    # -- derived variants ----------------------------------------------------

    def with_translation(self, t):
        return replace(self, translation=np.asarray(t, dtype=float))

    def with_components(self, components):
        return replace(self, components=tuple(components))

    def with_noise(self, noise):
        return replace(self, noise=noise)


def random_rotation(d, stream):
    """Haar-distributed special-orthogonal (d, d) matrix.

    QR of a Gaussian matrix with the R diagonal sign fix; the determinant is
    then forced to +1 by flipping one column if needed.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    a = stream.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def curl_matrix(d, angle):
    """Block-diagonal rotation by ``angle`` in successive coordinate pairs.

    In 2-d this is [[cos a, sin a], [-sin a, cos a]]; for odd ``d`` the last
    coordinate is left alone.  ``angle = 0`` gives the identity.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    m = np.eye(d)
    c, s = math.cos(angle), math.sin(angle)
    for i in range(0, d - 1, 2):
        m[i, i] = c
        m[i, i + 1] = s
        m[i + 1, i] = -s
        m[i + 1, i + 1] = c
    return m
