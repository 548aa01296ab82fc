"""Piecewise one-dimensional loss landscapes.

A landscape is a concatenation of shape segments (bowls, kinks, cliffs,
exponential walls, ...) joined left to right.  Each segment kind knows its
value and slope on a local coordinate ``u in [0, width]`` given the boundary
conditions inherited from its left neighbour, so continuity is obtained by
construction: the right-end value and slope of segment ``i`` become the left
boundary conditions of segment ``i + 1``.

A ``cliff`` is a zero-width junction modifier: it multiplies the slope handed
to the next segment by exactly ``CLIFF_SLOPE_FACTOR``.  The kinds ``abs``,
``rect-bend`` and ``laplace-bowl`` carry a non-differentiable point in the
middle of their segment; everything else is C1.  At non-differentiable points
the right-hand derivative is reported.

The assembled function is shifted so that its infimum over the domain is
exactly zero, and multiplied by a single ``scale`` factor.  Outside the
domain the function continues linearly with the boundary slope.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

__all__ = [
    "ShapeKind",
    "ShapeSegment",
    "PrototypeFunction",
    "BuildError",
    "build_prototype",
    "prototype_from_dict",
    "catalog_names",
    "catalog_prototype",
    "catalog_entry",
    "is_smooth_prototype",
    "CLIFF_SLOPE_FACTOR",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1

# Exact slope multiplier applied at a cliff junction.
CLIFF_SLOPE_FACTOR = 10.0

DEFAULT_WIDTH = 1.0

# Fraction of the first segment's width used for the default start point.
START_FRACTION = 0.1


class ShapeKind:
    """Tags for the supported segment shapes."""

    LINE = "line"
    QUAD = "quad"
    ABS = "abs"
    RECT_BEND = "rect-bend"
    EXP_UP = "exp-up"
    EXP_DOWN = "exp-down"
    GAUSS_BOWL = "gauss-bowl"
    LAPLACE_BOWL = "laplace-bowl"
    CONVEX_CURVE = "convex-curve"
    CONCAVE_CURVE = "concave-curve"
    CLIFF = "cliff-marker"

    ALL = (
        LINE,
        QUAD,
        ABS,
        RECT_BEND,
        EXP_UP,
        EXP_DOWN,
        GAUSS_BOWL,
        LAPLACE_BOWL,
        CONVEX_CURVE,
        CONCAVE_CURVE,
        CLIFF,
    )

    # Kinds whose value function has a point without a two-sided derivative.
    # ``abs`` and ``rect-bend`` break at mid segment by definition; the
    # Laplace bowl has the kink of exp(-|u|) at its vertex.
    KINKED = (ABS, RECT_BEND, LAPLACE_BOWL)

    # Kinds that must enter with a nonzero slope, otherwise their defining
    # feature degenerates to a flat line.
    NEEDS_SLOPE = (EXP_UP, EXP_DOWN, GAUSS_BOWL, LAPLACE_BOWL)


class BuildError(ValueError):
    """Raised when a segment sequence cannot be assembled."""


@dataclass(frozen=True)
class ShapeSegment:
    """One shape piece, fully determined by its left boundary conditions.

    ``left_value`` and ``left_slope`` are the value and slope at the left
    edge (local ``u = 0``) at unit scale.  ``shape_param`` is the one free
    parameter of the kind (curvature, growth rate, bowl width, post-bend
    slope, power), unused by ``line`` and ``abs``.
    """

    kind: str
    width: float
    left_value: float
    left_slope: float
    shape_param: float | None = None

    def __post_init__(self):
        if self.kind not in ShapeKind.ALL or self.kind == ShapeKind.CLIFF:
            raise BuildError(f"not a segment kind: {self.kind!r}")
        if not (self.width > 0.0) or not math.isfinite(self.width):
            raise BuildError(f"segment width must be positive, got {self.width!r}")

    # -- local evaluation -------------------------------------------------

    def value(self, u):
        """Unit-scale value at local coordinate ``u`` (no clamping)."""
        k, v0, s0, a = self.kind, self.left_value, self.left_slope, self.shape_param
        if k == ShapeKind.LINE:
            return v0 + s0 * u
        if k == ShapeKind.QUAD:
            return v0 + s0 * u + 0.5 * a * u * u
        if k == ShapeKind.ABS:
            m = 0.5 * self.width
            if u < m:
                return v0 + s0 * u
            return v0 + s0 * m - s0 * (u - m)
        if k == ShapeKind.RECT_BEND:
            m = 0.5 * self.width
            if u < m:
                return v0 + s0 * u
            return v0 + s0 * m + a * (u - m)
        if k == ShapeKind.EXP_UP:
            return v0 + (s0 / a) * (math.exp(a * u) - 1.0)
        if k == ShapeKind.EXP_DOWN:
            return v0 + (s0 / a) * (1.0 - math.exp(-a * u))
        if k == ShapeKind.GAUSS_BOWL:
            amp, base, c, sig = self._gauss_constants()
            z = (u - c) / sig
            return base - amp * math.exp(-0.5 * z * z)
        if k == ShapeKind.LAPLACE_BOWL:
            amp, base, c, b = self._laplace_constants()
            return base - amp * math.exp(-abs(u - c) / b)
        if k == ShapeKind.CONVEX_CURVE:
            return v0 + s0 * u + _powu(u, a)
        if k == ShapeKind.CONCAVE_CURVE:
            return v0 + s0 * u - _powu(u, a)
        raise AssertionError(k)

    def slope(self, u):
        """Unit-scale right-hand derivative at local coordinate ``u``."""
        k, s0, a = self.kind, self.left_slope, self.shape_param
        if k == ShapeKind.LINE:
            return s0
        if k == ShapeKind.QUAD:
            return s0 + a * u
        if k == ShapeKind.ABS:
            return s0 if u < 0.5 * self.width else -s0
        if k == ShapeKind.RECT_BEND:
            return s0 if u < 0.5 * self.width else a
        if k == ShapeKind.EXP_UP:
            return s0 * math.exp(a * u)
        if k == ShapeKind.EXP_DOWN:
            return s0 * math.exp(-a * u)
        if k == ShapeKind.GAUSS_BOWL:
            amp, _, c, sig = self._gauss_constants()
            z = (u - c) / sig
            return amp * (u - c) / (sig * sig) * math.exp(-0.5 * z * z)
        if k == ShapeKind.LAPLACE_BOWL:
            amp, _, c, b = self._laplace_constants()
            s = 1.0 if u >= c else -1.0  # right-hand derivative at the vertex
            return (amp / b) * s * math.exp(-abs(u - c) / b)
        if k == ShapeKind.CONVEX_CURVE:
            return s0 + a * _powu(u, a - 1.0)
        if k == ShapeKind.CONCAVE_CURVE:
            return s0 - a * _powu(u, a - 1.0)
        raise AssertionError(k)

    def value_above(self, u, um):
        """``value(u) - value(um)`` in a cancellation-free form, or None.

        Used by the assembled landscape for the segment hosting the global
        minimum: subtracting two nearly equal doubles absorbs residuals
        below ~1e-17, which would make distinct near-optimal iterates score
        identical losses.  Kinds without a stable closed form return None
        and the caller falls back to plain subtraction (their residuals
        grow linearly, so absorption is harmless there).
        """
        k, s0, a = self.kind, self.left_slope, self.shape_param
        if k == ShapeKind.QUAD:
            # v(u) - v(um) = d * (s0 + a*um + a*d/2) with d = u - um, exact
            # algebra; grouped so the near-zero slope at the vertex is a
            # constant and the d/2 term is not rounded away against um.
            d = u - um
            return d * ((s0 + a * um) + 0.5 * a * d)
        if k == ShapeKind.LINE:
            return s0 * (u - um)
        if k == ShapeKind.GAUSS_BOWL:
            amp, _, c, sig = self._gauss_constants()
            if um == c and amp > 0.0:
                z = (u - c) / sig
                return -amp * math.expm1(-0.5 * z * z)
        if k == ShapeKind.LAPLACE_BOWL:
            amp, _, c, b = self._laplace_constants()
            if um == c and amp > 0.0:
                return -amp * math.expm1(-abs(u - c) / b)
        if k == ShapeKind.ABS:
            m = 0.5 * self.width
            if um == m:
                return s0 * (u - m) if u < m else -s0 * (u - m)
        return None

    def right_value(self):
        return self.value(self.width)

    def right_slope(self):
        return self.slope(self.width)

    def minimum(self):
        """(local u, value) of the segment minimum on [0, width]."""
        k, v0, s0, a, w = (
            self.kind,
            self.left_value,
            self.left_slope,
            self.shape_param,
            self.width,
        )
        candidates = [0.0, w]
        if k == ShapeKind.QUAD:
            if a != 0.0:
                u = -s0 / a
                if 0.0 < u < w:
                    candidates.append(u)
        elif k in (ShapeKind.ABS, ShapeKind.RECT_BEND):
            candidates.append(0.5 * w)
        elif k == ShapeKind.GAUSS_BOWL:
            amp = self._gauss_constants()[0]
            if amp > 0.0:
                candidates.append(0.5 * w)
        elif k == ShapeKind.LAPLACE_BOWL:
            amp = self._laplace_constants()[0]
            if amp > 0.0:
                candidates.append(0.5 * w)
        elif k == ShapeKind.CONVEX_CURVE:
            if s0 < 0.0:
                u = (-s0 / a) ** (1.0 / (a - 1.0))
                if 0.0 < u < w:
                    candidates.append(u)
        # line, exp-up, exp-down and concave-curve attain their minimum at
        # an endpoint (monotone slope sign, or concave hence interior max).
        best_u = min(candidates, key=self.value)
        return best_u, self.value(best_u)

    # -- solved constants -------------------------------------------------

    def _gauss_constants(self):
        """Amplitude, baseline, center and width of K - A*exp(-(u-c)^2/2s^2)."""
        sig = self.shape_param
        c = 0.5 * self.width
        amp = -self.left_slope * sig * sig * math.exp(0.5 * (c / sig) ** 2) / c
        base = self.left_value + amp * math.exp(-0.5 * (c / sig) ** 2)
        return amp, base, c, sig

    def _laplace_constants(self):
        """Amplitude, baseline, center and decay of K - A*exp(-|u-c|/b)."""
        b = self.shape_param
        c = 0.5 * self.width
        amp = -self.left_slope * b * math.exp(c / b)
        base = self.left_value + amp * math.exp(-c / b)
        return amp, base, c, b


def _powu(u, a):
    # u ** a for u >= 0, tolerating u == 0 with fractional a.
    if u <= 0.0:
        return 0.0
    return u ** a


@dataclass(frozen=True)
class PrototypeFunction:
    """An assembled piecewise landscape.

    Values are ``scale * (raw(u) - raw_min)`` where ``raw`` is the unit-scale
    assembly, so ``min_value`` is exactly zero and the function scales
    linearly in ``scale``.
    """

    kinds: tuple
    shape_params: tuple
    scale: float
    domain_start: float
    segments: tuple = field(repr=False)
    cliff_junctions: tuple = field(repr=False)
    _bounds: tuple = field(repr=False)
    _raw_min: float = field(repr=False)
    _min_segment: int = field(repr=False, default=0)
    _min_local: float = field(repr=False, default=0.0)
    min_location: float = 0.0
    min_value: float = 0.0

    # -- evaluation --------------------------------------------------------

    @property
    def domain_end(self):
        return self.domain_start + self._bounds[-1]

    def value(self, theta):
        """Loss value at ``theta`` (scalar).  Non-negative inside the domain;
        continued linearly with the boundary slope outside of it."""
        u = theta - self.domain_start
        bounds = self._bounds
        if 0.0 <= u < bounds[-1]:
            i = bisect_right(bounds, u) - 1
            if i >= len(self.segments):
                i = len(self.segments) - 1
            if i == self._min_segment:
                above = self.segments[i].value_above(u - bounds[i], self._min_local)
                if above is not None:
                    return self.scale * above
            return self.scale * (self.segments[i].value(u - bounds[i]) - self._raw_min)
        return self.scale * (self._raw_value(u) - self._raw_min)

    def true_gradient(self, theta):
        """Exact derivative at ``theta`` (right-hand derivative at kinks)."""
        return self.scale * self._raw_slope(theta - self.domain_start)

    def _raw_value(self, u):
        bounds = self._bounds
        if u < 0.0:
            seg = self.segments[0]
            return seg.left_value + seg.left_slope * u
        total = bounds[-1]
        if u >= total:
            seg = self.segments[-1]
            return seg.right_value() + seg.right_slope() * (u - total)
        i = bisect_right(bounds, u) - 1
        if i >= len(self.segments):
            i = len(self.segments) - 1
        return self.segments[i].value(u - bounds[i])

    def _raw_slope(self, u):
        bounds = self._bounds
        if u < 0.0:
            return self.segments[0].left_slope
        total = bounds[-1]
        if u >= total:
            return self.segments[-1].right_slope()
        i = bisect_right(bounds, u) - 1
        if i >= len(self.segments):
            i = len(self.segments) - 1
        return self.segments[i].slope(u - bounds[i])

    def default_start(self):
        """Standard initial point: 10% of the first segment into the domain."""
        return self.domain_start + START_FRACTION * self.segments[0].width

    def segment_start(self, i):
        """Absolute position of the left edge of segment ``i``."""
        return self.domain_start + self._bounds[i]

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "kinds": list(self.kinds),
            "shape_params": list(self.shape_params),
            "scale": self.scale,
            "domain_start": self.domain_start,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def build_prototype(kinds, shape_params=None, scale=1.0, domain_start=0.0):
    """Assemble a prototype from a kind sequence.

    ``shape_params`` is an optional list aligned with ``kinds``; ``None``
    entries pick the per-kind default.  The first segment's boundary
    conditions come from a fixed per-kind table; later segments inherit the
    right-end value and slope of their predecessor, with cliff markers
    multiplying the inherited slope by ``CLIFF_SLOPE_FACTOR``.
    """
    kinds = list(kinds)
    if not kinds:
        raise BuildError("empty kind sequence")
    for k in kinds:
        if k not in ShapeKind.ALL:
            raise BuildError(f"unknown shape kind {k!r}")
    if shape_params is None:
        shape_params = [None] * len(kinds)
    shape_params = list(shape_params)
    if len(shape_params) != len(kinds):
        raise BuildError(
            f"got {len(shape_params)} shape params for {len(kinds)} kinds"
        )
    if not (isinstance(scale, (int, float)) and math.isfinite(scale) and scale > 0.0):
        raise BuildError(f"scale must be a positive number, got {scale!r}")
    if kinds[0] == ShapeKind.CLIFF or kinds[-1] == ShapeKind.CLIFF:
        raise BuildError("cliff-marker cannot open or close a sequence")
    for i in range(len(kinds) - 1):
        if kinds[i] == ShapeKind.CLIFF and kinds[i + 1] == ShapeKind.CLIFF:
            raise BuildError(f"consecutive cliff-markers at position {i}")

    params = [
        _default_shape_param(k) if p is None else float(p)
        for k, p in zip(kinds, shape_params)
    ]
    for i, (k, p) in enumerate(zip(kinds, params)):
        _check_shape_param(i, k, p)

    segments = []
    cliffs = []
    value = slope = None
    pending_cliff = False
    for i, (k, p) in enumerate(zip(kinds, params)):
        if k == ShapeKind.CLIFF:
            pending_cliff = True
            continue
        if value is None:
            value, slope = _initial_conditions(k, p)
        elif pending_cliff:
            if slope == 0.0:
                raise BuildError(
                    f"junction {len(segments)}: cliff-marker on a zero slope"
                )
            slope = slope * CLIFF_SLOPE_FACTOR
            cliffs.append(len(segments))
        if k in ShapeKind.NEEDS_SLOPE and slope == 0.0:
            raise BuildError(
                f"junction {len(segments)}: kind {k!r} requires a nonzero "
                "incoming slope"
            )
        seg = ShapeSegment(
            kind=k,
            width=DEFAULT_WIDTH,
            left_value=value,
            left_slope=slope,
            shape_param=p if _uses_shape_param(k) else None,
        )
        segments.append(seg)
        value, slope = seg.right_value(), seg.right_slope()
        pending_cliff = False

    bounds = [0.0]
    for seg in segments:
        bounds.append(bounds[-1] + seg.width)

    raw_min = math.inf
    min_u = 0.0
    min_seg = 0
    min_local = 0.0
    for i, (seg, left) in enumerate(zip(segments, bounds)):
        u, v = seg.minimum()
        if v < raw_min:
            raw_min = v
            min_u = left + u
            min_seg = i
            min_local = u

    nz = tuple(None if not _uses_shape_param(k) else p for k, p in zip(kinds, params))
    return PrototypeFunction(
        kinds=tuple(kinds),
        shape_params=nz,
        scale=float(scale),
        domain_start=float(domain_start),
        segments=tuple(segments),
        cliff_junctions=tuple(cliffs),
        _bounds=tuple(bounds),
        _raw_min=raw_min,
        _min_segment=min_seg,
        _min_local=min_local,
        min_location=float(domain_start) + min_u,
        min_value=0.0,
    )


def prototype_from_dict(doc):
    """Rebuild a prototype from its serialized form."""
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise BuildError(f"unsupported prototype format_version {version!r}")
    return build_prototype(
        doc["kinds"],
        doc.get("shape_params"),
        scale=doc.get("scale", 1.0),
        domain_start=doc.get("domain_start", 0.0),
    )


# -- first-segment boundary conditions and defaults -------------------------

# (left_value, left_slope) when the kind opens a sequence, at unit scale.
# The quad entry depends on its curvature so that a lone quad is a symmetric
# bowl with an interior minimum.
_INITIAL = {
    ShapeKind.LINE: (1.0, -1.0),
    ShapeKind.ABS: (0.5, -1.0),
    ShapeKind.RECT_BEND: (0.5, -1.0),
    ShapeKind.EXP_UP: (1.0, -1.0),
    ShapeKind.EXP_DOWN: (1.0, -1.0),
    ShapeKind.GAUSS_BOWL: (0.0, -1.0),
    ShapeKind.LAPLACE_BOWL: (0.0, -1.0),
    ShapeKind.CONVEX_CURVE: (0.0, -1.0),
    ShapeKind.CONCAVE_CURVE: (1.0, -0.2),
}

_DEFAULT_PARAM = {
    ShapeKind.LINE: None,
    ShapeKind.QUAD: 1.0,
    ShapeKind.ABS: None,
    ShapeKind.RECT_BEND: 0.0,
    ShapeKind.EXP_UP: 2.0,
    ShapeKind.EXP_DOWN: 3.0,
    ShapeKind.GAUSS_BOWL: 0.2,
    ShapeKind.LAPLACE_BOWL: 0.2,
    ShapeKind.CONVEX_CURVE: 3.0,
    ShapeKind.CONCAVE_CURVE: 3.0,
    ShapeKind.CLIFF: None,
}


def _initial_conditions(kind, param):
    if kind == ShapeKind.QUAD:
        # enter descending toward an interior minimum at mid segment
        return 0.0, -0.5 * param * DEFAULT_WIDTH
    return _INITIAL[kind]


def _default_shape_param(kind):
    return _DEFAULT_PARAM[kind]


def _uses_shape_param(kind):
    return _DEFAULT_PARAM[kind] is not None


def _check_shape_param(i, kind, param):
    if not _uses_shape_param(kind):
        return
    if not math.isfinite(param):
        raise BuildError(f"segment {i}: non-finite shape param")
    if kind in (
        ShapeKind.EXP_UP,
        ShapeKind.EXP_DOWN,
        ShapeKind.GAUSS_BOWL,
        ShapeKind.LAPLACE_BOWL,
    ):
        if param <= 0.0:
            raise BuildError(f"segment {i}: kind {kind!r} needs a positive param")
    elif kind in (ShapeKind.CONVEX_CURVE, ShapeKind.CONCAVE_CURVE):
        if param <= 1.0:
            raise BuildError(f"segment {i}: curve exponent must exceed 1")


# -- catalog ----------------------------------------------------------------

# Named landscapes used by the default suite.  Each entry is
# (kinds, shape_params); widths are DEFAULT_WIDTH and boundary conditions
# come from the table above.
_K = ShapeKind
_CATALOG = {
    "line": ([_K.LINE], [None]),
    "quad": ([_K.QUAD], [1.0]),
    "abs": ([_K.ABS], [None]),
    "rect": ([_K.RECT_BEND], [0.0]),
    "gauss-bowl": ([_K.GAUSS_BOWL], [0.2]),
    "laplace-bowl": ([_K.LAPLACE_BOWL], [0.2]),
    "convex": ([_K.CONVEX_CURVE], [3.0]),
    "concave": ([_K.CONCAVE_CURVE], [3.0]),
    "exp-up": ([_K.EXP_UP], [2.0]),
    "exp-down": ([_K.EXP_DOWN], [3.0]),
    "cliff-line": ([_K.LINE, _K.CLIFF, _K.LINE], [None, None, None]),
    "cliff-quad": ([_K.QUAD, _K.CLIFF, _K.QUAD], [1.0, None, 10.0]),
    "cliff-exp": ([_K.QUAD, _K.CLIFF, _K.EXP_UP], [1.0, None, 2.0]),
    "laplace-cliff": ([_K.LAPLACE_BOWL, _K.CLIFF, _K.EXP_UP], [0.2, None, 2.0]),
    "sigmoid": ([_K.GAUSS_BOWL, _K.LINE, _K.EXP_UP], [0.2, None, 2.0]),
    "sine": ([_K.QUAD, _K.QUAD, _K.QUAD], [1.0, -1.0, 1.0]),
    "line-gauss": ([_K.LINE, _K.GAUSS_BOWL], [None, 0.2]),
}

# Catalog entries whose value function is differentiable everywhere.
_SMOOTH = frozenset(
    name
    for name, (kinds, _) in _CATALOG.items()
    if not any(k in ShapeKind.KINKED for k in kinds) and _K.CLIFF not in kinds
)


def catalog_names():
    """Names of the built-in landscape catalog, in a fixed order."""
    return list(_CATALOG)


def catalog_entry(name):
    """(kinds, shape_params) for a catalog name."""
    kinds, params = _CATALOG[name]
    return list(kinds), list(params)


def catalog_prototype(name, scale=1.0, domain_start=0.0):
    """Build a catalog landscape by name."""
    if name not in _CATALOG:
        raise BuildError(f"unknown catalog prototype {name!r}")
    kinds, params = _CATALOG[name]
    return build_prototype(kinds, params, scale=scale, domain_start=domain_start)


def is_smooth_prototype(name):
    """True if the named catalog entry has no kinks or cliffs."""
    return name in _SMOOTH
