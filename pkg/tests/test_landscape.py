"""Landscape assembly tests.

The shape formulas are cross-checked against an independently assembled
symbolic model: each segment kind is written down again in sympy, the
boundary constants of the bowls are solved (not copied), and the pieces
are chained through the same value/slope propagation rule.  Agreement is
then required pointwise on dense grids.
"""

import math

import numpy as np
import pytest
import sympy as sp

from optbench.landscape import (
    CLIFF_SLOPE_FACTOR,
    BuildError,
    PrototypeFunction,
    ShapeKind,
    ShapeSegment,
    build_prototype,
    catalog_entry,
    catalog_names,
    catalog_prototype,
    is_smooth_prototype,
    prototype_from_dict,
)

# ---------------------------------------------------------------------------
# symbolic oracle


def _oracle_segment(kind, v0, s0, a, w, u):
    """Sympy expression for one segment on local u in [0, w]."""
    if kind == "line":
        return v0 + s0 * u
    if kind == "quad":
        return v0 + s0 * u + a * u**2 / 2
    if kind == "abs":
        m = w / 2
        return sp.Piecewise((v0 + s0 * u, u < m), (v0 + s0 * m - s0 * (u - m), True))
    if kind == "rect-bend":
        m = w / 2
        return sp.Piecewise((v0 + s0 * u, u < m), (v0 + s0 * m + a * (u - m), True))
    if kind == "exp-up":
        # f' = s0 * exp(a u), f(0) = v0
        return v0 + sp.integrate(s0 * sp.exp(a * sp.Symbol("t")), (sp.Symbol("t"), 0, u))
    if kind == "exp-down":
        return v0 + sp.integrate(s0 * sp.exp(-a * sp.Symbol("t")), (sp.Symbol("t"), 0, u))
    if kind == "gauss-bowl":
        A, K = sp.symbols("A K")
        c = w / 2
        f = K - A * sp.exp(-((u - c) ** 2) / (2 * a**2))
        sol = sp.solve(
            [f.subs(u, 0) - v0, sp.diff(f, u).subs(u, 0) - s0], [A, K], dict=True
        )[0]
        return f.subs(sol)
    if kind == "laplace-bowl":
        # solve the left branch (u < c) for the constants
        A, K = sp.symbols("A K")
        c = w / 2
        left = K - A * sp.exp(-(c - u) / a)
        sol = sp.solve(
            [left.subs(u, 0) - v0, sp.diff(left, u).subs(u, 0) - s0], [A, K], dict=True
        )[0]
        f = sol[K] - sol[A] * sp.exp(-sp.Abs(u - c) / a)
        return f
    if kind == "convex-curve":
        return v0 + s0 * u + u**a
    if kind == "concave-curve":
        return v0 + s0 * u - u**a
    raise AssertionError(kind)


def _oracle_assemble(kinds, params, initial):
    """Chain segments symbolically; returns a callable of the global coord."""
    u = sp.Symbol("u", real=True)
    w = 1.0
    v0, s0 = initial
    exprs = []
    pending_cliff = False
    for k, a in zip(kinds, params):
        if k == "cliff-marker":
            pending_cliff = True
            continue
        if exprs and pending_cliff:
            s0 = s0 * 10
        f = _oracle_segment(k, v0, s0, a, w, u)
        exprs.append(sp.lambdify(u, f, "numpy"))
        v0 = float(f.subs(u, w))
        # right-hand slope: evaluate the derivative just left of w for the
        # smooth pieces; kinds with a mid-segment break need the right arm
        if k == "abs":
            s0 = -s0
        elif k == "rect-bend":
            s0 = a
        else:
            s0 = float(sp.diff(f, u).subs(u, w - 1e-12))
        pending_cliff = False

    def value(x):
        i = min(int(x // w), len(exprs) - 1)
        return float(exprs[i](x - i * w))

    return value, len(exprs)


_INITIALS = {
    "line": (1.0, -1.0),
    "abs": (0.5, -1.0),
    "rect-bend": (0.5, -1.0),
    "exp-up": (1.0, -1.0),
    "exp-down": (1.0, -1.0),
    "gauss-bowl": (0.0, -1.0),
    "laplace-bowl": (0.0, -1.0),
    "convex-curve": (0.0, -1.0),
    "concave-curve": (1.0, -0.2),
}


def _initial_for(kind, param):
    if kind == "quad":
        return (0.0, -param * 0.5)
    return _INITIALS[kind]


_ORACLE_SEQUENCES = [
    (["line"], [None]),
    (["quad"], [1.0]),
    (["quad"], [4.0]),
    (["abs"], [None]),
    (["rect-bend"], [0.0]),
    (["rect-bend"], [0.7]),
    (["exp-up"], [2.0]),
    (["exp-down"], [3.0]),
    (["gauss-bowl"], [0.2]),
    (["laplace-bowl"], [0.2]),
    (["convex-curve"], [3.0]),
    (["concave-curve"], [3.0]),
    (["line", "cliff-marker", "line"], [None, None, None]),
    (["quad", "cliff-marker", "exp-up"], [1.0, None, 2.0]),
    (["gauss-bowl", "line", "exp-up"], [0.2, None, 2.0]),
    (["quad", "quad", "quad"], [1.0, -1.0, 1.0]),
    (["line", "gauss-bowl"], [None, 0.2]),
    (["abs", "cliff-marker", "quad", "laplace-bowl"], [None, None, 2.0, 0.3]),
]


@pytest.mark.parametrize("kinds,params", _ORACLE_SEQUENCES)
def test_matches_symbolic_oracle(kinds, params):
    f = build_prototype(kinds, params, scale=1.0)
    first = next(k for k in kinds if k != "cliff-marker")
    first_param = params[kinds.index(first)]
    oracle, nseg = _oracle_assemble(
        kinds, [p if p is not None else _default(k) for k, p in zip(kinds, params)],
        _initial_for(first, first_param if first_param is not None else _default(first)),
    )
    assert nseg == len(f.segments)
    xs = np.linspace(0.0, nseg * 1.0, 400, endpoint=False)
    ref = f.default_start()
    base_impl = f.value(ref)
    base_orc = oracle(ref)
    for x in xs:
        # compare shapes through differences so the min offset cancels
        got = f.value(x) - base_impl
        want = oracle(x) - base_orc
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9), f"x={x}"


def _default(kind):
    return {
        "line": 0.0,
        "quad": 1.0,
        "abs": 0.0,
        "rect-bend": 0.0,
        "exp-up": 2.0,
        "exp-down": 3.0,
        "gauss-bowl": 0.2,
        "laplace-bowl": 0.2,
        "convex-curve": 3.0,
        "concave-curve": 3.0,
        "cliff-marker": 0.0,
    }[kind]


# ---------------------------------------------------------------------------
# construction invariants


def _random_sequences(n, seed):
    """Random valid kind sequences (no leading/trailing/double cliffs)."""
    rng = np.random.default_rng(seed)
    segment_kinds = [k for k in ShapeKind.ALL if k != ShapeKind.CLIFF]
    out = []
    while len(out) < n:
        length = int(rng.integers(1, 6))
        kinds = [segment_kinds[int(rng.integers(len(segment_kinds)))]]
        for _ in range(length - 1):
            if kinds[-1] != ShapeKind.CLIFF and rng.random() < 0.25:
                kinds.append(ShapeKind.CLIFF)
            kinds.append(segment_kinds[int(rng.integers(len(segment_kinds)))])
        try:
            f = build_prototype(kinds)
        except BuildError:
            continue  # e.g. zero slope into a bowl; skip and redraw
        out.append((kinds, f))
    return out


def test_c0_continuity_random_sequences():
    eps = 1e-9
    for kinds, f in _random_sequences(60, seed=11):
        for i in range(1, len(f.segments)):
            b = f.segment_start(i)
            left = f.value(b - eps)
            right = f.value(b + eps)
            mid = f.value(b)
            tol = 1e-6 * (1.0 + abs(mid))
            assert abs(left - mid) < tol, kinds
            assert abs(right - mid) < tol, kinds


def test_c1_continuity_except_marked_junctions():
    eps = 1e-9
    for kinds, f in _random_sequences(60, seed=12):
        cliff_at = set(f.cliff_junctions)
        for i in range(1, len(f.segments)):
            b = f.segment_start(i)
            before = f.true_gradient(b - eps)
            after = f.true_gradient(b)
            if i in cliff_at:
                assert after == pytest.approx(
                    CLIFF_SLOPE_FACTOR * before, rel=1e-6
                ), kinds
            else:
                assert after == pytest.approx(before, rel=1e-6, abs=1e-9), kinds


def test_cliff_ratio_is_exact_on_linear_pieces():
    f = build_prototype(["line", "cliff-marker", "line"])
    b = f.segment_start(1)
    below = f.true_gradient(b - 1e-6)
    at = f.true_gradient(b)
    assert at / below == CLIFF_SLOPE_FACTOR  # both slopes constant, ratio exact


def test_cliff_marker_adds_no_width():
    f = build_prototype(["line", "cliff-marker", "line"])
    g = build_prototype(["line", "line"])
    assert f.domain_end == g.domain_end == 2.0
    assert len(f.segments) == 2


def test_minimum_is_zero_and_located():
    for kinds, f in _random_sequences(40, seed=13):
        assert f.min_value == 0.0
        assert f.domain_start <= f.min_location <= f.domain_end
        at_min = f.value(f.min_location)
        assert abs(at_min) <= 1e-9 * max(1.0, f.value(f.domain_start)), kinds
        xs = np.linspace(f.domain_start, f.domain_end, 2001)
        vals = [f.value(x) for x in xs]
        scale_tol = 1e-12 * max(1.0, max(vals))
        assert min(vals) >= -scale_tol, kinds
        # no sampled point undercuts the reported minimum
        assert min(vals) >= at_min - scale_tol, kinds


def test_scale_is_linear():
    for name in ("quad", "sigmoid", "cliff-exp"):
        f1 = catalog_prototype(name, scale=1.0)
        f7 = catalog_prototype(name, scale=7.0)
        for x in np.linspace(-0.5, f1.domain_end + 0.5, 50):
            assert f7.value(x) == pytest.approx(7.0 * f1.value(x), rel=1e-12, abs=1e-300)
            assert f7.true_gradient(x) == pytest.approx(
                7.0 * f1.true_gradient(x), rel=1e-12, abs=1e-300
            )


def test_gradient_matches_finite_differences():
    h = 1e-6
    for kinds, f in _random_sequences(30, seed=14):
        # stay clear of junctions and mid-segment kinks
        avoid = [f.segment_start(i) for i in range(len(f.segments))]
        avoid += [
            f.segment_start(i) + 0.5 * s.width
            for i, s in enumerate(f.segments)
            if s.kind in ShapeKind.KINKED
        ]
        avoid.append(f.min_location)
        xs = np.linspace(f.domain_start + 0.01, f.domain_end - 0.01, 101)
        for x in xs:
            if min(abs(x - a) for a in avoid) < 3 * h:
                continue
            fd = (f.value(x + h) - f.value(x - h)) / (2 * h)
            g = f.true_gradient(x)
            assert g == pytest.approx(fd, rel=2e-4, abs=2e-5), (kinds, x)


def test_linear_continuation_outside_domain():
    f = catalog_prototype("quad")
    s_left = f.true_gradient(f.domain_start)
    assert f.true_gradient(f.domain_start - 5.0) == s_left
    assert f.value(f.domain_start - 1.0) == pytest.approx(
        f.value(f.domain_start) - s_left * 1.0, rel=1e-12
    )
    s_right = f.true_gradient(f.domain_end)
    assert f.true_gradient(f.domain_end + 5.0) == pytest.approx(s_right, rel=1e-12)
    # a descending boundary slope makes the continuation go negative
    g = catalog_prototype("line")
    assert g.value(g.domain_end + 1.0) < 0.0


def test_right_hand_derivative_at_kinks():
    f = catalog_prototype("abs")
    kink = f.segment_start(0) + 0.5
    assert f.true_gradient(kink - 1e-9) == pytest.approx(-1.0)
    assert f.true_gradient(kink) == pytest.approx(1.0)  # right-hand value


# ---------------------------------------------------------------------------
# the initial-condition table


@pytest.mark.parametrize(
    "kind,param,value0,slope0",
    [
        ("line", None, 1.0, -1.0),
        ("abs", None, 0.5, -1.0),
        ("rect-bend", 0.0, 0.5, -1.0),
        ("exp-up", 2.0, 1.0, -1.0),
        ("exp-down", 3.0, 1.0, -1.0),
        ("gauss-bowl", 0.2, 0.0, -1.0),
        ("laplace-bowl", 0.2, 0.0, -1.0),
        ("convex-curve", 3.0, 0.0, -1.0),
        ("concave-curve", 3.0, 1.0, -0.2),
        ("quad", 1.0, 0.0, -0.5),
        ("quad", 4.0, 0.0, -2.0),
    ],
)
def test_initial_conditions(kind, param, value0, slope0):
    f = build_prototype([kind], [param])
    seg = f.segments[0]
    assert seg.left_value == value0
    assert seg.left_slope == slope0
    assert f.true_gradient(f.domain_start) == pytest.approx(slope0, rel=1e-12)


def test_default_start_fraction():
    f = catalog_prototype("quad")
    assert f.default_start() == pytest.approx(f.domain_start + 0.1)
    g = build_prototype(["line", "line"], domain_start=3.0)
    assert g.default_start() == pytest.approx(3.1)


# ---------------------------------------------------------------------------
# catalog


def test_catalog_has_seventeen_entries():
    names = catalog_names()
    assert len(names) == 17
    assert len(set(names)) == 17
    for name in names:
        f = catalog_prototype(name)
        assert isinstance(f, PrototypeFunction)
        assert f.min_value == 0.0


def test_catalog_composites():
    kinds, params = catalog_entry("cliff-quad")
    assert list(kinds) == ["quad", "cliff-marker", "quad"]
    assert list(params) == [1.0, None, 10.0]
    kinds, _ = catalog_entry("sigmoid")
    assert list(kinds) == ["gauss-bowl", "line", "exp-up"]
    with pytest.raises(KeyError):
        catalog_entry("not-a-shape")


def test_smoothness_tags():
    assert is_smooth_prototype("quad")
    assert is_smooth_prototype("gauss-bowl")
    assert not is_smooth_prototype("abs")
    assert not is_smooth_prototype("cliff-quad")
    assert not is_smooth_prototype("laplace-cliff")


# ---------------------------------------------------------------------------
# serialization


def test_serialization_round_trip():
    for name in catalog_names():
        f = catalog_prototype(name, scale=2.5)
        g = prototype_from_dict(f.to_dict())
        xs = np.linspace(f.domain_start - 1.0, f.domain_end + 1.0, 97)
        for x in xs:
            assert g.value(x) == f.value(x)
            assert g.true_gradient(x) == f.true_gradient(x)


def test_from_dict_rejects_other_versions():
    doc = catalog_prototype("quad").to_dict()
    doc["format_version"] = 99
    with pytest.raises(BuildError, match="format_version"):
        prototype_from_dict(doc)


# ---------------------------------------------------------------------------
# build diagnostics


def test_build_errors():
    with pytest.raises(BuildError, match="empty"):
        build_prototype([])
    with pytest.raises(BuildError, match="unknown shape kind"):
        build_prototype(["zigzag"])
    with pytest.raises(BuildError, match="open or close"):
        build_prototype(["cliff-marker", "line"])
    with pytest.raises(BuildError, match="open or close"):
        build_prototype(["line", "cliff-marker"])
    with pytest.raises(BuildError, match="consecutive"):
        build_prototype(["line", "cliff-marker", "cliff-marker", "line"])
    with pytest.raises(BuildError, match="shape params"):
        build_prototype(["line", "line"], [None])
    with pytest.raises(BuildError, match="scale"):
        build_prototype(["line"], scale=0.0)
    with pytest.raises(BuildError, match="scale"):
        build_prototype(["line"], scale=-2.0)


def test_zero_slope_junction_errors_name_the_junction():
    # a flat rect-bend exit (post-bend slope 0) cannot feed a cliff ...
    with pytest.raises(BuildError, match="junction 1.*zero slope"):
        build_prototype(["rect-bend", "cliff-marker", "line"], [0.0, None, None])
    # ... nor a kind that needs an entering slope
    with pytest.raises(BuildError, match="junction 1.*nonzero"):
        build_prototype(["rect-bend", "gauss-bowl"], [0.0, 0.2])


def test_segment_validation():
    with pytest.raises(BuildError, match="width"):
        ShapeSegment(kind="line", width=0.0, left_value=0.0, left_slope=1.0)
    with pytest.raises(BuildError, match="not a segment kind"):
        ShapeSegment(kind="cliff-marker", width=1.0, left_value=0.0, left_slope=1.0)


# ---------------------------------------------------------------------------
# specific frozen shapes


def test_unit_quad_numbers():
    # quad, param 1, scale 1: raw = -u/2 + u^2/2, vertex at 1/2, depth 1/8
    f = catalog_prototype("quad")
    assert f.min_location == pytest.approx(0.5)
    assert f.value(0.5) == 0.0
    assert f.value(0.1) == pytest.approx(0.08)
    assert f.value(0.0) == pytest.approx(0.125)
    assert f.true_gradient(0.1) == pytest.approx(-0.4)


def test_gauss_bowl_depth_matches_slope_constraint():
    # entering slope -1 at u=0 fixes the amplitude; check the solved depth
    f = catalog_prototype("gauss-bowl")
    seg = f.segments[0]
    amp, base, c, sig = seg._gauss_constants()
    assert c == 0.5
    assert sig == 0.2
    # f'(0) = -amp * (0-c)/sig^2 * exp(-c^2/2sig^2) should equal -1
    slope0 = amp * (0.0 - c) / sig**2 * math.exp(-0.5 * (c / sig) ** 2)
    assert slope0 == pytest.approx(-1.0, rel=1e-12)


def test_laplace_bowl_has_vertex_kink():
    f = catalog_prototype("laplace-bowl")
    v = f.segment_start(0) + 0.5
    left = f.true_gradient(v - 1e-9)
    right = f.true_gradient(v)
    assert left < 0.0 < right
    assert abs(abs(left) - abs(right)) < 1e-6  # symmetric magnitudes
