"""Unit-test documents, runtime test objects, and the default suite.

A unit test is described by a plain JSON document (landscape composition,
noise, drift schedule) and addressed by a content hash of that document.
``build_test`` turns a document into a runnable object; rotation matrices
are regenerated from seeds stored in the document, never serialized
densely.

``generate_suite`` emits the default benchmark manifest: the full landscape
catalog crossed with noise models, scales, dimensionalities, rotations,
curl and drift schedules, plus the two non-synthetic landscapes ("td2",
"ae1d").
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math

import numpy as np

from . import dynamics, landscape, stochastic
from .compose import MultiTest, curl_matrix, random_rotation
from .dynamics import NonstationarityKind, NonstationaritySpec
from .reference_landscapes import (
    Autoencoder1D,
    TwoStateTD,
    td_expected_field,
    td_sample_update,
)
from .stochastic import NoiseKind, NoiseSpec, SeedContext, sample_gradient

__all__ = [
    "canonical_json",
    "content_id",
    "UnitTest",
    "SyntheticTest",
    "TdTest",
    "AutoencoderTest",
    "build_test",
    "generate_suite",
    "manifest_tests",
    "setup_id",
    "setup_doc",
    "MANIFEST_VERSION",
]

MANIFEST_VERSION = 1


def canonical_json(doc):
    """Deterministic JSON used for hashing and storage."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def content_id(doc):
    """64-bit content hash of a document, as 16 hex characters."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()[:16]


def setup_doc(setup):
    return setup.to_dict()


def setup_id(setup):
    return content_id(setup_doc(setup))


class UnitTest:
    """Runtime form of one benchmark problem.

    ``init_landscape`` returns the (possibly drifting) landscape state;
    the loss / field / gradient-sampling methods take that state so that a
    run can evolve it without mutating the test object.
    """

    def __init__(self, doc):
        self.doc = doc
        self.uid = content_id(doc)
        self.seed_int = int(self.uid, 16)
        self.name = doc.get("name", self.uid)

    # interface -------------------------------------------------------------

    dim = None

    def fun_names(self):
        raise NotImplementedError

    def init_landscape(self):
        raise NotImplementedError

    def default_start(self):
        raise NotImplementedError

    def loss(self, state, theta):
        raise NotImplementedError

    def true_field(self, state, theta):
        raise NotImplementedError

    def sample_gradient(self, state, theta, ctx, factory=None):
        raise NotImplementedError

    def evolve(self, state, step_index, ctx):
        return state


class SyntheticTest(UnitTest):
    """A composed landscape with optional noise and drift."""

    def __init__(self, doc):
        super().__init__(doc)
        comps = []
        for comp in doc["components"]:
            comps.append(
                landscape.build_prototype(
                    comp["kinds"],
                    comp.get("shape_params"),
                    scale=comp.get("scale", 1.0),
                    domain_start=comp.get("domain_start", 0.0),
                )
            )
        d = len(comps)
        rot = None
        if doc.get("rotation_seed") is not None:
            stream = np.random.Generator(
                np.random.Philox(key=int(doc["rotation_seed"]))
            )
            rot = random_rotation(d, stream)
        curl = None
        angle = doc.get("curl_angle", 0.0)
        if angle:
            curl = curl_matrix(d, angle)
        self.multi = MultiTest(
            components=tuple(comps),
            p=float(doc.get("p", 2.0)),
            rotation=rot,
            curl=curl,
            noise=NoiseSpec.from_dict(doc.get("noise")),
        )
        self.nonstat = NonstationaritySpec.from_dict(doc.get("nonstat"))
        self.dim = d

    def fun_names(self):
        return [c.get("fun", "?") for c in self.doc["components"]]

    def init_landscape(self):
        return self.multi

    def default_start(self):
        return self.multi.default_start()

    def loss(self, state, theta):
        return state.loss(theta)

    def true_field(self, state, theta):
        return state.field(theta)

    def sample_gradient(self, state, theta, ctx, factory=None):
        return sample_gradient(state.field(theta), state.noise, ctx, factory)

    def evolve(self, state, step_index, ctx):
        return dynamics.evolve(state, self.nonstat, step_index, ctx)


class TdTest(UnitTest):
    """TD(0) on a two-state Markov reward process.

    The optimizer sees minus the sampled TD update, so plain descent
    performs TD learning; progress is scored as squared distance to the
    fixed point.
    """

    dim = 2

    def __init__(self, doc):
        super().__init__(doc)
        self.model = TwoStateTD.from_dict(doc.get("model"))
        self._target = self.model.fixed_point()

    def fun_names(self):
        return ["td2"]

    def init_landscape(self):
        return self.model

    def default_start(self):
        return np.zeros(2)

    def loss(self, state, theta):
        diff = np.asarray(theta, dtype=float) - self._target
        return 0.5 * float(diff @ diff)

    def true_field(self, state, theta):
        return -td_expected_field(state, theta)

    def sample_gradient(self, state, theta, ctx, factory=None):
        return -td_sample_update(state, theta, ctx)


class AutoencoderTest(UnitTest):
    """Squared reconstruction error of the tiny sigmoid autoencoder."""

    dim = 2

    def __init__(self, doc):
        super().__init__(doc)
        self.model = Autoencoder1D.from_dict(doc.get("model"))
        self.noise = NoiseSpec.from_dict(doc.get("noise"))

    def fun_names(self):
        return ["ae1d"]

    def init_landscape(self):
        return self.model

    def default_start(self):
        return np.array([1.0, 1.0])

    def loss(self, state, theta):
        return state.loss(theta)

    def true_field(self, state, theta):
        return state.gradient(theta)

    def sample_gradient(self, state, theta, ctx, factory=None):
        return sample_gradient(state.gradient(theta), self.noise, ctx, factory)


def build_test(doc):
    """Instantiate the runtime object for a unit-test document."""
    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise ValueError(f"unsupported test format_version {version!r}")
    kind = doc.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticTest(doc)
    if kind == "td2":
        return TdTest(doc)
    if kind == "ae1d":
        return AutoencoderTest(doc)
    raise ValueError(f"unknown test kind {kind!r}")


# -- default suite generation -------------------------------------------------

# Relative noise magnitudes; additive scales are calibrated against the
# gradient magnitude at the start point so that every landscape scale sees
# comparable corruption.
_NOISE_GRID_1D = (
    ("none", 0.0),
    (NoiseKind.ADDITIVE_GAUSS, 0.1),
    (NoiseKind.ADDITIVE_GAUSS, 1.0),
    (NoiseKind.MULTIPLICATIVE_GAUSS, 0.1),
    (NoiseKind.MULTIPLICATIVE_GAUSS, 1.0),
    (NoiseKind.ADDITIVE_CAUCHY, 0.1),
    (NoiseKind.ADDITIVE_CAUCHY, 1.0),
    (NoiseKind.MASK_OUT, 0.2),
    (NoiseKind.MASK_OUT, 0.5),
)

_NOISE_GRID_MULTI = (
    ("none", 0.0),
    (NoiseKind.ADDITIVE_GAUSS, 1.0),
    (NoiseKind.ADDITIVE_CAUCHY, 1.0),
    (NoiseKind.MASK_OUT, 0.5),
)

_SCALES = (0.01, 1.0, 100.0)

_PAIR_FUNS = (
    "line",
    "quad",
    "abs",
    "rect",
    "gauss-bowl",
    "cliff-quad",
    "sigmoid",
    "laplace-bowl",
)

_DRIFT_MAGNITUDE = 0.1


def _characteristic_gradient(fun_scales):
    """RMS gradient magnitude at the default start of each component."""
    total = 0.0
    for fun, scale in fun_scales:
        f = landscape.catalog_prototype(fun, scale=scale)
        total += f.true_gradient(f.default_start()) ** 2
    return max(math.sqrt(total / len(fun_scales)), 1e-9)


def _noise_doc(kind, level, fun_scales):
    if kind == "none":
        return {"kind": NoiseKind.NONE, "scale": 0.0, "drop_prob": 0.0}, 0.0
    if kind == NoiseKind.MASK_OUT:
        return {"kind": kind, "scale": 0.0, "drop_prob": level}, level
    if kind == NoiseKind.MULTIPLICATIVE_GAUSS:
        return {"kind": kind, "scale": level, "drop_prob": 0.0}, level
    scale = level * _characteristic_gradient(fun_scales)
    return {"kind": kind, "scale": scale, "drop_prob": 0.0}, level


def _component_doc(fun, scale):
    kinds, params = landscape.catalog_entry(fun)
    return {
        "fun": fun,
        "kinds": kinds,
        "shape_params": params,
        "scale": scale,
        "domain_start": 0.0,
    }


def _synthetic_doc(
    fun_scales,
    p=2.0,
    rotation_seed=None,
    curl_angle=0.0,
    noise=("none", 0.0),
    nonstat=None,
):
    noise_doc, rel = _noise_doc(noise[0], noise[1], fun_scales)
    doc = {
        "format_version": MANIFEST_VERSION,
        "kind": "synthetic",
        "components": [_component_doc(f, s) for f, s in fun_scales],
        "p": p,
        "rotation_seed": rotation_seed,
        "curl_angle": curl_angle,
        "noise": noise_doc,
        "noise_rel": rel,
        "nonstat": (nonstat or NonstationaritySpec()).to_dict(),
    }
    tags = ["+".join(f for f, _ in fun_scales), f"p{p:g}"]
    tags.append("s" + ",".join(f"{s:g}" for _, s in fun_scales))
    tags.append(noise_doc["kind"] + (f"{rel:g}" if noise[0] != "none" else ""))
    if rotation_seed is not None:
        tags.append("rot")
    if curl_angle:
        tags.append(f"curl{curl_angle:g}")
    if nonstat is not None and nonstat.kind != NonstationarityKind.NONE:
        tags.append(nonstat.kind)
    doc["name"] = "|".join(tags)
    return doc


def generate_suite(seed=0, dims=(1, 2, 10)):
    """The default manifest: returns {format_version, suite_seed, tests}.

    Deterministic in ``seed``; rotation seeds and the mixed 10-d component
    assortments come from a dedicated generator stream.
    """
    stream = stochastic.derive_stream(
        SeedContext(seed, 0, 0, 0, 0), domain=stochastic.DOMAIN_GENERATOR
    )

    def rot_seed():
        return int(stream.integers(0, 2**63))

    docs = []
    names = landscape.catalog_names()

    if 1 in dims:
        drift_kinds = (
            None,
            NonstationarityKind.TRANSLATE,
            NonstationarityKind.RESCALE_SHAPE,
            NonstationarityKind.RESCALE_NOISE,
        )
        for fun, (nk, lvl), scale, drift in itertools.product(
            names, _NOISE_GRID_1D, _SCALES, drift_kinds
        ):
            if drift == NonstationarityKind.RESCALE_NOISE and nk == "none":
                continue
            nonstat = (
                None
                if drift is None
                else NonstationaritySpec(kind=drift, magnitude=_DRIFT_MAGNITUDE)
            )
            docs.append(
                _synthetic_doc([(fun, scale)], p=1.0, noise=(nk, lvl), nonstat=nonstat)
            )

    if 2 in dims:
        pairs = [
            (a, b)
            for i, a in enumerate(_PAIR_FUNS)
            for b in _PAIR_FUNS[i:]
        ]
        scale_pairs = ((1.0, 1.0), (0.01, 100.0))
        for (a, b), p, scales, (nk, lvl) in itertools.product(
            pairs, (1.0, 2.0), scale_pairs, _NOISE_GRID_MULTI
        ):
            fs = [(a, scales[0]), (b, scales[1])]
            docs.append(_synthetic_doc(fs, p=p, noise=(nk, lvl)))
        for (a, b), scales, (nk, lvl) in itertools.product(
            pairs, scale_pairs, _NOISE_GRID_MULTI
        ):
            fs = [(a, scales[0]), (b, scales[1])]
            docs.append(
                _synthetic_doc(fs, p=2.0, rotation_seed=rot_seed(), noise=(nk, lvl))
            )
        for (a, b), angle, (nk, lvl) in itertools.product(
            pairs, (0.05, 0.3), (("none", 0.0), (NoiseKind.ADDITIVE_GAUSS, 1.0))
        ):
            fs = [(a, 1.0), (b, 1.0)]
            docs.append(_synthetic_doc(fs, p=2.0, curl_angle=angle, noise=(nk, lvl)))

        docs.append(
            {
                "format_version": MANIFEST_VERSION,
                "kind": "td2",
                "name": "td2",
                "model": TwoStateTD().to_dict(),
            }
        )
        for nk, lvl in (("none", 0.0), (NoiseKind.ADDITIVE_GAUSS, 0.1),
                        (NoiseKind.ADDITIVE_GAUSS, 1.0)):
            ae = Autoencoder1D()
            grad0 = ae.gradient(np.array([1.0, 1.0]))
            char = max(float(np.sqrt(np.mean(grad0 * grad0))), 1e-9)
            scale = lvl * char if nk == NoiseKind.ADDITIVE_GAUSS else 0.0
            docs.append(
                {
                    "format_version": MANIFEST_VERSION,
                    "kind": "ae1d",
                    "name": f"ae1d|{nk}{lvl:g}" if nk != "none" else "ae1d",
                    "model": ae.to_dict(),
                    "noise": {"kind": nk, "scale": scale, "drop_prob": 0.0},
                }
            )

    if 10 in dims:
        spread = np.logspace(-2.0, 2.0, 10)
        for fun, p, profile, (nk, lvl), rotate in itertools.product(
            _PAIR_FUNS,
            (1.0, 2.0),
            ("uniform", "spread"),
            _NOISE_GRID_MULTI,
            (False, True),
        ):
            scales = [1.0] * 10 if profile == "uniform" else [float(s) for s in spread]
            fs = [(fun, s) for s in scales]
            docs.append(
                _synthetic_doc(
                    fs,
                    p=p,
                    rotation_seed=rot_seed() if rotate else None,
                    noise=(nk, lvl),
                )
            )
        for _ in range(16):
            chosen = [
                _PAIR_FUNS[int(stream.integers(0, len(_PAIR_FUNS)))]
                for _ in range(10)
            ]
            for p, (nk, lvl) in itertools.product((1.0, 2.0), _NOISE_GRID_MULTI):
                fs = [(f, 1.0) for f in chosen]
                docs.append(
                    _synthetic_doc(fs, p=p, rotation_seed=rot_seed(), noise=(nk, lvl))
                )

    return {"format_version": MANIFEST_VERSION, "suite_seed": seed, "tests": docs}


def manifest_tests(manifest):
    """Runtime tests of a manifest, keyed by uid (insertion ordered)."""
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise ValueError(
            f"unsupported manifest format_version {manifest.get('format_version')!r}"
        )
    out = {}
    for doc in manifest["tests"]:
        t = build_test(doc)
        out[t.uid] = t
    return out
