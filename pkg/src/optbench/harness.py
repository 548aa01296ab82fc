"""Benchmark protocol: runs, references, scoring, classification, storage.

Every (test, setup) pairing is run for a fixed number of steps and repeats.
Progress is normalized against the best fixed-rate SGD found by a dense
learning-rate sweep on the same test:

    L_norm = (L - L_init) / (L_sgd - L_init)

so 0 means "no progress", 1 means "as good as tuned SGD", > 1 "better",
negative "worse than the start".  Each pairing is then classified into one
of six colors from its 10 repeats.

The database is a line-delimited JSON file holding test and setup
documents, run records, reference results and classification annotations.
Records are keyed by content hashes and written in sorted order, so a suite
executed with any number of workers serializes to identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .optimizers import AlgorithmSetup, all_hyper_names, make_optimizer
from .stochastic import SeedContext, StreamFactory
from .suite import build_test, content_id, manifest_tests, setup_doc, setup_id

__all__ = [
    "RUN_STEPS",
    "RUN_REPEATS",
    "REFERENCE_ETAS",
    "INSTABILITY_FACTOR",
    "Colors",
    "RunRecord",
    "ReferenceResult",
    "ExperimentDB",
    "DbFormatError",
    "run_experiment",
    "compute_reference",
    "classify",
    "classify_db",
    "filter_records",
    "run_suite",
    "run_chain",
]

# The protocol: every pairing runs this many update steps and repeats.
RUN_STEPS = 100
RUN_REPEATS = 10

# Learning-rate sweep for the SGD reference, log-uniform.
REFERENCE_ETAS = tuple(float(x) for x in np.logspace(-10.0, 1.0, 34))

# A run is unstable once its loss exceeds this factor times max(L_init, 1),
# or any iterate or loss stops being finite.
INSTABILITY_FACTOR = 1e10

# Classification thresholds on normalized progress.
LOW_PROGRESS = 0.1
HIGH_PROGRESS = 2.0
LOW_FRACTION = 0.25


class Colors:
    RED = "red"
    VIOLET = "violet"
    ORANGE = "orange"
    YELLOW = "yellow"
    GREEN = "green"
    BLUE = "blue"

    ALL = (RED, VIOLET, ORANGE, YELLOW, GREEN, BLUE)


@dataclass
class RunRecord:
    """Outcome of one repeat of one (test, setup) pairing."""

    test_id: str
    setup_id: str
    repeat_index: int
    init_loss: float
    final_loss: float | None
    final_theta: list | None
    unstable: bool
    l_norm: float | None = None
    trajectory: list | None = None

    def to_dict(self):
        return {
            "type": "run",
            "test": self.test_id,
            "setup": self.setup_id,
            "repeat": self.repeat_index,
            "init_loss": self.init_loss,
            "final_loss": self.final_loss,
            "final_theta": self.final_theta,
            "unstable": self.unstable,
            "l_norm": self.l_norm,
            "trajectory": self.trajectory,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            test_id=doc["test"],
            setup_id=doc["setup"],
            repeat_index=doc["repeat"],
            init_loss=doc["init_loss"],
            final_loss=doc["final_loss"],
            final_theta=doc["final_theta"],
            unstable=doc["unstable"],
            l_norm=doc.get("l_norm"),
            trajectory=doc.get("trajectory"),
        )


@dataclass
class ReferenceResult:
    """Best fixed-rate SGD on one test; anchor of the normalization."""

    test_id: str
    eta_best: float | None
    l_sgd: float | None
    init_loss: float
    sweep: list = field(default_factory=list)  # [[eta, median or None], ...]

    @property
    def available(self):
        return self.eta_best is not None

    def to_dict(self):
        return {
            "type": "reference",
            "test": self.test_id,
            "eta_best": self.eta_best,
            "l_sgd": self.l_sgd,
            "init_loss": self.init_loss,
            "sweep": self.sweep,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            test_id=doc["test"],
            eta_best=doc["eta_best"],
            l_sgd=doc["l_sgd"],
            init_loss=doc["init_loss"],
            sweep=doc.get("sweep", []),
        )


# -- the inner optimization loop ---------------------------------------------


def _optimize(test, opt, theta, state, suite_seed, repeat, steps, factory,
              trajectory=None, traj_stride=10):
    """Advance ``opt`` for ``steps`` steps on ``test``.

    Returns (theta, state, unstable, steps_done).  ``trajectory`` (if a
    list) receives decimated [step, theta] snapshots.  The landscape state
    is evolved before each gradient query, per the drift schedule.
    """
    init_loss = test.loss(state, theta)
    limit = INSTABILITY_FACTOR * max(init_loss, 1.0)
    unstable = False
    with np.errstate(all="ignore"):
        for step in range(steps):
            ctx = SeedContext(suite_seed, test.seed_int, repeat, step, 0)
            state = test.evolve(state, step, ctx)
            query = opt.query_point(theta)
            grad = test.sample_gradient(state, query, ctx, factory)
            theta = opt.step(theta, grad)
            if not np.all(np.isfinite(theta)):
                unstable = True
            else:
                loss = test.loss(state, theta)
                if not math.isfinite(loss) or loss > limit:
                    unstable = True
            if unstable:
                return theta, state, True, step + 1
            if trajectory is not None and (step + 1) % traj_stride == 0:
                trajectory.append([step + 1, [float(x) for x in theta]])
    return theta, state, False, steps


def _run_one(test, setup, suite_seed, repeat, steps, factory, store_trajectory=False):
    opt = make_optimizer(setup) if isinstance(setup, AlgorithmSetup) else setup
    state = test.init_landscape()
    theta = np.array(test.default_start(), dtype=float)
    opt.reset(theta)
    init_loss = test.loss(state, theta)
    traj = [[0, [float(x) for x in theta]]] if store_trajectory else None
    theta, state, unstable, _ = _optimize(
        test, opt, theta, state, suite_seed, repeat, steps, factory, traj
    )
    if unstable:
        final_loss = None
        final_theta = None
    else:
        final_loss = float(test.loss(state, opt.eval_point(theta)))
        final_theta = [float(x) for x in theta]
    return RunRecord(
        test_id=test.uid,
        setup_id=setup_id(setup) if isinstance(setup, AlgorithmSetup) else "",
        repeat_index=repeat,
        init_loss=float(init_loss),
        final_loss=final_loss,
        final_theta=final_theta,
        unstable=unstable,
        trajectory=traj,
    )


def run_experiment(test, setup, suite_seed=0, steps=RUN_STEPS, repeats=RUN_REPEATS,
                   factory=None, store_trajectory=False):
    """All repeats of one (test, setup) pairing.

    Pure in its arguments: the same call yields bit-identical records, in
    any process, regardless of what ran before.
    """
    if steps < 0 or repeats < 1:
        raise ValueError("need steps >= 0 and repeats >= 1")
    factory = factory or StreamFactory()
    return [
        _run_one(test, setup, suite_seed, r, steps, factory, store_trajectory)
        for r in range(repeats)
    ]


def compute_reference(test, suite_seed=0, steps=RUN_STEPS, repeats=RUN_REPEATS,
                      factory=None):
    """Dense SGD learning-rate sweep; the best median final loss wins.

    A sweep value counts only if none of its repeats went unstable.  Ties
    resolve toward the smaller learning rate.  If every value is unstable
    the reference is marked unavailable.
    """
    factory = factory or StreamFactory()
    sweep = []
    eta_best = None
    l_best = None
    init_loss = None
    for eta in REFERENCE_ETAS:
        setup = AlgorithmSetup("sgd", {"eta0": eta})
        records = run_experiment(
            test, setup, suite_seed, steps=steps, repeats=repeats, factory=factory
        )
        init_loss = records[0].init_loss
        if any(r.unstable for r in records):
            sweep.append([eta, None])
            continue
        score = median(r.final_loss for r in records)
        sweep.append([eta, score])
        if l_best is None or score < l_best:
            l_best = score
            eta_best = eta
    return ReferenceResult(
        test_id=test.uid,
        eta_best=eta_best,
        l_sgd=l_best,
        init_loss=float(init_loss),
        sweep=sweep,
    )


def normalized_progress(record, reference):
    """L_norm of one record, or None if undefined (unstable run, missing or
    degenerate reference)."""
    if record.unstable or not reference.available:
        return None
    denom = reference.l_sgd - record.init_loss
    if denom == 0.0:
        return None
    return (record.final_loss - record.init_loss) / denom


def classify(records):
    """Color of one group of repeats (all of the same test and setup).

    red    every repeat unstable
    violet at least one repeat unstable
    orange median L_norm below LOW_PROGRESS
    blue   median L_norm above HIGH_PROGRESS
    yellow at least a quarter of repeats below LOW_PROGRESS (boundary
           fraction counts as yellow)
    green  otherwise
    """
    if len(records) < RUN_REPEATS:
        raise ValueError(
            f"classification needs at least {RUN_REPEATS} records, got {len(records)}"
        )
    keys = {(r.test_id, r.setup_id) for r in records}
    if len(keys) > 1:
        raise ValueError(f"records mix pairings: {sorted(keys)}")
    n_unstable = sum(1 for r in records if r.unstable)
    if n_unstable == len(records):
        return Colors.RED
    if n_unstable > 0:
        return Colors.VIOLET
    values = [r.l_norm for r in records]
    if any(v is None for v in values):
        raise ValueError("records lack normalized progress; classify after normalize")
    med = median(values)
    if med < LOW_PROGRESS:
        return Colors.ORANGE
    if med > HIGH_PROGRESS:
        return Colors.BLUE
    low = sum(1 for v in values if v < LOW_PROGRESS)
    if low / len(values) >= LOW_FRACTION:
        return Colors.YELLOW
    return Colors.GREEN


# -- the experiment database ---------------------------------------------------


class DbFormatError(ValueError):
    """Raised for unreadable or version-incompatible database files."""


class ExperimentDB:
    """In-memory database with a line-delimited JSON file format."""

    FORMAT_VERSION = 1

    def __init__(self, suite_seed=0):
        self.suite_seed = suite_seed
        self.tests = {}        # uid -> test document
        self.setups = {}       # uid -> setup document
        self.records = {}      # (test, setup, repeat) -> RunRecord
        self.references = {}   # test uid -> ReferenceResult
        self.classes = {}      # (test, setup) -> color
        self.chains = []       # chain result documents

    # -- content ------------------------------------------------------------

    def add_test_doc(self, doc):
        uid = content_id(doc)
        self.tests.setdefault(uid, doc)
        return uid

    def add_setup(self, setup):
        doc = setup_doc(setup)
        uid = content_id(doc)
        self.setups.setdefault(uid, doc)
        return uid

    def add_record(self, record, replace=False):
        key = (record.test_id, record.setup_id, record.repeat_index)
        if not replace and key in self.records:
            return False
        self.records[key] = record
        return True

    def add_reference(self, ref, replace=False):
        if not replace and ref.test_id in self.references:
            return False
        self.references[ref.test_id] = ref
        return True

    def has_pairing(self, test_uid, setup_uid, repeats=RUN_REPEATS):
        return all(
            (test_uid, setup_uid, r) in self.records for r in range(repeats)
        )

    def pairing_records(self, test_uid, setup_uid):
        out = [
            rec
            for (t, s, _), rec in self.records.items()
            if t == test_uid and s == setup_uid
        ]
        out.sort(key=lambda r: r.repeat_index)
        return out

    def unreferenced_tests(self):
        """Tests that have records but no usable reference."""
        used = {t for (t, _, _) in self.records}
        return sorted(
            t
            for t in used
            if t not in self.references or not self.references[t].available
        )

    # -- persistence ----------------------------------------------------------

    def save(self, path):
        lines = [
            {
                "type": "header",
                "format_version": self.FORMAT_VERSION,
                "suite_seed": self.suite_seed,
            }
        ]
        for uid in sorted(self.tests):
            lines.append({"type": "test", "id": uid, "doc": self.tests[uid]})
        for uid in sorted(self.setups):
            lines.append({"type": "setup", "id": uid, "doc": self.setups[uid]})
        for uid in sorted(self.references):
            lines.append(self.references[uid].to_dict())
        for key in sorted(self.records):
            lines.append(self.records[key].to_dict())
        for key in sorted(self.classes):
            lines.append(
                {
                    "type": "class",
                    "test": key[0],
                    "setup": key[1],
                    "color": self.classes[key],
                }
            )
        for doc in self.chains:
            lines.append({"type": "chain", "doc": doc})
        data = "\n".join(
            json.dumps(line, sort_keys=True, separators=(",", ":")) for line in lines
        )
        with open(path, "w") as fh:
            fh.write(data + "\n")

    @classmethod
    def load(cls, path):
        db = None
        offset = 0
        with open(path, "rb") as fh:
            for lineno, raw in enumerate(fh, start=1):
                text = raw.decode("utf-8", errors="strict").strip()
                if text:
                    try:
                        doc = json.loads(text)
                    except json.JSONDecodeError as e:
                        raise DbFormatError(
                            f"corrupt database line {lineno} at byte {offset}: {e}"
                        ) from e
                    db = cls._apply_line(db, doc, lineno, offset)
                offset += len(raw)
        if db is None:
            raise DbFormatError(f"{path}: empty database file")
        return db

    @classmethod
    def _apply_line(cls, db, doc, lineno, offset):
        kind = doc.get("type")
        if db is None:
            if kind != "header":
                raise DbFormatError(
                    f"line {lineno} at byte {offset}: expected header, got {kind!r}"
                )
            if doc.get("format_version") != cls.FORMAT_VERSION:
                raise DbFormatError(
                    f"unsupported database format_version {doc.get('format_version')!r}"
                )
            return cls(suite_seed=doc.get("suite_seed", 0))
        if kind == "test":
            db.tests[doc["id"]] = doc["doc"]
        elif kind == "setup":
            db.setups[doc["id"]] = doc["doc"]
        elif kind == "reference":
            ref = ReferenceResult.from_dict(doc)
            db.references[ref.test_id] = ref
        elif kind == "run":
            rec = RunRecord.from_dict(doc)
            db.records[(rec.test_id, rec.setup_id, rec.repeat_index)] = rec
        elif kind == "class":
            db.classes[(doc["test"], doc["setup"])] = doc["color"]
        elif kind == "chain":
            db.chains.append(doc["doc"])
        elif kind == "header":
            raise DbFormatError(f"line {lineno} at byte {offset}: duplicate header")
        else:
            raise DbFormatError(
                f"line {lineno} at byte {offset}: unknown record type {kind!r}"
            )
        return db


# -- filtering ------------------------------------------------------------------

# "learningRate" is accepted as a spelling of the eta0 hyperparameter in
# filter queries.
_HYPER_ALIASES = {"learningRate": "eta0"}


def _test_doc_funs(doc):
    if doc.get("kind") == "synthetic":
        return [c.get("fun", "?") for c in doc["components"]]
    return [doc.get("kind", "?")]


def _test_doc_scales(doc):
    if doc.get("kind") == "synthetic":
        return [c.get("scale", 1.0) for c in doc["components"]]
    return []


def _test_doc_dims(doc):
    if doc.get("kind") == "synthetic":
        return len(doc["components"])
    return 2


def _test_doc_noise(doc):
    noise = doc.get("noise")
    return noise.get("kind", "none") if noise else "none"


def filter_records(db, query):
    """Records matching a conjunctive query.

    Keys: ``fun``, ``noise``, ``scale``, ``dims``, ``algo``, or any
    hyperparameter name.  A list value means set membership; ``fun`` matches
    when every component of the test is in the requested set.
    """
    valid = {"fun", "noise", "scale", "dims", "algo"}
    valid |= all_hyper_names()
    valid |= set(_HYPER_ALIASES)
    for key in query:
        if key not in valid:
            raise KeyError(
                f"unknown filter key {key!r}; valid keys: {sorted(valid)}"
            )

    def as_set(v):
        return set(v) if isinstance(v, (list, tuple, set)) else {v}

    out = []
    for key in sorted(db.records):
        rec = db.records[key]
        tdoc = db.tests.get(rec.test_id, {})
        sdoc = db.setups.get(rec.setup_id, {})
        ok = True
        for qk, qv in query.items():
            wanted = as_set(qv)
            if qk == "fun":
                ok = all(f in wanted for f in _test_doc_funs(tdoc))
            elif qk == "noise":
                ok = _test_doc_noise(tdoc) in wanted
            elif qk == "scale":
                ok = any(s in wanted for s in _test_doc_scales(tdoc))
            elif qk == "dims":
                ok = _test_doc_dims(tdoc) in wanted
            elif qk == "algo":
                ok = sdoc.get("family") in wanted
            else:
                name = _HYPER_ALIASES.get(qk, qk)
                hyper = sdoc.get("hyper", {})
                ok = name in hyper and hyper[name] in wanted
            if not ok:
                break
        if ok:
            out.append(rec)
    return out


# -- normalization and classification -------------------------------------------


def classify_db(db, repeats=RUN_REPEATS):
    """Fill in L_norm on all records and (re)compute the color annotations.

    Pairings without a usable reference or with an incomplete repeat set
    are left unclassified; they render as missing.
    """
    for rec in db.records.values():
        ref = db.references.get(rec.test_id)
        rec.l_norm = normalized_progress(rec, ref) if ref is not None else None
    db.classes.clear()
    pairings = sorted({(t, s) for (t, s, _) in db.records})
    for t, s in pairings:
        group = db.pairing_records(t, s)
        ref = db.references.get(t)
        if len(group) < repeats or ref is None or not ref.available:
            continue
        stable = [r for r in group if not r.unstable]
        if any(r.l_norm is None for r in stable):
            continue
        db.classes[(t, s)] = classify(group)
    return db


# -- suite execution --------------------------------------------------------------

_WORKER = {}


def _worker_init(test_docs, suite_seed, steps, repeats):
    _WORKER["docs"] = test_docs
    _WORKER["tests"] = {}
    _WORKER["suite_seed"] = suite_seed
    _WORKER["steps"] = steps
    _WORKER["repeats"] = repeats
    _WORKER["factory"] = StreamFactory()


def _worker_test(uid):
    t = _WORKER["tests"].get(uid)
    if t is None:
        t = build_test(_WORKER["docs"][uid])
        _WORKER["tests"][uid] = t
    return t


def _worker_run_pair(task):
    test_uid, sdoc = task
    test = _worker_test(test_uid)
    setup = AlgorithmSetup.from_dict(sdoc)
    records = run_experiment(
        test,
        setup,
        _WORKER["suite_seed"],
        steps=_WORKER["steps"],
        repeats=_WORKER["repeats"],
        factory=_WORKER["factory"],
    )
    return [r.to_dict() for r in records]


def _worker_run_reference(test_uid):
    test = _worker_test(test_uid)
    ref = compute_reference(
        test,
        _WORKER["suite_seed"],
        steps=_WORKER["steps"],
        repeats=_WORKER["repeats"],
        factory=_WORKER["factory"],
    )
    return ref.to_dict()


def run_suite(manifest, setups, db=None, workers=1, steps=RUN_STEPS,
              repeats=RUN_REPEATS, with_references=True, progress=None):
    """Execute a manifest against a list of setups.

    References are computed first (once per test), then every (test, setup)
    pairing for ``repeats`` repeats.  Existing records and references in
    ``db`` are kept, making re-runs incremental.  The result is independent
    of ``workers``: records are pure functions of their coordinates and the
    database serializes in sorted order.
    """
    tests = manifest_tests(manifest)
    suite_seed = manifest.get("suite_seed", 0)
    if db is None:
        db = ExperimentDB(suite_seed=suite_seed)
    elif db.suite_seed != suite_seed:
        raise ValueError(
            f"database suite_seed {db.suite_seed} != manifest {suite_seed}"
        )
    for uid, t in tests.items():
        db.tests.setdefault(uid, t.doc)
    setup_ids = {}
    for s in setups:
        setup_ids[db.add_setup(s)] = s

    ref_tasks = [
        uid
        for uid in tests
        if with_references and uid not in db.references
    ]
    pair_tasks = [
        (t_uid, setup_doc(setup_ids[s_uid]))
        for t_uid in tests
        for s_uid in sorted(setup_ids)
        if not db.has_pairing(t_uid, s_uid, repeats)
    ]

    test_docs = {uid: t.doc for uid, t in tests.items()}
    if workers <= 1:
        _worker_init(test_docs, suite_seed, steps, repeats)
        ref_results = map(_worker_run_reference, ref_tasks)
        for doc in ref_results:
            db.add_reference(ReferenceResult.from_dict(doc))
            if progress:
                progress("reference")
        for task in pair_tasks:
            for rdoc in _worker_run_pair(task):
                db.add_record(RunRecord.from_dict(rdoc))
            if progress:
                progress("pair")
    else:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_worker_init,
            initargs=(test_docs, suite_seed, steps, repeats),
        ) as pool:
            for doc in pool.map(_worker_run_reference, ref_tasks, chunksize=1):
                db.add_reference(ReferenceResult.from_dict(doc))
                if progress:
                    progress("reference")
            for rdocs in pool.map(_worker_run_pair, pair_tasks, chunksize=4):
                for rdoc in rdocs:
                    db.add_record(RunRecord.from_dict(rdoc))
                if progress:
                    progress("pair")
    return db


def run_chain(stages, setup, suite_seed=0, repeat_index=0, factory=None):
    """Run a sequence of (test, steps) stages with persistent optimizer state.

    Parameters re-center to each stage's default start; the optimizer's
    internal state (accumulators, momenta, rates) carries across stage
    boundaries untouched.  Stage randomness is seeded exactly like a plain
    run of that stage, so a one-stage chain reproduces ``run_experiment``
    bit for bit.
    """
    factory = factory or StreamFactory()
    opt = make_optimizer(setup)
    results = []
    final_theta = None
    for index, (test, steps) in enumerate(stages):
        state = test.init_landscape()
        theta = np.array(test.default_start(), dtype=float)
        if index == 0:
            opt.reset(theta)
        init_loss = test.loss(state, theta)
        theta, state, unstable, done = _optimize(
            test, opt, theta, state, suite_seed, repeat_index, steps, factory
        )
        if unstable:
            results.append(
                {
                    "test": test.uid,
                    "steps": done,
                    "init_loss": float(init_loss),
                    "final_loss": None,
                    "unstable": True,
                }
            )
            final_theta = None
            break
        final_loss = float(test.loss(state, opt.eval_point(theta)))
        results.append(
            {
                "test": test.uid,
                "steps": steps,
                "init_loss": float(init_loss),
                "final_loss": final_loss,
                "unstable": False,
            }
        )
        final_theta = [float(x) for x in theta]
    return {
        "setup": setup.to_dict(),
        "repeat_index": repeat_index,
        "stages": results,
        "final_theta": final_theta,
        "optimizer_state": opt.state_dict(),
    }
