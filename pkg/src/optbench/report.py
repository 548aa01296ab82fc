"""Heatmap reports: one pixel (or SVG cell) per classified pairing.

Columns are tests, grouped by dimension, noise kind, differentiability and
drift kind, and ordered inside each group by the tuned SGD learning rate
(easiest first).  Rows are algorithm setups, grouped by family and ordered
inside each family by performance on an anchor test: the one-dimensional
quadratic bowl with unit scale and full-strength additive Gaussian noise.

The PPM output is a raw P6 file with exactly one pixel per cell, suitable
for byte-equality comparisons.  The SVG output adds labels and a legend but
contains nothing nondeterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import median

from . import landscape
from .harness import ExperimentDB  # noqa: F401  (public type of the db argument)
from .optimizers import family_names

__all__ = [
    "PALETTE",
    "MISSING_COLOR",
    "HeatmapLayout",
    "build_layout",
    "cell_colors",
    "render_ppm",
    "render_svg",
]

PALETTE = {
    "red": (0xD6, 0x27, 0x28),
    "violet": (0x94, 0x67, 0xBD),
    "orange": (0xFF, 0x7F, 0x0E),
    "yellow": (0xE6, 0xD9, 0x15),
    "green": (0x2C, 0xA0, 0x2C),
    "blue": (0x1F, 0x77, 0xB4),
}

MISSING_COLOR = (0xBB, 0xBB, 0xBB)

_NOISE_ORDER = (
    "none",
    "additive-gauss",
    "multiplicative-gauss",
    "additive-cauchy",
    "mask-out",
)

_NONSTAT_ORDER = ("none", "translate-optimum", "rescale-shape", "rescale-noise")


def _order(seq, value):
    try:
        return seq.index(value)
    except ValueError:
        return len(seq)


def _doc_dims(doc):
    return len(doc["components"]) if doc.get("kind") == "synthetic" else 2


def _doc_noise(doc):
    noise = doc.get("noise")
    return noise.get("kind", "none") if noise else "none"


def _doc_nonstat(doc):
    ns = doc.get("nonstat")
    return ns.get("kind", "none") if ns else "none"


def _doc_smooth(doc):
    if doc.get("kind") != "synthetic":
        return True
    return all(
        landscape.is_smooth_prototype(c["fun"]) for c in doc["components"]
    )


@dataclass
class HeatmapLayout:
    """Row/column orders plus group extents for rendering."""

    test_ids: list
    setup_ids: list
    column_groups: list  # (label, start index, count)
    row_groups: list     # (label, start index, count)

    @property
    def width(self):
        return len(self.test_ids)

    @property
    def height(self):
        return len(self.setup_ids)


def _find_anchor_test(db):
    """The 1-d unit quadratic with additive Gaussian noise at full strength."""
    for uid in sorted(db.tests):
        doc = db.tests[uid]
        if doc.get("kind") != "synthetic":
            continue
        comps = doc["components"]
        if len(comps) != 1 or comps[0]["fun"] != "quad":
            continue
        if comps[0].get("scale") != 1.0:
            continue
        if _doc_noise(doc) != "additive-gauss" or doc.get("noise_rel") != 1.0:
            continue
        if _doc_nonstat(doc) != "none":
            continue
        return uid
    return None


def _column_key(db, uid):
    doc = db.tests[uid]
    group = (
        _doc_dims(doc),
        _order(_NOISE_ORDER, _doc_noise(doc)),
        0 if _doc_smooth(doc) else 1,
        _order(_NONSTAT_ORDER, _doc_nonstat(doc)),
    )
    ref = db.references.get(uid)
    if ref is not None and ref.available:
        inner = (0, ref.eta_best, uid)
    else:
        inner = (1, 0.0, uid)
    return group, inner


def _group_label(db, uid):
    doc = db.tests[uid]
    parts = [
        f"d={_doc_dims(doc)}",
        _doc_noise(doc),
        "smooth" if _doc_smooth(doc) else "kinky",
        _doc_nonstat(doc) if _doc_nonstat(doc) != "none" else "static",
    ]
    return " ".join(parts)


def _row_score(db, setup_uid, anchor_uid):
    """Median L_norm on the anchor test; None when unusable."""
    if anchor_uid is None:
        return None
    group = db.pairing_records(anchor_uid, setup_uid)
    if not group or any(r.unstable or r.l_norm is None for r in group):
        return None
    return median(r.l_norm for r in group)


def build_layout(db):
    """Compute row and column order from the database contents."""
    test_ids = sorted({t for (t, _, _) in db.records})
    setup_ids = sorted({s for (_, s, _) in db.records})
    if not test_ids:
        raise ValueError("database has no run records to report")

    keyed = sorted(test_ids, key=lambda u: _column_key(db, u))
    column_groups = []
    for i, uid in enumerate(keyed):
        label = _group_label(db, uid)
        if column_groups and column_groups[-1][0] == label:
            column_groups[-1][2] += 1
        else:
            column_groups.append([label, i, 1])
    column_groups = [(lbl, start, count) for lbl, start, count in column_groups]

    anchor = _find_anchor_test(db)
    families = list(family_names())

    def row_key(uid):
        fam = db.setups.get(uid, {}).get("family", "")
        score = _row_score(db, uid, anchor)
        # higher anchor score first; missing scores sink to the bottom
        inner = (0, -score, uid) if score is not None else (1, 0.0, uid)
        return (_order(families, fam), fam, inner)

    rows = sorted(setup_ids, key=row_key)
    row_groups = []
    for i, uid in enumerate(rows):
        fam = db.setups.get(uid, {}).get("family", "?")
        if row_groups and row_groups[-1][0] == fam:
            row_groups[-1][2] += 1
        else:
            row_groups.append([fam, i, 1])
    row_groups = [(lbl, start, count) for lbl, start, count in row_groups]

    return HeatmapLayout(
        test_ids=keyed,
        setup_ids=rows,
        column_groups=column_groups,
        row_groups=row_groups,
    )


def cell_colors(db, layout):
    """RGB triplet per (row, column) cell, gray where unclassified."""
    grid = []
    for s_uid in layout.setup_ids:
        row = []
        for t_uid in layout.test_ids:
            color = db.classes.get((t_uid, s_uid))
            row.append(PALETTE.get(color, MISSING_COLOR))
        grid.append(row)
    return grid


def render_ppm(db, layout=None):
    """Raw P6 bytes, one pixel per cell."""
    layout = layout or build_layout(db)
    grid = cell_colors(db, layout)
    header = f"P6\n{layout.width} {layout.height}\n255\n".encode("ascii")
    body = bytearray()
    for row in grid:
        for rgb in row:
            body.extend(rgb)
    return header + bytes(body)


def _hex(rgb):
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_svg(db, layout=None, cell=12):
    """Labelled SVG heatmap (deterministic: no timestamps, no ids)."""
    layout = layout or build_layout(db)
    grid = cell_colors(db, layout)
    left = 110
    top = 150
    legend_h = 2 * cell + 28
    width = left + layout.width * cell + 10
    height = top + layout.height * cell + legend_h

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )
    out.append(
        '<style>text{font-family:monospace;font-size:10px;fill:#222}</style>'
    )
    out.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')

    for r, row in enumerate(grid):
        y = top + r * cell
        for c, rgb in enumerate(row):
            x = left + c * cell
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_hex(rgb)}"/>'
            )

    for label, start, count in layout.column_groups:
        x = left + start * cell
        out.append(
            f'<line x1="{x}" y1="{top - 4}" x2="{x}" '
            f'y2="{top + layout.height * cell}" stroke="#ffffff" stroke-width="1"/>'
        )
        cx = x + count * cell / 2
        out.append(
            f'<text x="{cx:g}" y="{top - 8}" '
            f'transform="rotate(-60 {cx:g} {top - 8})">{label}</text>'
        )

    for label, start, count in layout.row_groups:
        y = top + start * cell
        out.append(
            f'<line x1="{left - 4}" y1="{y}" '
            f'x2="{left + layout.width * cell}" y2="{y}" '
            f'stroke="#ffffff" stroke-width="1"/>'
        )
        cy = y + count * cell / 2 + 4
        out.append(f'<text x="4" y="{cy:g}">{label}</text>')

    ly = top + layout.height * cell + 18
    lx = left
    for name in ("red", "violet", "orange", "yellow", "green", "blue"):
        out.append(
            f'<rect x="{lx}" y="{ly}" width="{cell}" height="{cell}" '
            f'fill="{_hex(PALETTE[name])}"/>'
        )
        out.append(f'<text x="{lx + cell + 4}" y="{ly + cell - 2}">{name}</text>')
        lx += cell + 9 * len(name)
    out.append(
        f'<rect x="{lx}" y="{ly}" width="{cell}" height="{cell}" '
        f'fill="{_hex(MISSING_COLOR)}"/>'
    )
    out.append(f'<text x="{lx + cell + 4}" y="{ly + cell - 2}">missing</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
