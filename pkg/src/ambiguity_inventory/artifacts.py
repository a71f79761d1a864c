"""CSV and SVG emission. Every file opens with a ``# key = value`` block so it
can be traced back to the exact configuration that produced it."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from .policy import BarrierSet, RegionLabel, classify
from .simulator import PathRecord
from .solver import ValueField

LABEL_CODES = {RegionLabel.CONTINUATION: "C", RegionLabel.LOWER: "L", RegionLabel.UPPER: "U"}
_CODE_LABELS = {v: k for k, v in LABEL_CODES.items()}

FIELD_COLUMNS = ("tau", "x", "m", "value", "label")
BARRIER_COLUMNS = ("tau", "m", "lower", "target", "upper")


def fmt(v: float) -> str:
    return format(float(v), ".12g")


def _meta_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v)


def metadata_lines(meta: Mapping[str, object] | None) -> list[str]:
    return [f"# {k} = {_meta_value(v)}" for k, v in (meta or {}).items()]


def read_metadata(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("<!--"):
                continue
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition("=")
            out[key.strip()] = value.strip()
    return out


def _write(path: str | Path, lines: Sequence[str]) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    return path


def write_field_csv(field: ValueField, path: str | Path, labels: np.ndarray | None = None,
                    meta: Mapping[str, object] | None = None) -> Path:
    """One row per node, ordered by (tau, m, x)."""
    grid = field.grid
    labels = classify(field) if labels is None else labels
    codes = np.array([LABEL_CODES[RegionLabel(i)] for i in range(3)])
    xs = [fmt(x) for x in grid.x_levels]
    lines = metadata_lines({**(meta or {}), "label_codes": "C continuation, L lower control, "
                                                          "U upper control"})
    lines.append(",".join(FIELD_COLUMNS))
    for k, tau in enumerate(grid.tau_levels):
        t = fmt(tau)
        for j, m in enumerate(grid.m_levels):
            mm = fmt(m)
            col = field.values[k, :, j]
            lab = codes[labels[k, :, j]]
            lines.extend(f"{t},{x},{mm},{fmt(v)},{c}" for x, v, c in zip(xs, col, lab))
    return _write(path, lines)


def read_field_csv(path: str | Path):
    """Inverse of ``write_field_csv``: returns (levels dict, values, labels)."""
    skip = len(read_metadata(path)) + 1
    num = np.loadtxt(path, delimiter=",", skiprows=skip, usecols=(0, 1, 2, 3), ndmin=2)
    codes = np.loadtxt(path, delimiter=",", skiprows=skip, usecols=4, dtype=str, ndmin=1)
    tau, x, m = (np.unique(num[:, c]) for c in range(3))
    shape = (tau.size, m.size, x.size)
    values = num[:, 3].reshape(shape).transpose(0, 2, 1)
    lut = {c: int(lab) for c, lab in _CODE_LABELS.items()}
    labels = np.array([lut[c] for c in codes], dtype=np.int8).reshape(shape).transpose(0, 2, 1)
    return {"tau": tau, "x": x, "m": m}, values, labels


def write_barriers_csv(barriers: BarrierSet, path: str | Path, taus: Sequence[float] | None = None,
                       meta: Mapping[str, object] | None = None) -> Path:
    """Rows ordered by (tau, m); absent barriers are empty cells."""
    ks = range(len(barriers.tau_levels)) if taus is None else [barriers.tau_index(t) for t in taus]
    lines = metadata_lines(meta)
    lines.append(",".join(BARRIER_COLUMNS))

    def cell(v):
        return fmt(v) if math.isfinite(v) else ""

    for k in ks:
        t = fmt(barriers.tau_levels[k])
        for j, m in enumerate(barriers.m_levels):
            lines.append(",".join((t, fmt(m), cell(barriers.lower[k, j]),
                                   cell(barriers.target[k, j]), cell(barriers.upper[k, j]))))
    return _write(path, lines)


def read_barriers_csv(path: str | Path) -> dict[str, np.ndarray]:
    cols = {c: [] for c in BARRIER_COLUMNS}
    with open(path) as fh:
        header = None
        for line in fh:
            if line.startswith("#"):
                continue
            parts = line.rstrip("\n").split(",")
            if header is None:
                header = parts
                continue
            for name, raw in zip(header, parts):
                cols[name].append(float(raw) if raw else math.nan)
    return {k: np.array(v) for k, v in cols.items()}


def write_path_csv(record: PathRecord, path: str | Path,
                   meta: Mapping[str, object] | None = None) -> Path:
    lines = metadata_lines(meta)
    lines.append(",".join(PathRecord.COLUMNS))
    lines.extend(",".join(fmt(v) for v in row) for row in record.as_array())
    return _write(path, lines)


def write_summary_csv(rows: Sequence[Mapping[str, object]], path: str | Path,
                      meta: Mapping[str, object] | None = None) -> Path:
    lines = metadata_lines(meta)
    cols = list(rows[0])
    lines.append(",".join(cols))
    for row in rows:
        lines.append(",".join(fmt(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in cols))
    return _write(path, lines)


# SVG ----------------------------------------------------------------------

_W, _H = 720, 520
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 190, 50, 60
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_REGION_FILL = {RegionLabel.CONTINUATION: "#f2f2f2", RegionLabel.LOWER: "#9ecae1",
                RegionLabel.UPPER: "#fcbba1"}


def _ticks(lo: float, hi: float, max_ticks: int = 8) -> list[float]:
    span = hi - lo
    raw = span / max_ticks
    mag = 10 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    n = int(math.floor((hi - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.pw = _W - _LEFT - _RIGHT
        self.ph = _H - _TOP - _BOTTOM

    def px(self, x):
        return _LEFT + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return _TOP + (self.y1 - y) / (self.y1 - self.y0) * self.ph

    def axes(self, title: str) -> list[str]:
        out = [f'<rect x="{_LEFT}" y="{_TOP}" width="{self.pw}" height="{self.ph}" '
               f'fill="none" stroke="#000" stroke-width="1"/>',
               f'<text x="{_LEFT + self.pw / 2:.2f}" y="{_TOP - 18}" text-anchor="middle" '
               f'font-size="15">{_esc(title)}</text>']
        for t in _ticks(self.x0, self.x1):
            x = self.px(t)
            out.append(f'<line x1="{x:.2f}" y1="{_TOP + self.ph}" x2="{x:.2f}" '
                       f'y2="{_TOP + self.ph + 5}" stroke="#000"/>')
            out.append(f'<text x="{x:.2f}" y="{_TOP + self.ph + 19}" text-anchor="middle" '
                       f'font-size="11">{t:g}</text>')
        for t in _ticks(self.y0, self.y1):
            y = self.py(t)
            out.append(f'<line x1="{_LEFT - 5}" y1="{y:.2f}" x2="{_LEFT}" y2="{y:.2f}" '
                       f'stroke="#000"/>')
            out.append(f'<text x="{_LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" '
                       f'font-size="11">{t:g}</text>')
        out.append(f'<text x="{_LEFT + self.pw / 2:.2f}" y="{_H - 15}" text-anchor="middle" '
                   f'font-size="13">x</text>')
        out.append(f'<text x="20" y="{_TOP + self.ph / 2:.2f}" text-anchor="middle" '
                   f'font-size="13" transform="rotate(-90 20 {_TOP + self.ph / 2:.2f})">m</text>')
        return out


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _svg_document(body: list[str], meta: Mapping[str, object] | None) -> list[str]:
    head = ["<!--", *[line.replace("--", "- -") for line in metadata_lines(meta)], "-->"]
    return head + [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">',
        f'<rect width="{_W}" height="{_H}" fill="#fff"/>',
        *body, "</svg>"]


def _polylines(xs: np.ndarray, ys: np.ndarray, frame: _Frame, style: str) -> list[str]:
    """Polyline segments through the finite points; sentinels break the curve."""
    out, pts = [], []
    for x, y in zip(xs, ys):
        if math.isfinite(x) and frame.x0 <= x <= frame.x1:
            pts.append(f"{frame.px(x):.2f},{frame.py(y):.2f}")
            continue
        if len(pts) > 1:
            out.append(f'<polyline points="{" ".join(pts)}" fill="none" {style}/>')
        pts = []
    if len(pts) > 1:
        out.append(f'<polyline points="{" ".join(pts)}" fill="none" {style}/>')
    return out


def _unpack(member, tau):
    label, bs, *own = member
    return label, bs, (own[0] if own else tau)


def _x_window(members, tau) -> tuple[float, float]:
    vals = []
    for member in members:
        _, bs, t = _unpack(member, tau)
        k = bs.tau_index(t)
        for arr in (bs.lower[k], bs.upper[k], bs.target[k]):
            vals.extend(arr[np.isfinite(arr)])
    lo, hi = (min(vals), max(vals)) if vals else (-1.0, 1.0)
    pad = max(1.0, 0.1 * (hi - lo))
    return math.floor(lo - pad), math.ceil(hi + pad)


def render_barriers_svg(members: Sequence[tuple], tau: float | None, path: str | Path,
                        title: str = "", meta: Mapping[str, object] | None = None) -> Path:
    """Barrier and target curves in the (x, m) plane, one colour per member.

    Members are ``(label, BarrierSet)`` drawn at ``tau``, or
    ``(label, BarrierSet, own_tau)``. Solid lines are barriers, dashed are targets.
    """
    m_levels = members[0][1].m_levels
    frame = _Frame(_x_window(members, tau), (float(m_levels[0]), float(m_levels[-1])))
    body = frame.axes(title or f"control barriers at tau = {tau:g}")
    lx = _W - _RIGHT + 15
    for n, member in enumerate(members):
        label, bs, t = _unpack(member, tau)
        k = bs.tau_index(t)
        color = _PALETTE[n % len(_PALETTE)]
        solid = f'stroke="{color}" stroke-width="2"'
        dashed = f'stroke="{color}" stroke-width="1.5" stroke-dasharray="6 4"'
        body += _polylines(bs.lower[k], bs.m_levels, frame, solid)
        body += _polylines(bs.upper[k], bs.m_levels, frame, solid)
        body += _polylines(bs.target[k], bs.m_levels, frame, dashed)
        y = _TOP + 10 + 22 * n
        body.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" {solid}/>')
        body.append(f'<text x="{lx + 30}" y="{y + 4}" font-size="12">{_esc(label)}</text>')
    y = _TOP + 10 + 22 * len(members) + 12
    body.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="#444" '
                f'stroke-width="2"/>')
    body.append(f'<text x="{lx + 30}" y="{y + 4}" font-size="12">lower / upper barrier</text>')
    body.append(f'<line x1="{lx}" y1="{y + 20}" x2="{lx + 24}" y2="{y + 20}" stroke="#444" '
                f'stroke-width="1.5" stroke-dasharray="6 4"/>')
    body.append(f'<text x="{lx + 30}" y="{y + 24}" font-size="12">target</text>')
    return _write(path, _svg_document(body, meta))


def render_field_svg(field: ValueField, tau: float, path: str | Path,
                     labels: np.ndarray | None = None,
                     meta: Mapping[str, object] | None = None) -> Path:
    """Region map of one tau slice: each node drawn as a cell coloured by label."""
    grid = field.grid
    labels = classify(field) if labels is None else labels
    k = grid.tau_index(tau)
    h1, h2 = grid.spec.h1, grid.spec.h2
    xl, ml = grid.x_levels, grid.m_levels
    frame = _Frame((xl[0] - h1 / 2, xl[-1] + h1 / 2), (ml[0] - h2 / 2, ml[-1] + h2 / 2))
    body = []
    cw = frame.px(h1) - frame.px(0)
    ch = frame.py(0) - frame.py(h2)
    for i, x in enumerate(xl):
        for j, m in enumerate(ml):
            fill = _REGION_FILL[RegionLabel(labels[k, i, j])]
            body.append(f'<rect x="{frame.px(x - h1 / 2):.2f}" y="{frame.py(m + h2 / 2):.2f}" '
                        f'width="{cw:.2f}" height="{ch:.2f}" fill="{fill}"/>')
    body += frame.axes(f"regions at tau = {tau:g}")
    lx = _W - _RIGHT + 15
    for n, (lab, name) in enumerate(((RegionLabel.LOWER, "lower control"),
                                     (RegionLabel.CONTINUATION, "continuation"),
                                     (RegionLabel.UPPER, "upper control"))):
        y = _TOP + 10 + 22 * n
        body.append(f'<rect x="{lx}" y="{y - 7}" width="24" height="14" '
                    f'fill="{_REGION_FILL[lab]}" stroke="#666"/>')
        body.append(f'<text x="{lx + 30}" y="{y + 4}" font-size="12">{name}</text>')
    return _write(path, _svg_document(body, meta))


def render_svg(obj, path: str | Path, tau: float, **kwargs) -> Path:
    """Dispatch on the artifact type: a BarrierSet, a list of (label, BarrierSet)
    pairs, or a ValueField."""
    if isinstance(obj, ValueField):
        return render_field_svg(obj, tau, path, **kwargs)
    if isinstance(obj, BarrierSet):
        obj = [("barriers", obj)]
    return render_barriers_svg(obj, tau, path, **kwargs)
