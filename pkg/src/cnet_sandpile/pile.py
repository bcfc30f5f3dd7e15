"""Big-pile experiments: relax N grains at a point, measure the toppled disc, draw it."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import Coord, PeriodicLattice, Rect, SinkSpec
from .relax import RelaxReport, relax_bulk
from .state import Odometer, SandState, odometer_rows, write_state

GLYPHS = {"sink": "x", 0: " ", 1: "o", 2: "#", 3: "+"}
GRAY = {"sink": 64, 0: 255, 1: 192, 2: 0, 3: 128}
FORMATS = ("pgm", "svg", "ascii")


@dataclass(frozen=True)
class Radii:
    inner: float
    outer: float
    inner_nonzero: float
    outer_nonzero: float

    def to_dict(self):
        return {"inner_radius": self.inner, "outer_radius": self.outer,
                "inner_radius_nonzero": self.inner_nonzero,
                "outer_radius_nonzero": self.outer_nonzero}


@dataclass
class PileReport:
    grains: int
    center: Coord
    sink_spec: SinkSpec
    inner_radius: float
    outer_radius: float
    inner_radius_nonzero: float
    outer_radius_nonzero: float
    topple_events: int
    sweeps: int
    wall_time: float
    window: Rect
    artifacts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "grains": str(self.grains),
            "center": list(self.center),
            "sink_spec": self.sink_spec.to_dict(),
            "inner_radius": self.inner_radius,
            "outer_radius": self.outer_radius,
            "inner_radius_nonzero": self.inner_radius_nonzero,
            "outer_radius_nonzero": self.outer_radius_nonzero,
            "topple_events": str(self.topple_events),
            "sweeps": str(self.sweeps),
            "wall_time": round(self.wall_time, 3),
            "window": self.window.as_list(),
            "artifacts": dict(self.artifacts),
        }


def _disc_radii(D: np.ndarray, free: np.ndarray, dist: np.ndarray) -> tuple[float, float]:
    outer = float(dist[D].max())
    missing = free & ~D
    r_miss = float(dist[missing].min()) if missing.any() else math.inf
    inner = float(dist[D & (dist < r_miss)].max())
    return round(inner, 2), round(outer, 2)


def measure_radii(stable: SandState, odometer: Odometer, center) -> Radii:
    """Inner and outer radii of the toppled set D = {F > 0} plus the center.

    outer is the largest distance from the center to a cell of D; inner is
    the largest distance r such that every non-sink cell within r is in D.
    The same pair is computed for D' = {state != 0} plus the center.
    """
    window = stable.window
    if odometer.window != window:
        raise ValueError("state and odometer windows differ")
    if not window.contains(center):
        raise ValueError("center lies outside the window")
    xs, ys = window.coords()
    dist = np.hypot(xs - center[0], ys - center[1])
    free = ~stable.sink_mask
    ci, cj = center[0] - window.x0, center[1] - window.y0
    out = []
    for D in (np.asarray(odometer.counts != 0), np.asarray(stable.cells != 0)):
        D = D.copy()
        D[ci, cj] = True
        out.extend(_disc_radii(D, free, dist))
    return Radii(out[0], out[1], out[2], out[3])


# ---------------------------------------------------------------------------
# figures


def _classes(state: SandState) -> np.ndarray:
    """Cell classes -1 (sink) and 0..3, indexed [x, y]."""
    if not state.is_stable() or (state.cells < 0).any():
        raise ValueError("only stable states can be rendered")
    cls = state.cells.astype(np.int64)
    return np.where(state.sink_mask, -1, cls)


def render_ascii(state: SandState) -> str:
    cls = _classes(state)
    table = {-1: GLYPHS["sink"], 0: GLYPHS[0], 1: GLYPHS[1], 2: GLYPHS[2], 3: GLYPHS[3]}
    # top row is the largest y, as on the page
    lines = ["".join(table[int(c)] for c in cls[:, j]) for j in range(cls.shape[1] - 1, -1, -1)]
    return "\n".join(lines) + "\n"


def render_pgm(state: SandState) -> str:
    cls = _classes(state)
    nx, ny = cls.shape
    table = {-1: GRAY["sink"], 0: GRAY[0], 1: GRAY[1], 2: GRAY[2], 3: GRAY[3]}
    rows = [" ".join(str(table[int(c)]) for c in cls[:, j]) for j in range(ny - 1, -1, -1)]
    return f"P2\n{nx} {ny}\n255\n" + "\n".join(rows) + "\n"


def render_svg(state: SandState, overlay: tuple[float, float, float] | None = None,
               cell: int = 10) -> str:
    """Caption glyphs: skew cross for sinks, circle, filled square, upright cross."""
    cls = _classes(state)
    nx, ny = cls.shape
    w = state.window
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * cell}" '
             f'height="{ny * cell}" viewBox="0 0 {nx * cell} {ny * cell}">',
             f'<rect width="{nx * cell}" height="{ny * cell}" fill="white"/>']
    h = cell / 2
    r = cell * 0.3
    for i in range(nx):
        for j in range(ny):
            c = int(cls[i, j])
            if c == 0:
                continue
            cx, cy = i * cell + h, (ny - 1 - j) * cell + h
            if c == -1:
                parts.append(f'<path d="M{cx - r} {cy - r}L{cx + r} {cy + r}M{cx - r} {cy + r}'
                             f'L{cx + r} {cy - r}" stroke="black" class="sink"/>')
            elif c == 1:
                parts.append(f'<circle cx="{cx}" cy="{cy}" r="{r}" fill="none" stroke="black" class="g1"/>')
            elif c == 2:
                parts.append(f'<rect x="{cx - r}" y="{cy - r}" width="{2 * r}" height="{2 * r}" '
                             f'fill="black" class="g2"/>')
            else:
                parts.append(f'<path d="M{cx - r} {cy}L{cx + r} {cy}M{cx} {cy - r}L{cx} {cy + r}" '
                             f'stroke="black" class="g3"/>')
    if overlay is not None:
        ox, oy, rad = overlay
        cx = (ox - w.x0) * cell + h
        cy = (w.y1 - oy) * cell + h
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="{rad * cell}" fill="none" '
                     f'stroke="red" class="overlay"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_figure(state: SandState, fmt: str = "ascii", path=None,
                  overlay: tuple[float, float, float] | None = None) -> str:
    """Render a stable state; ``overlay`` is (x, y, radius), drawn in svg only."""
    if fmt == "ascii":
        text = render_ascii(state)
    elif fmt == "pgm":
        text = render_pgm(state)
    elif fmt == "svg":
        text = render_svg(state, overlay)
    else:
        raise ValueError(f"unsupported format {fmt!r}; use one of {', '.join(FORMATS)}")
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_figure_classes(text: str, fmt: str) -> np.ndarray:
    """Inverse of the ascii and pgm renderers: classes indexed [x, y]."""
    if fmt == "ascii":
        inv = {v: (-1 if k == "sink" else k) for k, v in GLYPHS.items()}
        lines = text.rstrip("\n").split("\n")
        grid = [[inv[ch] for ch in line] for line in lines]
    elif fmt == "pgm":
        tok = text.split()
        nx, ny = int(tok[1]), int(tok[2])
        inv = {v: (-1 if k == "sink" else k) for k, v in GRAY.items()}
        vals = [inv[int(t)] for t in tok[4:]]
        grid = [vals[r * nx:(r + 1) * nx] for r in range(ny)]
    else:
        raise ValueError(f"cannot parse {fmt!r}")
    return np.array(grid[::-1], dtype=np.int64).T


# ---------------------------------------------------------------------------
# the experiment


def pile_state(N: int, center, spec: SinkSpec, radius: int = 8) -> SandState:
    if N < 1:
        raise ValueError("N must be at least 1")
    if spec.is_sink(center):
        raise ValueError("the center is a sink")
    window = Rect.around(center, radius)
    cells = np.zeros(window.shape, dtype=object)
    cells[center[0] - window.x0, center[1] - window.y0] = int(N)
    return SandState(spec, window, cells)


def run_bigpile(N: int, center=(3, 3), spec: SinkSpec | None = None, out=None,
                figure_formats=("pgm", "svg", "ascii")) -> PileReport:
    """Relax N grains at ``center`` on the empty plane and measure the disc."""
    spec = spec or PeriodicLattice(6, 6)
    center = Coord(*center)
    start = time.perf_counter()
    rep: RelaxReport = relax_bulk(pile_state(N, center, spec))
    wall = time.perf_counter() - start
    radii = measure_radii(rep.stable, rep.odometer, center)
    report = PileReport(int(N), center, spec, radii.inner, radii.outer, radii.inner_nonzero,
                        radii.outer_nonzero, rep.topple_events, rep.sweeps, wall, rep.stable.window)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        state_path = write_state(rep.stable, out / "state.json", {
            "odometer": odometer_rows(rep.odometer),
            "report": rep.metadata(),
        })
        report.artifacts["state"] = str(state_path)
        for fmt in figure_formats:
            p = out / f"figure.{fmt}"
            render_figure(rep.stable, fmt, p, overlay=(center[0], center[1], radii.outer))
            report.artifacts[fmt] = str(p)
        rp = out / "report.json"
        report.artifacts["report"] = str(rp)
        rp.write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    return report
