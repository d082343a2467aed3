"""Figure data, CSV tables and charts.

Two chart kinds are produced: a scatter of generated/target length ratio
against target length (violations in red), and a line chart of violation
rate against scale factor, one series per model.  Charts are written as
hand-built SVG, byte-for-byte reproducible, and additionally as PNG via
matplotlib.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .datamodel import BenchmarkEntry, GenerationRecord, Verdict, write_json
from .evalmetrics import SweepResult, join, summarize

SCATTER_HEADER = ("target_len", "ratio", "violation")
SWEEP_HEADER = ("scale", "violation_rate", "win_rate", "mean_words", "series")

VIOLATION_COLOR = "#d62728"
COMPLIANT_COLOR = "#1f77b4"
SERIES_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ScatterPoint:
    entry_id: str
    target_len: int
    ratio: float
    violation: bool

    def row(self) -> tuple[str, str, str]:
        return (str(self.target_len), f"{self.ratio:.4f}", "true" if self.violation else "false")


def scatter_data(bench: Sequence[BenchmarkEntry], gens: Sequence[GenerationRecord]) -> list[ScatterPoint]:
    """One point per successful generation, ordered by entry id.

    Failed generations have no length to plot and are skipped; they are
    reported through the summary's failure count.
    """
    targets = {e.id: e.target_len for e in bench}
    points = []
    for g in gens:
        if g.entry_id not in targets:
            raise ReportError(f"generation for unknown entry id {g.entry_id!r}")
        if g.failed:
            continue
        target = targets[g.entry_id]
        points.append(ScatterPoint(g.entry_id, target, g.word_count / target, g.word_count > target))
    points.sort(key=lambda p: p.entry_id)
    return points


def sweep_rows(sweeps: Sequence[SweepResult]) -> list[tuple[str, ...]]:
    rows = []
    for i, sweep in enumerate(sweeps):
        series = sweep.label or f"series-{i + 1}"
        for scale, s in sweep.points:
            rows.append((
                f"{scale:g}",
                f"{s.violation_rate:.1f}",
                "" if s.win_rate is None else f"{s.win_rate:.1f}",
                f"{s.mean_words:.1f}",
                series,
            ))
    return rows


def emit_csv(header: Sequence[str], rows: Sequence[Sequence[str]], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buf.getvalue())


def _write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"{path}: cannot write ({exc.strerror or exc})") from exc


# --- SVG -------------------------------------------------------------------

_W, _H = 640, 440
_LEFT, _RIGHT, _TOP, _BOTTOM = 64, 150, 24, 52


def _nice_ticks(hi: float, n: int = 5) -> list[float]:
    if hi <= 0:
        return [0.0]
    raw = hi / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    return [round(i * step, 10) for i in range(int(math.floor(hi / step + 1e-9)) + 1)]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick_label(x: float) -> str:
    return f"{x:g}"


class _Canvas:
    def __init__(self, x_max: float, y_max: float, x_label: str, y_label: str, title: str):
        self.x_max, self.y_max = x_max, y_max
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
            "<style>.axis{stroke:#000;stroke-width:1}.grid{stroke:#ddd;stroke-width:1}"
            "text{font-family:sans-serif;font-size:11px}.title{font-size:13px}</style>",
            f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="#fff"/>',
            f'<text class="title" x="{_W / 2:.0f}" y="16" text-anchor="middle">{escape(title)}</text>',
        ]
        pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM
        self.pw, self.ph = pw, ph
        for t in _nice_ticks(x_max):
            x = self.x(t)
            self.parts.append(f'<line class="grid" x1="{_fmt(x)}" y1="{_TOP}" x2="{_fmt(x)}" y2="{_TOP + ph}"/>')
            self.parts.append(f'<text x="{_fmt(x)}" y="{_TOP + ph + 16}" text-anchor="middle">{_tick_label(t)}</text>')
        for t in _nice_ticks(y_max):
            y = self.y(t)
            self.parts.append(f'<line class="grid" x1="{_LEFT}" y1="{_fmt(y)}" x2="{_LEFT + pw}" y2="{_fmt(y)}"/>')
            self.parts.append(f'<text x="{_LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">{_tick_label(t)}</text>')
        self.parts += [
            f'<line class="axis" x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}"/>',
            f'<line class="axis" x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}"/>',
            f'<text x="{_LEFT + pw / 2:.0f}" y="{_H - 14}" text-anchor="middle">{escape(x_label)}</text>',
            f'<text x="16" y="{_TOP + ph / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {_TOP + ph / 2:.0f})">{escape(y_label)}</text>',
        ]
        self._legend_rows = 0

    def x(self, v: float) -> float:
        return _LEFT + self.pw * (v / self.x_max if self.x_max else 0)

    def y(self, v: float) -> float:
        return _TOP + self.ph * (1 - (v / self.y_max if self.y_max else 0))

    def legend(self, label: str, color: str) -> None:
        lx, ly = _LEFT + self.pw + 14, _TOP + 8 + 18 * self._legend_rows
        self.parts.append(f'<rect x="{lx}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        self.parts.append(f'<text x="{lx + 16}" y="{ly + 1}">{escape(label)}</text>')
        self._legend_rows += 1

    def render(self) -> str:
        return "\n".join([*self.parts, "</svg>"]) + "\n"


def scatter_svg(points: Sequence[ScatterPoint], title: str = "Generated length / target length") -> str:
    if not points:
        raise ReportError("no points to plot")
    x_max = max(p.target_len for p in points) * 1.05
    y_max = max(max(p.ratio for p in points), 1.0) * 1.1
    c = _Canvas(x_max, y_max, "target length (words)", "generated / target length", title)
    c.parts.append(
        f'<line x1="{_LEFT}" y1="{_fmt(c.y(1))}" x2="{_LEFT + c.pw}" y2="{_fmt(c.y(1))}" '
        'stroke="#555" stroke-dasharray="4 3"/>'
    )
    for p in points:
        cls, color = ("violation", VIOLATION_COLOR) if p.violation else ("compliant", COMPLIANT_COLOR)
        c.parts.append(
            f'<circle class="{cls}" cx="{_fmt(c.x(p.target_len))}" cy="{_fmt(c.y(p.ratio))}" r="3" '
            f'fill="{color}" fill-opacity="0.7"><title>{",".join(p.row())}</title></circle>'
        )
    c.legend("violation", VIOLATION_COLOR)
    c.legend("within limit", COMPLIANT_COLOR)
    return c.render()


def sweep_svg(sweeps: Sequence[SweepResult], title: str = "Violation rate vs. length scale") -> str:
    if not sweeps or not any(s.points for s in sweeps):
        raise ReportError("no sweep points to plot")
    c = _Canvas(1.0, 100.0, "scale factor", "violation rate (%)", title)
    rows = sweep_rows(sweeps)
    offset = 0
    for i, sweep in enumerate(sweeps):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        series_rows = rows[offset : offset + len(sweep.points)]
        offset += len(sweep.points)
        xy = [(c.x(scale), c.y(s.violation_rate)) for scale, s in sweep.points]
        c.parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{" ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in xy)}"/>'
        )
        for (x, y), row in zip(xy, series_rows):
            c.parts.append(
                f'<circle class="marker" data-series="{escape(row[4])}" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3.5" '
                f'fill="{color}"><title>{escape(",".join(row))}</title></circle>'
            )
        c.legend(series_rows[0][4] if series_rows else f"series-{i + 1}", color)
    return c.render()


def emit_svg_chart(data, kind: str, path: str | Path) -> None:
    """Write a ``scatter`` (ScatterPoints) or ``line`` (SweepResults) chart."""
    if kind == "scatter":
        text = scatter_svg(data)
    elif kind == "line":
        text = sweep_svg(data)
    else:
        raise ReportError(f"unknown chart kind {kind!r}")
    _write_text(path, text)


# --- matplotlib ------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def scatter_png(points: Sequence[ScatterPoint], path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.4), dpi=100)
    for flag, color, label in ((False, COMPLIANT_COLOR, "within limit"), (True, VIOLATION_COLOR, "violation")):
        sel = [p for p in points if p.violation == flag]
        ax.scatter([p.target_len for p in sel], [p.ratio for p in sel], s=10, c=color, alpha=0.7, label=label)
    ax.axhline(1.0, color="#555", linestyle="--", linewidth=1)
    ax.set_xlabel("target length (words)")
    ax.set_ylabel("generated / target length")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def sweep_png(sweeps: Sequence[SweepResult], path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.4), dpi=100)
    for i, sweep in enumerate(sweeps):
        xs = [scale for scale, _ in sweep.points]
        ys = [s.violation_rate for _, s in sweep.points]
        ax.plot(xs, ys, marker="o", color=SERIES_COLORS[i % len(SERIES_COLORS)], label=sweep.label or f"series-{i + 1}")
    ax.set_xlim(1.0, 0.0)
    ax.set_ylim(0, 100)
    ax.set_xlabel("scale factor")
    ax.set_ylabel("violation rate (%)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_report(
    out_dir: str | Path,
    bench: Sequence[BenchmarkEntry],
    gens: Sequence[GenerationRecord],
    verdicts: Sequence[Verdict] | None = None,
    sweeps: Sequence[SweepResult] = (),
    *,
    tie_policy: str = "half_win",
    png: bool = True,
) -> list[Path]:
    """Write scatter.csv/.svg, summary.json and, given sweeps, sweep.csv/.svg.

    PNG renderings of both charts are added unless ``png`` is false.
    Returns the written paths.
    """
    out = Path(out_dir)
    points = scatter_data(bench, gens)
    ordered = [g for _, g in join(bench, gens)]
    summary = summarize(ordered, verdicts or None, tie_policy=tie_policy)
    written = [out / "scatter.csv", out / "scatter.svg", out / "summary.json"]
    emit_csv(SCATTER_HEADER, [p.row() for p in points], written[0])
    if points:
        emit_svg_chart(points, "scatter", written[1])
    else:
        written.remove(written[1])
    write_json(summary, written[-1])
    if points and png:
        scatter_png(points, out / "scatter.png")
        written.append(out / "scatter.png")
    if sweeps:
        emit_csv(SWEEP_HEADER, sweep_rows(sweeps), out / "sweep.csv")
        emit_svg_chart(list(sweeps), "line", out / "sweep.svg")
        written += [out / "sweep.csv", out / "sweep.svg"]
        if png:
            sweep_png(sweeps, out / "sweep.png")
            written.append(out / "sweep.png")
    return written
