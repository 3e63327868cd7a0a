"""Deterministic result artifacts: JSON reports, CSV tables, SVG figures.

Every writer produces byte-identical output for identical inputs: key order
is fixed by construction, floats are serialized with repr, and figures use
fixed formatting. Wall-clock timestamps only appear when a caller passes
one in explicitly, so reruns stay reproducible by default.
"""
from __future__ import annotations

import csv as _csv
import hashlib
import json
from pathlib import Path

from . import __version__
from .ml import EvalReport

__all__ = [
    "file_sha256",
    "json_bytes",
    "write_report_json",
    "eval_report_payload",
    "transfer_payload",
    "write_confusion_csv",
    "write_importance_csv",
    "write_transfer_csv",
    "svg_confusion",
    "svg_importance",
    "svg_transfer",
]


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, allow_nan=False) + "\n").encode()


def write_report_json(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(json_bytes(payload))


def _input_entries(inputs) -> list[dict]:
    return [{"path": str(p), "sha256": file_sha256(p)} for p in inputs]


def eval_report_payload(report: EvalReport, config: dict, inputs=()) -> dict:
    return {
        "tool": "cogload",
        "version": __version__,
        "config": dict(config),
        "inputs": _input_entries(inputs),
        "results": report.to_dict(),
    }


def transfer_payload(reports: dict[str, EvalReport], config: dict,
                     inputs=()) -> dict:
    return {
        "tool": "cogload",
        "version": __version__,
        "config": dict(config),
        "inputs": _input_entries(inputs),
        "results": {k: r.to_dict() for k, r in reports.items()},
    }


def _write_commented_csv(path: Path, comment_lines, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        writer = _csv.writer(fh)
        for row in rows:
            writer.writerow(row)


def write_confusion_csv(path: str | Path, report: EvalReport,
                        comment_lines=()) -> None:
    rows = [["true\\pred", *report.class_names]]
    for name, counts in zip(report.class_names, report.confusion):
        rows.append([name, *[str(int(c)) for c in counts]])
    _write_commented_csv(Path(path), comment_lines, rows)


def write_importance_csv(path: str | Path, items, comment_lines=()) -> None:
    rows = [["feature", "importance"]]
    rows += [[name, repr(float(v))] for name, v in items]
    _write_commented_csv(Path(path), comment_lines, rows)


def write_transfer_csv(path: str | Path, reports: dict[str, EvalReport],
                       comment_lines=()) -> None:
    rows = [["direction", "accuracy", "macro_f1", "n_test"]]
    for direction, rep in reports.items():
        rows.append([direction, repr(rep.accuracy), repr(rep.macro_f1),
                     str(rep.n_test)])
    _write_commented_csv(Path(path), comment_lines, rows)


# ---------------------------------------------------------------------------
# SVG figures (hand-rolled, no plotting dependency)

_FONT = "font-family=\"sans-serif\""


def _svg_open(width: int, height: int, timestamp: str | None) -> list[str]:
    lines = [
        f"<svg xmlns=\"http://www.w3.org/2000/svg\" "
        f"width=\"{width}\" height=\"{height}\" "
        f"viewBox=\"0 0 {width} {height}\">",
    ]
    if timestamp is not None:
        lines.append(f"<!-- generated: {timestamp} -->")
    lines.append(f"<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>")
    return lines


def _heat_color(frac: float) -> str:
    # white -> steel blue
    r = int(round(255 + (44 - 255) * frac))
    g = int(round(255 + (95 - 255) * frac))
    b = int(round(255 + (138 - 255) * frac))
    return f"rgb({r},{g},{b})"


def svg_confusion(path: str | Path, report: EvalReport,
                  timestamp: str | None = None) -> None:
    k = len(report.class_names)
    cell = 64
    margin = 110
    width = margin + k * cell + 20
    height = margin + k * cell + 20
    peak = max(max(row) for row in report.confusion) or 1
    lines = _svg_open(width, height, timestamp)
    lines.append(
        f"<text x=\"{margin + k * cell / 2:.1f}\" y=\"24\" {_FONT} "
        f"font-size=\"14\" text-anchor=\"middle\">predicted</text>"
    )
    lines.append(
        f"<text x=\"18\" y=\"{margin + k * cell / 2:.1f}\" {_FONT} "
        f"font-size=\"14\" text-anchor=\"middle\" "
        f"transform=\"rotate(-90 18 {margin + k * cell / 2:.1f})\">true</text>"
    )
    for j, name in enumerate(report.class_names):
        x = margin + j * cell + cell / 2
        lines.append(
            f"<text x=\"{x:.1f}\" y=\"{margin - 10}\" {_FONT} font-size=\"12\" "
            f"text-anchor=\"middle\">{name}</text>"
        )
        y = margin + j * cell + cell / 2
        lines.append(
            f"<text x=\"{margin - 10}\" y=\"{y + 4:.1f}\" {_FONT} font-size=\"12\" "
            f"text-anchor=\"end\">{name}</text>"
        )
    for i, row in enumerate(report.confusion):
        for j, v in enumerate(row):
            x = margin + j * cell
            y = margin + i * cell
            lines.append(
                f"<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" "
                f"fill=\"{_heat_color(v / peak)}\" stroke=\"#888\"/>"
            )
            dark = v / peak > 0.55
            lines.append(
                f"<text x=\"{x + cell / 2:.1f}\" y=\"{y + cell / 2 + 5:.1f}\" "
                f"{_FONT} font-size=\"14\" text-anchor=\"middle\" "
                f"fill=\"{'white' if dark else 'black'}\">{int(v)}</text>"
            )
    lines.append("</svg>")
    _write_svg(Path(path), lines)


def svg_importance(path: str | Path, items, timestamp: str | None = None,
                   top: int = 20) -> None:
    shown = list(items)[:top]
    bar_h = 22
    label_w = 330
    plot_w = 360
    height = 40 + bar_h * len(shown) + 20
    width = label_w + plot_w + 40
    peak = max((v for _, v in shown), default=0.0) or 1.0
    lines = _svg_open(width, height, timestamp)
    lines.append(
        f"<text x=\"{label_w}\" y=\"24\" {_FONT} font-size=\"14\">"
        f"importance (normalized split gain)</text>"
    )
    for i, (name, v) in enumerate(shown):
        y = 40 + i * bar_h
        w = plot_w * v / peak
        lines.append(
            f"<text x=\"{label_w - 8}\" y=\"{y + 15}\" {_FONT} font-size=\"11\" "
            f"text-anchor=\"end\">{name}</text>"
        )
        lines.append(
            f"<rect x=\"{label_w}\" y=\"{y + 3}\" width=\"{w:.2f}\" "
            f"height=\"{bar_h - 8}\" fill=\"#2c5f8a\"/>"
        )
        lines.append(
            f"<text x=\"{label_w + w + 6:.2f}\" y=\"{y + 15}\" {_FONT} "
            f"font-size=\"10\">{v:.4f}</text>"
        )
    lines.append("</svg>")
    _write_svg(Path(path), lines)


def svg_transfer(path: str | Path, reports: dict[str, EvalReport],
                 chance: float | None = None,
                 timestamp: str | None = None) -> None:
    bar_w = 140
    height = 260
    width = 80 + len(reports) * (bar_w + 40) + 20
    lines = _svg_open(width, height, timestamp)
    axis_y = height - 40
    scale = axis_y - 50
    lines.append(
        f"<text x=\"{width / 2:.0f}\" y=\"24\" {_FONT} font-size=\"14\" "
        f"text-anchor=\"middle\">transfer accuracy</text>"
    )
    for i, (direction, rep) in enumerate(reports.items()):
        x = 80 + i * (bar_w + 40)
        h = scale * rep.accuracy
        lines.append(
            f"<rect x=\"{x}\" y=\"{axis_y - h:.1f}\" width=\"{bar_w}\" "
            f"height=\"{h:.1f}\" fill=\"#2c5f8a\"/>"
        )
        lines.append(
            f"<text x=\"{x + bar_w / 2:.0f}\" y=\"{axis_y - h - 6:.1f}\" {_FONT} "
            f"font-size=\"12\" text-anchor=\"middle\">{rep.accuracy:.3f}</text>"
        )
        lines.append(
            f"<text x=\"{x + bar_w / 2:.0f}\" y=\"{axis_y + 18}\" {_FONT} "
            f"font-size=\"12\" text-anchor=\"middle\">{direction}</text>"
        )
    if chance is not None:
        y = axis_y - scale * chance
        lines.append(
            f"<line x1=\"60\" y1=\"{y:.1f}\" x2=\"{width - 20}\" y2=\"{y:.1f}\" "
            f"stroke=\"#b04030\" stroke-dasharray=\"6 4\"/>"
        )
        lines.append(
            f"<text x=\"{width - 20}\" y=\"{y - 6:.1f}\" {_FONT} font-size=\"11\" "
            f"text-anchor=\"end\" fill=\"#b04030\">chance {chance:.3f}</text>"
        )
    lines.append("</svg>")
    _write_svg(Path(path), lines)


def _write_svg(path: Path, lines) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
