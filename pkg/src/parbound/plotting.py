"""Static SVG figures rendered from report CSVs.

Figures are made from the CSV text rather than the in-memory report, so a
plot can always be regenerated from the artifact on disk. Output is
deterministic: no date metadata and a fixed SVG id salt.
"""

import csv
import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SVG_SALT = "parbound"


def read_rows(text):
    """Per-scale rows of a report CSV (comment and summary lines skipped)."""
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = []
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader, None)
    if header is None:
        return rows
    for rec in reader:
        if rec and rec[0].startswith("summary_"):
            continue
        rows.append(dict(zip(header, rec)))
    return rows


def _num(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return math.nan


def series(rows):
    """``{resolution: (scales, measured, predicted)}`` sorted by scale."""
    out = {}
    for r in rows:
        out.setdefault(r["resolution"], []).append(
            (_num(r["scale"]), _num(r["measured"]), _num(r["predicted"])))
    return {k: tuple(zip(*sorted(v))) for k, v in sorted(out.items(), key=lambda kv: _num(kv[0]))}


def render_svg(text, title=""):
    """Measured against predicted per scale on log axes; returns SVG text."""
    data = series(read_rows(text))
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        positive = False
        for res, (s, m, p) in data.items():
            pts = [(a, b) for a, b in zip(s, m) if a > 0 and b > 0]
            if pts:
                ax.plot(*zip(*pts), "o-", label=f"measured, N = {res}")
                positive = True
            pts = [(a, b) for a, b in zip(s, p) if a > 0 and b > 0]
            if pts:
                ax.plot(*zip(*pts), "--", label=f"predicted, N = {res}")
                positive = True
        if positive:
            ax.set_xscale("log", base=2)
            ax.set_yscale("log")
            ax.legend(fontsize="small")
        else:
            ax.text(0.5, 0.5, "no positive values to plot", ha="center", va="center",
                    transform=ax.transAxes)
        ax.set_xlabel("scale")
        ax.set_ylabel("value")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_svg(csv_text, path, title=""):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(csv_text, title))
    return path
