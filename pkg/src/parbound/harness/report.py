"""Experiment reports: per-scale rows, fitted constants, verdicts."""

import csv
import io
import math
from dataclasses import dataclass, field

PASS = "pass"
FAIL = "fail"


def fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.10g}"
    return str(v)


@dataclass
class ExperimentReport:
    """Result of one experiment.

    ``rows`` hold per-scale measurements (one dict per scale and resolution,
    keys ``resolution``, ``scale``, ``measured``, ``predicted``, ``ratio`` and
    any extras). ``fitted`` maps resolution to the fitted constant.
    ``checks`` maps a check name to ``(passed, detail)``; the verdict is
    ``pass`` only if every check passes.
    """

    name: str
    rows: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def spread(self):
        vals = [v for v in self.fitted.values() if math.isfinite(v) and v > 0]
        if len(vals) < 2:
            return 1.0
        return max(vals) / min(vals)

    @property
    def verdict(self):
        ok = all(c[0] for c in self.checks.values())
        return PASS if ok and self.checks else FAIL

    @property
    def passed(self):
        return self.verdict == PASS

    def check(self, name, passed, detail=""):
        self.checks[name] = (bool(passed), detail)

    def columns(self):
        cols = ["resolution", "scale", "measured", "predicted", "ratio"]
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self, header=()):
        """Rows, then fitted constants and checks as trailing ``summary`` rows.

        Runtime is omitted so that identical inputs give identical bytes.
        """
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        w.writerow(cols)
        for r in self.rows:
            w.writerow([fmt(r.get(c, "")) for c in cols])
        for res in sorted(self.fitted):
            w.writerow(["summary_fitted", fmt(res), fmt(self.fitted[res])])
        w.writerow(["summary_spread", fmt(self.spread)])
        for k in sorted(self.extras):
            w.writerow(["summary_" + k, fmt(self.extras[k])])
        for k in sorted(self.checks):
            w.writerow(["summary_check", k, PASS if self.checks[k][0] else FAIL])
        w.writerow(["summary_verdict", self.verdict])
        return buf.getvalue()

    def summary(self):
        lines = [f"experiment: {self.name}", f"verdict: {self.verdict}"]
        for res in sorted(self.fitted):
            lines.append(f"fitted constant (resolution {res}): {fmt(self.fitted[res])}")
        lines.append(f"cross-resolution spread: {fmt(self.spread)}")
        for k in sorted(self.extras):
            lines.append(f"{k}: {fmt(self.extras[k])}")
        for k in sorted(self.checks):
            ok, detail = self.checks[k]
            lines.append(f"[{PASS if ok else FAIL}] {k}" + (f": {detail}" if detail else ""))
        lines.append(f"runtime: {self.runtime:.1f} s")
        return "\n".join(lines) + "\n"
