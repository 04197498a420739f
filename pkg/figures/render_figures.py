#!/usr/bin/env python3
"""Render the three study figures from a study_summary.csv file.

Usage:
    python render_figures.py <study_summary.csv> <out_dir> [--test-mode]

Writes bias_f.png, bias_sigma.png and coverage_f.png: one panel per group
size n, the number of groups m on the x axis, one line per method with
error bars at plus/minus two standard errors. The coverage figure draws a
horizontal reference at 0.95 and the bias figures at zero. The intercept
figure omits the GAM, which does not estimate an intercept scale.

The script only displays columns from the CSV; it never recomputes any
statistic. ``--test-mode`` prints the plotted arrays as JSON on stdout so
tests can assert they equal the CSV columns exactly.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = (
    "m", "n", "method",
    "bias_f_mean", "bias_f_se",
    "bias_sigma_mean", "bias_sigma_se",
    "coverage_f_mean", "coverage_f_se",
)

FIGURES = (
    # (key, mean column, se column, methods, reference, y label)
    ("bias_f", "bias_f_mean", "bias_f_se",
     ("GAM", "GAMM", "PML"), 0.0, "mean bias in the fitted smooth"),
    ("bias_sigma", "bias_sigma_mean", "bias_sigma_se",
     ("GAMM", "PML"), 0.0, "mean bias in the intercept scale"),
    ("coverage_f", "coverage_f_mean", "coverage_f_se",
     ("GAM", "GAMM", "PML"), 0.95, "mean 95% band coverage"),
)

METHOD_STYLE = {
    "GAM": dict(color="#888888", marker="s"),
    "GAMM": dict(color="#c0392b", marker="o"),
    "PML": dict(color="#2471a3", marker="^"),
}


def read_summary(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SystemExit(
                f"error: {path} is missing required column(s): "
                + ", ".join(missing))
        rows = []
        for raw in reader:
            rows.append({
                "m": int(raw["m"]),
                "n": int(raw["n"]),
                "method": raw["method"],
                **{c: (float(raw[c]) if raw[c] not in ("", None) else None)
                   for c in REQUIRED_COLUMNS[3:]},
            })
    return rows


def collect_series(rows, mean_col, se_col, methods):
    """Per-facet, per-method (m, value, se) arrays in CSV value order."""
    facets = []
    for n in sorted({r["n"] for r in rows}):
        series = []
        for method in methods:
            pts = [(r["m"], r[mean_col], r[se_col]) for r in rows
                   if r["n"] == n and r["method"] == method
                   and r[mean_col] is not None]
            pts.sort(key=lambda t: t[0])
            series.append({
                "method": method,
                "m": [p[0] for p in pts],
                "value": [p[1] for p in pts],
                "se": [p[2] for p in pts],
            })
        facets.append({"n": n, "series": series})
    return facets


def render(rows, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {}
    for key, mean_col, se_col, methods, reference, ylabel in FIGURES:
        facets = collect_series(rows, mean_col, se_col, methods)
        payload[key] = {"reference": reference, "facets": facets}
        ncols = max(len(facets), 1)
        fig, axes = plt.subplots(1, ncols, figsize=(5.0 * ncols, 4.0),
                                 squeeze=False, sharey=True)
        for ax, facet in zip(axes[0], facets or [{"n": None, "series": []}]):
            ax.axhline(reference, color="black", linewidth=0.8,
                       linestyle="--", zorder=1)
            for entry in facet["series"]:
                if not entry["m"]:
                    continue
                ax.errorbar(entry["m"], entry["value"],
                            yerr=[2.0 * s for s in entry["se"]],
                            label=entry["method"], capsize=3,
                            **METHOD_STYLE[entry["method"]])
            ax.set_xlabel("number of groups m")
            ax.set_xscale("log")
            if facet["n"] is not None:
                ax.set_title(f"group size n = {facet['n']}")
            if any(e["m"] for e in facet["series"]):
                ax.legend()
        axes[0][0].set_ylabel(ylabel)
        fig.tight_layout()
        fig.savefig(out_dir / f"{key}.png", dpi=150)
        plt.close(fig)
    return payload


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("summary_csv")
    parser.add_argument("out_dir")
    parser.add_argument("--test-mode", action="store_true",
                        help="print the plotted arrays as JSON on stdout")
    args = parser.parse_args(argv)
    rows = read_summary(args.summary_csv)
    if not rows:
        print("warning: summary file has no data rows; rendering empty axes",
              file=sys.stderr)
    payload = render(rows, args.out_dir)
    if args.test_mode:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
