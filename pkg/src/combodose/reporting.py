"""Report output: JSON, delimited tables, and rendered figures.

Every simulate run writes oc_report.json plus CSV tables (one row per
true-curve grid point for the profiles, one row per trial for the summary)
and renders matplotlib figures alongside them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .simulate import OcReport, TrialResult


def write_oc_json(report: OcReport, path: Path):
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def write_profile_csv(report: OcReport, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "bias", "pct_correct_p10", "pct_correct_p20"])
        for i in range(report.true_curve_x.size):
            w.writerow([f"{report.true_curve_x[i]:.10g}",
                        f"{report.true_curve_y[i]:.10g}",
                        f"{report.bias[i]:.10g}",
                        f"{report.pct_correct_p10[i]:.10g}",
                        f"{report.pct_correct_p20[i]:.10g}"])


def write_trials_csv(results: Sequence[TrialResult], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "seed", "n_patients", "n_dlt", "dlt_rate",
                    "completed", "stopped_safety", "stopped_futility",
                    "reject_h0", "max_exceedance", "opt_x", "opt_y"])
        for r in results:
            opt = r.decision.opt_dose
            w.writerow([r.trial_index, r.seed, r.n_patients, r.n_dlt,
                        f"{r.dlt_rate:.10g}", int(r.completed),
                        int(r.stopped_safety), int(r.stopped_futility),
                        int(r.decision.reject_h0),
                        f"{r.max_exceedance:.10g}",
                        f"{opt.x:.10g}" if opt else "",
                        f"{opt.y:.10g}" if opt else ""])


def write_recommended_csv(report: OcReport, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in report.recommended_doses:
            w.writerow([f"{x:.10g}", f"{y:.10g}"])


def render_figures(report: OcReport, outdir: Path):
    """Render the standard figures next to the delimited output."""
    outdir = Path(outdir)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].axhline(0.0, color="grey", lw=0.8)
    axes[0].plot(report.true_curve_x, report.bias, color="C0")
    axes[0].set_xlabel("standardized dose x")
    axes[0].set_ylabel("pointwise average bias")
    axes[0].set_title(f"MTD-curve bias ({report.scenario_name}, J={report.j})")
    axes[1].plot(report.true_curve_x, report.pct_correct_p10, label="p = 0.1")
    axes[1].plot(report.true_curve_x, report.pct_correct_p20, label="p = 0.2")
    axes[1].set_ylim(0, 1.02)
    axes[1].set_xlabel("standardized dose x")
    axes[1].set_ylabel("fraction of trials within tolerance")
    axes[1].set_title("percent-correct recommendation")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(outdir / "curve_profiles.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.plot(report.true_curve_x, report.true_curve_y, color="black",
            label="true MTD curve")
    if report.recommended_doses.size:
        ax.scatter(report.recommended_doses[:, 0], report.recommended_doses[:, 1],
                   s=12, alpha=0.4, color="C1", label="recommended doses")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("standardized dose x")
    ax.set_ylabel("standardized dose y")
    ax.set_title(f"recommended optimal doses ({report.scenario_name})")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(outdir / "recommended_doses.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["rejection\nrate", "avg DLT\nrate", "stage-2\nefficacious",
              "futility\nstops", "safety\nstops"]
    values = [report.rejection_rate, report.average_dlt_rate,
              report.prop_stage2_efficacious, report.futility_stop_rate,
              report.safety_stop_rate]
    ax.bar(labels, values, color="C0")
    ax.set_ylim(0, 1)
    ax.set_title(f"summary ({report.scenario_name}, J={report.j})")
    fig.tight_layout()
    fig.savefig(outdir / "summary.png", dpi=150)
    plt.close(fig)


def write_report(report: OcReport, results: Sequence[TrialResult],
                 outdir: Path, figures: bool = True):
    """Write the full report bundle; returns the list of files written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_oc_json(report, outdir / "oc_report.json")
    write_profile_csv(report, outdir / "bias_profile.csv")
    write_trials_csv(results, outdir / "trials.csv")
    write_recommended_csv(report, outdir / "recommended_doses.csv")
    files = ["oc_report.json", "bias_profile.csv", "trials.csv",
             "recommended_doses.csv"]
    if figures:
        render_figures(report, outdir)
        files += ["curve_profiles.png", "recommended_doses.png", "summary.png"]
    return [outdir / f for f in files]
