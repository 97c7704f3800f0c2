"""Scenario report files: JSON, aligned text table, routing CSV and a figure."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STRATEGIES = ("lcm", "random", "static", "oracle")


def _units(report: dict) -> list[tuple[str, dict, dict | None]]:
    """(label, {model: metrics block}, routing or None) per evaluated split."""
    out = []
    if "folds" in report:
        for fold in report["folds"]:
            c = fold["eval_catalog"]
            gnn_runs = fold["models"]["GNN.OP"]["runs"]
            for i, run in enumerate(gnn_runs):
                s = run["few_shot_seed"]
                zero = {m: e["runs"][i]["zero_shot"] for m, e in fold["models"].items()}
                if "few_shot" in run:
                    out.append((f"{c} zero-shot s{s}", zero, None))
                    tuned = {m: e["runs"][i]["few_shot"] for m, e in fold["models"].items()}
                    out.append((f"{c} few-shot s{s}", tuned, run.get("routing")))
                else:
                    out.append((f"{c} zero-shot", zero, run.get("routing")))
    else:
        models = dict(report["models"])
        out.append(("test", models, report.get("routing")))
        refs = {m: b["reference"] for m, b in models.items() if "reference" in b}
        if refs:
            out.append(("reference", refs, None))
    return out


def text_table(report: dict) -> str:
    units = _units(report)
    engines = []
    for _, models, _ in units:
        for b in models.values():
            for e in b["per_engine"]:
                if e not in engines:
                    engines.append(e)
    header = ["split", "model", "q_med", "q_mean", "q_p95"] + [f"{e} q_med" for e in engines]
    rows = [header]
    for label, models, _ in units:
        for m, b in models.items():
            row = [label, m, f"{b['q_med']:.3f}", f"{b['q_mean']:.3f}", f"{b['q_p95']:.3f}"]
            row += [f"{b['per_engine'][e]['q_med']:.3f}" if e in b["per_engine"] else "-" for e in engines]
            rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for k, r in enumerate(rows):
        cells = [c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    routing = [(label, rt) for label, _, rt in units if rt]
    if routing:
        lines.append("")
        head = ["split"] + [f"{s} [s]" for s in STRATEGIES] + ["static engine"]
        rr = [head] + [[label] + [f"{rt[s]:.1f}" for s in STRATEGIES] + [str(rt["static_engine"])] for label, rt in routing]
        w2 = [max(len(r[i]) for r in rr) for i in range(len(head))]
        for k, r in enumerate(rr):
            lines.append("  ".join(c.ljust(w) if i in (0, len(head) - 1) else c.rjust(w) for i, (c, w) in enumerate(zip(r, w2))).rstrip())
            if k == 0:
                lines.append("  ".join("-" * w for w in w2))
    return "\n".join(lines) + "\n"


def routing_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "split", "strategy", "total_seconds"])
    for label, _, rt in _units(report):
        if rt:
            for s in STRATEGIES:
                w.writerow([report["scenario"], label, s, repr(float(rt[s]))])
    return buf.getvalue()


def render_figure(report: dict, path) -> None:
    units = _units(report)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    routed = [(label, rt) for label, _, rt in units if rt]
    if routed:
        n = len(routed)
        width = 0.8 / len(STRATEGIES)
        for k, s in enumerate(STRATEGIES):
            xs = [i + (k - 1.5) * width for i in range(n)]
            ax1.bar(xs, [rt[s] for _, rt in routed], width, label=s)
        ax1.set_xticks(range(n))
        ax1.set_xticklabels([label for label, _ in routed], rotation=30, ha="right", fontsize=7)
        ax1.set_ylabel("workload runtime [s]")
        ax1.legend(fontsize=7)
    ax1.set_title("routing totals")
    pct = list(range(0, 101, 5))
    label, models, _ = units[-1] if report["scenario"] != "new_engine" else units[0]
    for m, b in models.items():
        ax2.plot(b["profile"], pct, label=m)
    ax2.set_xscale("log")
    ax2.set_xlabel("per-query mean Q-error")
    ax2.set_ylabel("percentile")
    ax2.set_title(f"Q-error profile ({label})")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: dict, out_dir, stem: str = "report") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.json", out / f"{stem}.txt", out / f"{stem}_routing.csv", out / f"{stem}.png"]
    paths[0].write_text(dumps_report(report))
    paths[1].write_text(text_table(report))
    paths[2].write_text(routing_csv(report))
    render_figure(report, paths[3])
    return paths
