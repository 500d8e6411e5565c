"""Markdown and CSV rendering of evaluation reports and experiment results.

Markdown tables follow the per-class layout (class column, Prec./Rec./F1
columns, accuracy footer). When several results of the same kind are
grouped, the best value in each row is bold, ties all bold. CSV output
carries raw ``repr`` floats so re-parsing reproduces the JSON values
exactly.
"""

from __future__ import annotations

import io


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def report_markdown(report: dict, title: str = "") -> str:
    """One EvalReport dict as a markdown table."""
    out = io.StringIO()
    if title:
        out.write(f"### {title}\n\n")
    out.write("| Class | Prec. | Rec. | F1 |\n|---|---|---|---|\n")
    for row in report["per_class"]:
        out.write(f"| {row['label']} | {_fmt(row['precision'])} "
                  f"| {_fmt(row['recall'])} | {_fmt(row['f1'])} |\n")
    out.write(f"| **Accuracy** | | | **{_fmt(report['accuracy'])}** |\n")
    tp = report.get("throughput") or {}
    if tp:
        out.write("\n")
        for phase in ("train", "validation", "inference"):
            if phase in tp:
                out.write(f"- {phase}: {tp[phase]:.0f} samples per second\n")
    return out.getvalue()


def _bold_maxima(values: list[float]) -> list[str]:
    best = max(values)
    return [f"**{_fmt(v)}**" if v == best else _fmt(v) for v in values]


def comparison_markdown(results: list[dict], report_key: str = "test",
                        title: str = "") -> str:
    """Model-vs-model table: rows are classes x metrics, columns models.

    Every result must share a label space; the best value per row is bold.
    """
    out = io.StringIO()
    if title:
        out.write(f"### {title}\n\n")
    models = [r["spec"].get("model", f"model{i}") for i, r in enumerate(results)]
    reports = [r["reports"][report_key] for r in results]
    header = "| Class | Metric | " + " | ".join(models) + " |\n"
    out.write(header)
    out.write("|---|---|" + "---|" * len(models) + "\n")
    labels = [row["label"] for row in reports[0]["per_class"]]
    for li, label in enumerate(labels):
        for metric in ("precision", "recall", "f1"):
            values = [rep["per_class"][li][metric] for rep in reports]
            cells = _bold_maxima(values)
            out.write(f"| {label} | {metric} | " + " | ".join(cells) + " |\n")
    acc = _bold_maxima([rep["accuracy"] for rep in reports])
    out.write("| **Accuracy** | | " + " | ".join(acc) + " |\n")
    return out.getvalue()


def per_family_markdown(result: dict, title: str = "") -> str:
    out = io.StringIO()
    if title:
        out.write(f"### {title}\n\n")
    out.write("| Family | Prec. | Rec. | F1 | Acc. |\n|---|---|---|---|---|\n")
    for fam, row in result["per_family"].items():
        out.write(f"| {fam} | {_fmt(row['precision'])} | {_fmt(row['recall'])} "
                  f"| {_fmt(row['f1'])} | {_fmt(row['accuracy'])} |\n")
    mean_acc = result["metadata"].get("mean_accuracy")
    if mean_acc is not None:
        out.write(f"| **Mean accuracy** | | | | **{_fmt(mean_acc)}** |\n")
    return out.getvalue()


def report_csv(report: dict) -> str:
    """Raw values, one row per class; floats written with repr so the CSV
    round-trips exactly."""
    out = io.StringIO()
    out.write("label,precision,recall,f1,support\n")
    for row in report["per_class"]:
        out.write(f"{row['label']},{row['precision']!r},{row['recall']!r},"
                  f"{row['f1']!r},{row['support']}\n")
    out.write(f"__accuracy__,{report['accuracy']!r},,,\n")
    return out.getvalue()


def parse_report_csv(text: str) -> dict:
    """Inverse of :func:`report_csv` for round-trip checks."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    per_class = []
    accuracy = None
    for line in lines[1:]:
        parts = line.split(",")
        if parts[0] == "__accuracy__":
            accuracy = float(parts[1])
            continue
        per_class.append({
            "label": parts[0], "precision": float(parts[1]),
            "recall": float(parts[2]), "f1": float(parts[3]),
            "support": int(parts[4]),
        })
    return {"per_class": per_class, "accuracy": accuracy}


def render_results(results: list[dict]) -> str:
    """Full markdown document for a list of ExperimentResult dicts, grouped
    by experiment kind; same-kind groups become comparison tables."""
    by_kind: dict[str, list[dict]] = {}
    for r in results:
        by_kind.setdefault(r["spec"]["kind"], []).append(r)
    out = io.StringIO()
    for kind, group in by_kind.items():
        if kind == "binary_per_family":
            for r in group:
                out.write(per_family_markdown(
                    r, f"{kind} ({r['spec'].get('model')})"))
                out.write("\n")
        elif kind == "cross_dataset":
            for r in group:
                for mode in ("full", "no_tld"):
                    out.write(report_markdown(
                        r["reports"][mode],
                        f"{kind} {mode} ({r['spec'].get('model')})"))
                    out.write("\n")
        elif len(group) > 1:
            out.write(comparison_markdown(group, "test", kind))
            out.write("\n")
        else:
            r = group[0]
            out.write(report_markdown(
                r["reports"]["test"], f"{kind} ({r['spec'].get('model')})"))
            out.write("\n")
    return out.getvalue()
