"""Report rendering: canonical JSON and a plain-text narrative."""

from __future__ import annotations

import json

from .pipeline import Report


def render_json(report: Report, include_timing: bool = False) -> str:
    return json.dumps(report.to_json(include_timing), indent=2, sort_keys=True) + "\n"


def render_text(report: Report, include_timing: bool = False) -> str:
    t = report.target
    out = [f"target   {t['name']} {t['address']} (DApp: {t['dapp'] or 'unknown'})"]
    d = report.dataset
    out.append(f"replayed {d['txs_replayed']} transactions, {d['reverted']} reverted")
    out.append("")
    out.append("manipulable functions (importance = invoke + read + write)")
    if not report.ranking:
        out.append("  none")
    for r in report.ranking:
        view = " view" if r["view"] else ""
        out.append(f"  {r['importance']:>6}  {r['contract']}.{r['function']}{view}"
                   f"  [{r['c_invoke']} invoke, {r['c_read']} read, {r['c_write']} write]")
    out.append("")
    out.append("candidate entries")
    if not report.candidates:
        out.append("  none")
    for c in report.candidates:
        out.append(f"  {c['contract']}.{c['entry']['function']} -> shared {', '.join(c['shared_state'])}"
                   f" with {c['manipulable']['function']} (importance {c['importance']})")
    out.append("")
    if report.verification is None:
        out.append("verification skipped")
    else:
        v = report.verification
        out.append(f"verification: {v['verify_calls']} cases run"
                   + (" (budget exhausted)" if v["budget_exhausted"] else ""))
        out.append(f"findings: {len(report.findings)}")
        for i, f in enumerate(report.findings, 1):
            slots = ", ".join(s["var"] or s["slot"] for s in f["overlap_slots"])
            out.append(f"[{i}] {f['entry']['function']} -> {f['victim']['function']} via "
                       f"{f['manipulable']['function']} on {slots}")
            out.extend(f"    {line}" for line in f["narrative"])
    if include_timing and report.timing:
        out.append("")
        out.append("timing: " + ", ".join(f"{k} {v:.3f}s" for k, v in report.timing.items()))
    return "\n".join(out) + "\n"


def render_report(report: Report, fmt: str = "json", include_timing: bool = False) -> str:
    return render_text(report, include_timing) if fmt == "text" else render_json(report, include_timing)
