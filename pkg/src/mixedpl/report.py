"""Plain-text summary of a FitResult."""
from __future__ import annotations

import math

from .estimation import SIGNIF_LEGEND, FitResult, WaldRow, wald_table

P_FLOOR = 2.2e-16
HEADERS = ("Estimate", "Std. Error", "z value", "Pr(>|z|)", "")


def _num(x: float, digits: int) -> str:
    return f"{x:.{digits}f}" if math.isfinite(x) else "NA"


def format_p(p: float) -> str:
    if not math.isfinite(p):
        return "NA"
    return "< 2.2e-16" if p < P_FLOOR else f"{p:.4g}"


def _block(title: str, rows: list[WaldRow]) -> list[str]:
    cells = [
        (r.name, _num(r.estimate, 6), _num(r.se, 6), _num(r.z, 4), format_p(r.p), r.stars)
        for r in rows
    ]
    name_w = max(len(c[0]) for c in cells)
    widths = [max(len(HEADERS[k]), *(len(c[k + 1]) for c in cells)) for k in range(4)]
    lines = [title]
    head = " " * name_w + "".join(" " + h.rjust(w) for h, w in zip(HEADERS, widths))
    lines.append(head.rstrip())
    for c in cells:
        line = c[0].ljust(name_w) + "".join(" " + v.rjust(w) for v, w in zip(c[1:5], widths))
        lines.append((line + " " + c[5]).rstrip())
    return lines


def render_report(result: FitResult) -> str:
    lines = [f"Formula: {result.formula}" if result.formula else "Formula: (not recorded)", ""]
    loglik = f"{result.log_pl:.7g}" if math.isfinite(result.log_pl) else "NA"
    stats = [
        ("nunits", str(result.n_units)),
        ("ndim", str(result.spec.q)),
        ("logLik", loglik),
        ("CLAIC", f"{result.claic:.2f}" if math.isfinite(result.claic) else "NA"),
        ("CLBIC", f"{result.clbic:.2f}" if math.isfinite(result.clbic) else "NA"),
    ]
    widths = [max(len(a), len(b)) for a, b in stats]
    lines.append(" ".join(a.rjust(w) for (a, _), w in zip(stats, widths)))
    lines.append(" ".join(b.rjust(w) for (_, b), w in zip(stats, widths)))

    table = wald_table(result)
    groups: dict[str, list[WaldRow]] = {}
    for row in table:
        groups.setdefault(row.group, []).append(row)
    for title, rows in groups.items():
        if rows:
            lines.append("")
            lines.extend(_block(title + ":", rows))
    lines += ["---", SIGNIF_LEGEND]

    if result.se is None:
        lines.append("Note: standard errors were not computed.")
    elif any(r.flagged for r in table):
        lines.append("Note: standard errors unavailable (sensitivity matrix singular).")
    if result.standardization:
        lines.append("Note: coefficients refer to standardized covariates (mean 0, sd 1).")
    if result.n_empty_units:
        lines.append(f"Note: {result.n_empty_units} units had no observed response.")
    if not result.converged:
        lines.append(f"Warning: optimizer did not converge (gradient norm {result.gradient_norm:.3g}).")
    return "\n".join(lines) + "\n"
