"""Static HTML and ANSI rendering of annotations and analysis reports.

Reports are single self-contained HTML files with inline styles; token
annotations color each token by its assigned atom, cycling a fixed
16-color palette.
"""

from __future__ import annotations

import html

from .mining import TokenAnnotation

# 16 distinguishable background colors for atom classes.
_PALETTE = [
    "#e6194b", "#3cb44b", "#b8860b", "#4363d8", "#f58231", "#911eb4",
    "#2f9599", "#f032e6", "#6b8e23", "#c64756", "#008080", "#8b5a2b",
    "#9a6324", "#556b2f", "#800000", "#7f6000",
]

_ANSI_COLORS = [31, 32, 33, 34, 35, 36, 91, 92, 93, 94, 95, 96, 90, 37, 97, 30]

_HTML_SHELL = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ font-family: sans-serif; margin: 2em; color: #222; }}
table {{ border-collapse: collapse; margin: 1em 0; }}
th, td {{ border: 1px solid #999; padding: 0.3em 0.7em; text-align: right; }}
th {{ background: #eee; }}
.tok {{ padding: 0.1em 0.25em; margin: 0.05em; border-radius: 3px; color: #fff;
       display: inline-block; }}
.unassigned {{ background: #ccc; color: #333; }}
{atom_css}
</style>
</head>
<body>
<h1>{title}</h1>
{body}
</body>
</html>
"""


def _atom_css(num_atoms: int) -> str:
    rules = []
    for p in range(num_atoms):
        rules.append(f".atom-{p} {{ background: {_PALETTE[p % len(_PALETTE)]}; }}")
    return "\n".join(rules)


def _default_texts(annotation: TokenAnnotation) -> list[list[str]]:
    return [
        [f"t{t}" for t in range(len(sample))] for sample in annotation.assignments
    ]


def _text_for(texts: list[list[str]], i: int, t: int) -> str:
    if i < len(texts) and t < len(texts[i]):
        return str(texts[i][t])
    return f"t{t}"


def annotation_to_html(
    annotation: TokenAnnotation, token_texts: list[list[str]] | None = None
) -> str:
    """One span per token, CSS class per assigned atom."""
    texts = token_texts if token_texts is not None else _default_texts(annotation)
    parts = []
    legend = ["<h2>Atoms</h2><table><tr><th>atom</th><th>experts (layer, expert)</th></tr>"]
    for atom in annotation.atoms:
        shown = atom.expert_pairs if atom.expert_pairs is not None else atom.expert_rows
        legend.append(
            f'<tr><td><span class="tok atom-{atom.atom_index}">{atom.atom_index}</span></td>'
            f"<td>{html.escape(str(list(shown)))}</td></tr>"
        )
    legend.append("</table>")
    parts.append("".join(legend))
    for i, sample in enumerate(annotation.assignments):
        words = []
        for t, assigned in enumerate(sample):
            text = html.escape(_text_for(texts, i, t))
            cls = "unassigned" if assigned is None else f"atom-{assigned}"
            words.append(f'<span class="tok {cls}">{text}</span>')
        parts.append(f"<h2>Sample {i}</h2><p>{' '.join(words)}</p>")
    return _HTML_SHELL.format(
        title=f"Token annotation (level {annotation.level_index})",
        atom_css=_atom_css(len(annotation.atoms)),
        body="\n".join(parts),
    )


def annotation_to_ansi(
    annotation: TokenAnnotation, token_texts: list[list[str]] | None = None
) -> str:
    """Terminal rendering, cycling 16 colors over atom indices."""
    texts = token_texts if token_texts is not None else _default_texts(annotation)
    lines = []
    for i, sample in enumerate(annotation.assignments):
        words = []
        for t, assigned in enumerate(sample):
            text = _text_for(texts, i, t)
            if assigned is None:
                words.append(text)
            else:
                code = _ANSI_COLORS[assigned % len(_ANSI_COLORS)]
                words.append(f"\x1b[{code}m{text}\x1b[0m")
        lines.append(f"sample {i}: " + " ".join(words))
    return "\n".join(lines) + "\n"


def _table(headers: list[str], rows: list[list]) -> str:
    head = "".join(f"<th>{html.escape(str(h))}</th>" for h in headers)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(str(c))}</td>" for c in row) + "</tr>"
        for row in rows
    )
    return f"<table><tr>{head}</tr>{body}</table>"


def report_to_html(report: dict) -> str:
    """Render the report payload as one self-contained page."""
    sections = []
    contrib = report["contributions"]
    rows = [
        [i, f"{v:.6g}", int(report["mask"]["mask"][i])]
        for i, v in enumerate(contrib["e"])
    ]
    sections.append("<h2>Expert contributions</h2>")
    sections.append(_table(["expert", "e", "kept"], rows))
    sections.append(f"<p>threshold f = {contrib['f']:.6g}</p>")
    sections.append("<h2>Pattern usage</h2>")
    sections.append(
        _table(["pattern", "usage"], [[p, f"{v:.6g}"] for p, v in enumerate(contrib["r_sum"])])
    )
    mask = report["mask"]
    sections.append(
        f"<p>kept {len(mask['kept'])} of {mask['ne']} experts "
        f"(k1 = {mask['k1']}, k2 = {mask['k2']}); removal trace: {mask['trace']}</p>"
    )
    if report.get("param_counts"):
        sections.append("<h2>Parameter budget after pruning</h2>")
        sections.append(
            _table(
                ["pruning %", "parameters (B)"],
                [[e["k_percent"], f"{e['params_b']:.4g}"] for e in report["param_counts"]],
            )
        )
    if report.get("relative_change") is not None:
        sections.append(
            f"<p>relative accuracy change: {report['relative_change']:+.4%}</p>"
        )
    if report.get("coverage"):
        cov = report["coverage"]
        sections.append(
            f"<p>coverage: {cov['n_top']} of {cov['n_total']} atoms match the top "
            f"{cov['k_percent']}% combinations ({cov['coverage']:.1%})</p>"
        )
    return _HTML_SHELL.format(
        title="Expert collaboration analysis", atom_css="", body="\n".join(sections)
    )
