"""Command-line pipeline: synth | learn | mine | coverage | profiles | prune | annotate | report.

Every subcommand reads MOEACT/JSON inputs, writes schema-validated JSON
(plus HTML where rendering applies), and drops a run manifest next to its
outputs.  Errors exit nonzero with a machine-readable category on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import activations, dictionary, metrics, mining, pruning, synth
from .errors import ConfigError, FormatError, ToolError
from .manifest import RunManifest, dump_json
from .render import annotation_to_ansi, annotation_to_html, report_to_html
from .schema import validate_payload


def _read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc


def _write_payload(kind: str, payload: dict, path: Path, manifest: RunManifest) -> None:
    validate_payload(kind, payload)
    dump_json(payload, path)
    manifest.add_output(path)


def _load_matrix(path, manifest: RunManifest, normalize: bool = False):
    manifest.add_input(path)
    tensor = activations.read_moeact(path)
    if tensor.granularity == activations.TOKEN:
        tensor = activations.aggregate_tokens(tensor)
    return activations.flatten_to_matrix(tensor, normalize=normalize)


def _load_hierarchy(path, manifest: RunManifest) -> dictionary.Hierarchy:
    manifest.add_input(path)
    return dictionary.hierarchy_from_json(_read_json(path))


def _layout_of(hierarchy: dictionary.Hierarchy) -> activations.ExpertLayout | None:
    if hierarchy.layout is None:
        return None
    return activations.ExpertLayout(*hierarchy.layout)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_synth(args, manifest: RunManifest) -> None:
    if not args.config:
        raise ConfigError("synth requires --config with the generator settings")
    manifest.add_input(args.config)
    raw = _read_json(args.config)
    patterns = tuple(
        synth.PlantedPattern(tuple(p["experts"]), tuple(p["weights"]))
        for p in raw.get("patterns", [])
    )
    config = synth.SynthConfig(
        ne=int(raw["ne"]),
        ns=int(raw["ns"]),
        patterns=patterns,
        activation_prob=float(raw.get("activation_prob", 0.3)),
        noise_sigma=float(raw.get("noise_sigma", 0.0)),
        seed=int(args.seed if args.seed is not None else raw.get("seed", 0)),
        gain_range=tuple(raw.get("gain_range", (0.5, 1.5))),
        layout=tuple(raw["layout"]) if raw.get("layout") else None,
    )
    matrix, fires = synth.generate(config)
    layout = config.expert_layout()
    tensor = activations.ActivationTensor(
        granularity=activations.SENTENCE,
        num_samples=config.ns,
        num_layers=layout.num_layers,
        num_experts_per_layer=layout.experts_per_layer,
        values=matrix.data.T.reshape(
            config.ns, layout.num_layers, layout.experts_per_layer
        ),
    )
    out = Path(args.output_dir)
    activations.write_moeact(tensor, out / "data.moeact")
    manifest.add_output(out / "data.moeact")
    _write_payload(
        "groundtruth", synth.firings_to_json(config, fires), out / "groundtruth.json", manifest
    )


def _capacities(args) -> tuple[int, ...]:
    if args.np:
        caps = tuple(int(v) for v in args.np.split(","))
    else:
        caps = (8,)
    levels = args.levels if args.levels is not None else len(caps)
    if len(caps) == 1 and levels > 1:
        caps = tuple(caps[0] * 2**i for i in range(levels))
    if len(caps) != levels:
        raise ConfigError(f"--np names {len(caps)} capacities but --levels is {levels}")
    return caps


def _cmd_learn(args, manifest: RunManifest) -> None:
    matrix = _load_matrix(args.input, manifest, normalize=args.normalize)
    overrides = _read_json(args.config) if args.config else {}
    if args.config:
        manifest.add_input(args.config)
    config = dictionary.DictionaryConfig(
        capacities=tuple(overrides.get("capacities", _capacities(args))),
        lambda0=float(overrides.get("lambda0", args.lambda0)),
        lambda1=float(overrides.get("lambda1", args.lambda1)),
        lambda2=float(overrides.get("lambda2", args.lambda2)),
        learning_rate=float(overrides.get("learning_rate", 1.0)),
        max_iters=int(overrides.get("max_iters", 500)),
        convergence_tol=float(overrides.get("convergence_tol", 1e-6)),
        seed=int(args.seed if args.seed is not None else overrides.get("seed", 0)),
    )
    hierarchy = dictionary.fit_hierarchy(matrix, config)
    out = Path(args.output_dir)
    _write_payload("hierarchy", dictionary.hierarchy_to_json(hierarchy), out / "hierarchy.json", manifest)


def _cmd_mine(args, manifest: RunManifest) -> None:
    matrix = _load_matrix(args.input, manifest)
    table = mining.exhaustive_coactivation(matrix, threshold=args.theta, order=args.order)
    out = Path(args.output_dir)
    _write_payload(
        "coactivation", mining.coactivation_to_json(table), out / "coactivation.json", manifest
    )


def _cmd_coverage(args, manifest: RunManifest) -> None:
    hierarchy = _load_hierarchy(args.input, manifest)
    if not args.table:
        raise ConfigError("coverage requires --table with a co-activation JSON")
    manifest.add_input(args.table)
    table = mining.coactivation_from_json(_read_json(args.table))
    level = hierarchy.level(args.level)
    atoms = mining.binarize_atoms(level, args.tau, layout=_layout_of(hierarchy))
    value = mining.coverage(atoms, table, args.top_percent)
    top = table.top_fraction(args.top_percent)
    n_top = sum(
        1 for a in atoms if any(a.row_set.issuperset(combo) for combo, _ in top)
    )
    payload = {
        "k_percent": args.top_percent,
        "n_top": n_top,
        "n_total": len(atoms),
        "coverage": value,
        "level": args.level,
        "tau": args.tau,
        "atoms": mining.atoms_to_json(atoms),
    }
    _write_payload("coverage", payload, Path(args.output_dir) / "coverage.json", manifest)


def _cmd_profiles(args, manifest: RunManifest) -> None:
    matrix = _load_matrix(args.input, manifest)
    if not args.labels:
        raise ConfigError("profiles requires --labels with the JSON-lines sidecar")
    manifest.add_input(args.labels)
    labels = activations.read_labels(args.labels, num_samples=matrix.num_samples)
    profiles = mining.domain_profiles(matrix, labels, threshold=args.theta)
    sim = mining.similarity_matrix(profiles)
    payload = mining.profiles_to_json(profiles, sim)
    _write_payload("profiles", payload, Path(args.output_dir) / "profiles.json", manifest)


def _cmd_prune(args, manifest: RunManifest) -> None:
    hierarchy = _load_hierarchy(args.input, manifest)
    level = hierarchy.level(args.level)
    mask = pruning.prune(level.dictionary, level.coding, args.k1, args.k2)
    payload = pruning.prune_mask_to_json(mask, layout=_layout_of(hierarchy))
    _write_payload("mask", payload, Path(args.output_dir) / "mask.json", manifest)


def _cmd_annotate(args, manifest: RunManifest) -> None:
    manifest.add_input(args.input)
    tensor = activations.read_moeact(args.input)
    if not args.hierarchy:
        raise ConfigError("annotate requires --hierarchy with a learned dictionary")
    hierarchy = _load_hierarchy(args.hierarchy, manifest)
    annotation = mining.annotate_tokens(tensor, hierarchy, args.level, args.tau)
    texts = None
    if args.tokens:
        manifest.add_input(args.tokens)
        texts = _read_json(args.tokens)
    payload = {
        "level": annotation.level_index,
        "tau": annotation.tau,
        "samples": [
            {"sample": i, "assignments": [a for a in sample]}
            for i, sample in enumerate(annotation.assignments)
        ],
        "atoms": mining.atoms_to_json(list(annotation.atoms)),
    }
    out = Path(args.output_dir)
    _write_payload("annotation", payload, out / "annotation.json", manifest)
    (out / "annotation.html").write_text(annotation_to_html(annotation, texts), encoding="utf-8")
    manifest.add_output(out / "annotation.html")
    (out / "annotation.txt").write_text(annotation_to_ansi(annotation, texts), encoding="utf-8")
    manifest.add_output(out / "annotation.txt")


def _cmd_report(args, manifest: RunManifest) -> None:
    hierarchy = _load_hierarchy(args.input, manifest)
    level = hierarchy.level(args.level)
    state = pruning.contribution_scores(level.dictionary, level.coding)
    f, _ = pruning.threshold_mask(state.e, args.k1)
    mask = pruning.prune(level.dictionary, level.coding, args.k1, args.k2)
    mask_payload = pruning.prune_mask_to_json(mask, layout=_layout_of(hierarchy))
    coverage_block = None
    if args.table:
        manifest.add_input(args.table)
        table = mining.coactivation_from_json(_read_json(args.table))
        atoms = mining.binarize_atoms(level, args.tau, layout=_layout_of(hierarchy))
        top = table.top_fraction(args.top_percent)
        n_top = sum(
            1 for a in atoms if any(a.row_set.issuperset(combo) for combo, _ in top)
        )
        coverage_block = {
            "k_percent": args.top_percent,
            "n_top": n_top,
            "n_total": len(atoms),
            "coverage": mining.coverage(atoms, table, args.top_percent),
        }
    rel = None
    if args.acc_pruned is not None and args.acc_base is not None:
        rel = metrics.relative_change(args.acc_pruned, args.acc_base)
    payload = {
        "contributions": {
            "r_sum": [float(v) for v in state.r_sum],
            "e": [float(v) for v in state.e],
            "f": f,
        },
        "mask": mask_payload,
        "param_counts": [
            {"k_percent": k, "params_b": metrics.pruned_param_count(k)}
            for k in (0.0, 25.0, 50.0, 75.0, 100.0)
        ],
        "relative_change": rel,
        "coverage": coverage_block,
        "loss_traces": [list(lv.loss_trace) for lv in hierarchy.levels],
    }
    out = Path(args.output_dir)
    _write_payload("report", payload, out / "report.json", manifest)
    (out / "report.html").write_text(report_to_html(payload), encoding="utf-8")
    manifest.add_output(out / "report.html")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moepatterns",
        description="Mine expert collaboration patterns and derive pruning masks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tau=False, theta=False, ks=False):
        p.add_argument("--output-dir", default=".", help="directory for outputs")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON config file")
        if tau:
            p.add_argument("--tau", type=float, default=0.5, help="atom binarization threshold")
        if theta:
            p.add_argument(
                "--theta",
                type=float,
                default=None,
                help="activation cutoff (default: per-expert 75th percentile of nonzeros)",
            )
        if ks:
            p.add_argument("--k1", type=float, default=0.5, help="score quantile kept")
            p.add_argument("--k2", type=float, default=0.25, help="target pruning ratio")

    p = sub.add_parser("synth", help="generate planted synthetic activation data")
    common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("learn", help="fit the dictionary hierarchy to a MOEACT file")
    p.add_argument("--input", required=True)
    p.add_argument("--levels", type=int, default=None, help="hierarchy depth")
    p.add_argument("--np", default=None, help="capacities, e.g. '12' or '4,8'")
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--normalize", action="store_true", help="divide columns by token count")
    common(p)
    p.set_defaults(handler=_cmd_learn)

    p = sub.add_parser("mine", help="enumerate co-activation frequencies")
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=int, choices=(2, 3), default=2)
    common(p, theta=True)
    p.set_defaults(handler=_cmd_mine)

    p = sub.add_parser("coverage", help="dictionary coverage of top combinations")
    p.add_argument("--input", required=True, help="hierarchy JSON")
    p.add_argument("--table", required=False, help="co-activation JSON")
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--top-percent", type=float, default=10.0)
    common(p, tau=True)
    p.set_defaults(handler=_cmd_coverage)

    p = sub.add_parser("profiles", help="per-domain expert activation profiles")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=False)
    common(p, theta=True)
    p.set_defaults(handler=_cmd_profiles)

    p = sub.add_parser("prune", help="derive an expert mask from a learned level")
    p.add_argument("--input", required=True, help="hierarchy JSON")
    p.add_argument("--level", type=int, default=1)
    common(p, ks=True)
    p.set_defaults(handler=_cmd_prune)

    p = sub.add_parser("annotate", help="assign tokens to dictionary atoms")
    p.add_argument("--input", required=True, help="token-granularity MOEACT")
    p.add_argument("--hierarchy", required=False)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--tokens", default=None, help="JSON list of per-sample token strings")
    common(p, tau=True)
    p.set_defaults(handler=_cmd_annotate)

    p = sub.add_parser("report", help="single-file analysis report")
    p.add_argument("--input", required=True, help="hierarchy JSON")
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--table", required=False, help="co-activation JSON")
    p.add_argument("--top-percent", type=float, default=10.0)
    p.add_argument("--acc-base", type=float, default=None)
    p.add_argument("--acc-pruned", type=float, default=None)
    common(p, tau=True, ks=True)
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=args.command,
        argv=list(argv) if argv is not None else sys.argv[1:],
        config={
            k: v
            for k, v in sorted(vars(args).items())
            if k not in ("handler",) and not callable(v)
        },
        seed=getattr(args, "seed", None),
    )
    start = time.perf_counter()
    try:
        args.handler(args, manifest)
    except ToolError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "missing-file", "message": str(exc)}), file=sys.stderr)
        return 1
    manifest.duration_s = time.perf_counter() - start
    validate_payload("manifest", manifest.to_json())
    manifest.write(out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
