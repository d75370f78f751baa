"""Command-line interface.

Every command prints JSON to stdout (or ``--out``). Exit status is 0 on
success, 2 on invalid input and 3 on numerical failure. ``--config FILE``
reads a JSON object whose keys mirror the long flag names (dashes or
underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from faultcorr.corr import save_matrix_csv
from faultcorr.errors import FaultCorrError, NumericalError, ValidationError
from faultcorr.harness import (
    ExperimentReport,
    PipelineParams,
    correlation_at,
    group_size,
    phase_transition,
    run_pipeline,
    sweep,
    window_bounds,
)
from faultcorr.identify import enrich
from faultcorr.ingest import Dataset, LabelRegistry, load_csv, load_labels, save_csv, save_labels
from faultcorr.localize import ALGORITHMS, localize
from faultcorr.spectral import detect
from faultcorr.synth import WalkConfig, generate_walks

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 already; keep the message on stderr
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _window_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-av", type=int, default=10, help="running-mean window (even, steps)")
    p.add_argument("--tau-corr", type=int, default=200, help="correlation window (steps)")
    p.add_argument("--t-end", type=int, default=None, help="window end step (default: last valid)")


def _k_arg(text: str) -> str:
    if text == "auto" or text.startswith("elbow:"):
        return text
    try:
        if int(text) >= 1:
            return text
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 'auto', 'elbow:EPS' or a positive integer, got {text!r}")


def _loc_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algorithm", choices=ALGORITHMS, default="lowrank")
    p.add_argument("--k", type=_k_arg, default="auto", help="'auto' (sqrt N), 'elbow:EPS' or an integer")
    p.add_argument("--restarts", type=int, default=None, help="multi-start count for las/igp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = _Parser(prog="faultcorr", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of default option values")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaves: list[argparse.ArgumentParser] = []

    synth = sub.add_parser("synth", help="generate synthetic data")
    synth_sub = synth.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    walks = synth_sub.add_parser("walks", help="lazy random walks with a planted correlated group")
    walks.add_argument("--n", type=int, default=900)
    walks.add_argument("--k0", type=int, default=50)
    walks.add_argument("--t", type=int, default=2000)
    walks.add_argument("--p0", type=float, default=0.9)
    walks.add_argument("--pstep", type=float, default=0.05)
    walks.add_argument("--rho", type=float, default=0.5)
    walks.add_argument("--seed", type=int, default=0)
    walks.add_argument("--out-data")
    walks.add_argument("--out-labels")
    walks.add_argument("--out")
    walks.set_defaults(handler=cmd_synth_walks)
    leaves.append(walks)

    det = sub.add_parser("detect", help="spectral-gap test on one window")
    det.add_argument("--data")
    _window_args(det)
    det.add_argument("--matrix-csv", help="also dump the correlation matrix here")
    det.add_argument("--out")
    det.set_defaults(handler=cmd_detect)
    leaves.append(det)

    loc = sub.add_parser("localize", help="localize the correlated group in one window")
    loc.add_argument("--data")
    loc.add_argument("--labels")
    _window_args(loc)
    _loc_args(loc)
    loc.add_argument("--out")
    loc.set_defaults(handler=cmd_localize)
    leaves.append(loc)

    run = sub.add_parser("run", help="detection-gated pipeline over sliding windows")
    run.add_argument("--data")
    run.add_argument("--labels")
    _window_args(run)
    run.add_argument("--stride", type=int, default=None, help="steps between windows (default tau_av/2)")
    _loc_args(run)
    run.add_argument("--truth-tag", help="tag marking ground-truth sensors, for scoring")
    run.add_argument("--out")
    run.set_defaults(handler=cmd_run)
    leaves.append(run)

    ev = sub.add_parser("eval", help="benchmark experiments")
    ev_sub = ev.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    pt = ev_sub.add_parser("phase-transition", help="recovery probability versus N")
    pt.add_argument("--k0", type=int, default=16)
    pt.add_argument("--n-grid", default="32,64,128,256,512", help="comma-separated N values")
    pt.add_argument("--trials", type=int, default=100)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--tau-av", type=int, default=10)
    pt.add_argument("--tau-corr", type=int, default=200)
    pt.add_argument("--out-csv")
    pt.add_argument("--out")
    pt.set_defaults(handler=cmd_phase_transition)
    leaves.append(pt)

    spec = sub.add_parser("spectrum", help="eigenvalues of one window's correlation matrix")
    spec.add_argument("--data")
    _window_args(spec)
    spec.add_argument("--out-csv")
    spec.add_argument("--out")
    spec.set_defaults(handler=cmd_spectrum)
    leaves.append(spec)
    return parser, leaves


def _apply_config(path: str, leaves: Sequence[argparse.ArgumentParser]) -> None:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for leaf in leaves:
        known = {a.dest for a in leaf._actions}
        leaf.set_defaults(**{k: v for k, v in cfg.items() if k in known})


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ValidationError(f"missing required option(s): {', '.join(missing)}")


def _params(args: argparse.Namespace) -> PipelineParams:
    k_text = str(getattr(args, "k", "auto"))
    kwargs: dict = {}
    if k_text == "auto":
        kwargs["k_mode"] = "sqrtN"
    elif k_text.startswith("elbow:"):
        try:
            kwargs.update(k_mode="elbow", epsilon=float(k_text.split(":", 1)[1]))
        except ValueError:
            raise ValidationError(f"bad elbow epsilon in {k_text!r}") from None
    else:
        kwargs.update(k_mode="fixed", k=int(k_text))
    return PipelineParams(
        tau_av=args.tau_av,
        tau_corr=args.tau_corr,
        algorithm=getattr(args, "algorithm", "lowrank"),
        restarts=getattr(args, "restarts", None),
        seed=getattr(args, "seed", 0),
        workers=getattr(args, "workers", 1),
        **kwargs,
    )


def _t_end(dataset: Dataset, params: PipelineParams, t_end: int | None) -> int:
    return window_bounds(dataset.length, params)[1] if t_end is None else t_end


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def cmd_synth_walks(args: argparse.Namespace) -> dict:
    cfg = WalkConfig(n=args.n, k0=args.k0, t=args.t, p0=args.p0, p_step=args.pstep, rho=args.rho, seed=args.seed)
    sample = generate_walks(cfg)
    if args.out_data:
        save_csv(sample.dataset, args.out_data)
    if args.out_labels:
        save_labels(sample.labels, args.out_labels)
    return {
        "n": cfg.n, "k0": cfg.k0, "t": cfg.t, "p0": cfg.p0, "pstep": cfg.p_step, "rho": cfg.rho, "seed": cfg.seed,
        "truth_ids": [sample.dataset.sensors[i] for i in sample.truth],
        "data": args.out_data, "labels": args.out_labels,
    }


def cmd_detect(args: argparse.Namespace) -> dict:
    _require(args, "data")
    dataset = load_csv(args.data)
    params = _params(args)
    t_end = _t_end(dataset, params, args.t_end)
    cm = correlation_at(dataset, params, t_end)
    if args.matrix_csv:
        save_matrix_csv(cm, args.matrix_csv)
    out = detect(cm).to_dict()
    out.update(t_end=t_end, excluded=list(cm.excluded))
    return out


def cmd_localize(args: argparse.Namespace) -> dict:
    _require(args, "data")
    dataset = load_csv(args.data)
    labels = load_labels(args.labels) if args.labels else LabelRegistry()
    params = _params(args)
    t_end = _t_end(dataset, params, args.t_end)
    cm = correlation_at(dataset, params, t_end)
    spectrum = detect(cm)
    result = localize(cm, params.algorithm, group_size(cm, params), params.effective_restarts, params.seed, params.workers)
    report = enrich(result.selected_ids, labels, cm.sensors)
    unknown, _ = labels.join(dataset.sensors)
    return {
        "t_end": t_end,
        "detected": spectrum.detected,
        "margin": spectrum.margin,
        "localization": result.to_dict(),
        "cause_report": report.to_list(),
        "untagged_selected": report.untagged_selected,
        "unknown_label_ids": unknown,
        "excluded": list(cm.excluded),
    }


def cmd_run(args: argparse.Namespace) -> dict:
    _require(args, "data")
    dataset = load_csv(args.data)
    labels = load_labels(args.labels) if args.labels else LabelRegistry()
    params = _params(args)
    truth = None
    if args.truth_tag:
        truth = [s for s in dataset.sensors if args.truth_tag in labels.get(s)]
    if args.t_end is not None:
        report = ExperimentReport(params, [run_pipeline(dataset, labels, params, args.t_end, truth)],
                                  tuple(truth) if truth is not None else None)
    else:
        report = sweep(dataset, labels, params, args.stride, truth)
    return report.to_dict()


def cmd_phase_transition(args: argparse.Namespace) -> dict:
    try:
        grid = [int(x) for x in str(args.n_grid).split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"bad --n-grid {args.n_grid!r}") from None
    params = PipelineParams(tau_av=args.tau_av, tau_corr=args.tau_corr)
    table = phase_transition(args.k0, grid, args.trials, params, args.seed)
    if args.out_csv:
        Path(args.out_csv).write_text(table.to_csv(), encoding="utf-8")
    out = table.to_dict()
    out["crossing_n"] = table.crossing()
    return out


def cmd_spectrum(args: argparse.Namespace) -> dict:
    _require(args, "data")
    dataset = load_csv(args.data)
    params = _params(args)
    t_end = _t_end(dataset, params, args.t_end)
    eig = detect(correlation_at(dataset, params, t_end)).eigenvalues
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rank", "eigenvalue"])
            writer.writerows((i + 1, repr(float(v))) for i, v in enumerate(eig))
    return {"t_end": t_end, "eigenvalues": [float(v) for v in eig]}


def main(argv: Sequence[str] | None = None) -> int:
    parser, leaves = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre_cfg = argparse.ArgumentParser(add_help=False)
    pre_cfg.add_argument("--config")
    known, _ = pre_cfg.parse_known_args(argv)
    try:
        if known.config:
            _apply_config(known.config, leaves)
        args = parser.parse_args(argv)
        payload = args.handler(args)
        _emit(payload, getattr(args, "out", None))
    except NumericalError as exc:
        print(f"faultcorr: numerical error{_where(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FaultCorrError, OSError) as exc:
        print(f"faultcorr: error{_where(exc)}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


def _where(exc: Exception) -> str:
    stage = getattr(exc, "stage", None)
    return f" in {stage}" if stage else ""


if __name__ == "__main__":
    sys.exit(main())
