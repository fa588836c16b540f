"""Command line entry point: ``exitbarrier {compute,simulate,report}``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .bte import MODES, compute_bte
from .ingest import (
    SCALE_HALF_STARS,
    SCALE_ML1M,
    BinningPolicy,
    DataWarning,
    ParseError,
    bin_events,
    dump_binned,
    format_tag_relevance,
    parse_ratings,
    parse_tag_relevance,
)
from .preference import preference_series, thresholds_csv
from .report import PlotSpec, emit_bte_report, output_name, parse_bte_report, render_plot, write_atomic
from .simloop import (
    ConfigError,
    SimConfig,
    entropy,
    format_sim_config,
    load_sim_config,
    run_simulation,
    trace_to_ratings,
)

log = logging.getLogger("exitbarrier")

OUT_ENV = "EXITBARRIER_OUT"


class CommandError(RuntimeError):
    """Fatal problem reported to the user with a non-zero exit status."""


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV)
    if not out:
        raise CommandError(f"no output directory; pass --out or set {OUT_ENV}")
    return Path(out)


def _csv_list(text):
    if text is None:
        return None
    return [p.strip() for p in text.split(",") if p.strip()]


def _user_filter(text):
    if text is None or text.strip() == "all":
        return None
    try:
        return [int(u) for u in _csv_list(text)]
    except ValueError:
        raise CommandError(f"--users expects comma separated integer ids or 'all', got {text!r}") from None


def _ratings_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "dat"


class _Writer:
    """Writes outputs atomically and remembers their digests for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}

    def __call__(self, name: str, data: bytes | str):
        if isinstance(data, str):
            data = data.encode("utf-8")
        write_atomic(self.out / name, data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def manifest(self, doc: dict):
        doc = dict(doc, outputs=dict(sorted(self.files.items())))
        write_atomic(self.out / "manifest.json", json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _analyze(write, binned, relevance, args, config_echo, *, plots: bool, series_csv: bool):
    """BtE pipeline for one user; returns the report or None when too short."""
    series = preference_series(binned, relevance)
    if len(series) < args.nu + 1:
        return None
    report, thresholds = compute_bte(series, args.nu, args.k, args.mode, config=config_echo)
    uid = binned.user_id
    write(output_name(uid, "bte", "json"), emit_bte_report(report, "json"))
    if series_csv:
        write(output_name(uid, "series", "csv"), thresholds_csv(series, thresholds))
    if plots:
        cats = tuple(args.plot_categories) if args.plot_categories else None
        write(output_name(uid, "bte-by-category", "svg"),
              render_plot(PlotSpec(uid, "bte-by-category", categories=cats), report=report))
        write(output_name(uid, "series-with-thresholds", "svg"),
              render_plot(PlotSpec(uid, "series-with-thresholds", categories=cats, top_n=None if cats else 2,
                                   height=500), series, thresholds, report))
    return report


def cmd_compute(args) -> int:
    out = _out_dir(args)
    ratings_path = Path(args.ratings)
    relevance_path = Path(args.relevance)
    for p in (ratings_path, relevance_path):
        if not p.is_file():
            raise CommandError(f"input file not found: {p}")
    policy = BinningPolicy.parse(args.bin)
    scale = SCALE_ML1M if args.scale == "ml1m" else SCALE_HALF_STARS
    fmt = _ratings_format(ratings_path, args.format)
    try:
        events, summary = parse_ratings(ratings_path, fmt, scale=scale, strict=args.strict)
        relevance = parse_tag_relevance(relevance_path, strict=args.strict, categories=args.categories)
    except (ParseError, KeyError) as exc:
        raise CommandError(str(exc)) from None
    if relevance.n_categories == 0:
        raise CommandError("no categories selected from the relevance file")
    binned = bin_events(events, policy)
    wanted = _user_filter(args.users)
    if wanted is not None:
        absent = [u for u in wanted if u not in binned]
        if absent:
            raise CommandError(f"user id(s) not present in {ratings_path.name}: {', '.join(map(str, absent))}")
        binned = {u: binned[u] for u in sorted(set(wanted))}
    if not binned:
        raise CommandError("no user passed the filters")

    echo = {"binning": policy.describe(), "seed": args.seed}
    write = _Writer(out)
    written, skipped = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)
        for uid, user_bins in binned.items():
            report = _analyze(write, user_bins, relevance, args, echo, plots=args.plots, series_csv=args.series)
            (written if report is not None else skipped).append(uid)
    for uid in skipped:
        log.info("user %d: %d step(s), too short for nu=%d; skipped", uid, len(binned[uid]), args.nu)
    if skipped:
        log.warning("%d user(s) have fewer than nu+1=%d steps and were skipped (listed in the manifest)",
                    len(skipped), args.nu + 1)
    write.manifest({
        "command": "compute",
        "version": __version__,
        "config": {
            "ratings": ratings_path.name,
            "relevance": relevance_path.name,
            "format": fmt,
            "scale": list(scale),
            "bin": policy.describe(),
            "nu": args.nu,
            "k": args.k,
            "mode": args.mode,
            "users": args.users or "all",
            "categories": list(relevance.categories),
            "strict": args.strict,
            "seed": args.seed,
        },
        "inputs": {ratings_path.name: _sha256(ratings_path), relevance_path.name: _sha256(relevance_path)},
        "counts": {
            **summary.as_dict(),
            "users": len(binned),
            "reports": len(written),
            "skipped_users": len(skipped),
        },
        "skipped": skipped,
    })
    if not written:
        raise CommandError(f"nu={args.nu} is too large for every selected user's series")
    log.info("wrote %d report(s) to %s (%d user(s) skipped)", len(written), out, len(skipped))
    return 0


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    overrides = {"seed": args.seed, "horizon": args.horizon}
    try:
        if args.sim_config:
            cfg = load_sim_config(Path(args.sim_config), **overrides)
        else:
            cfg = SimConfig(**{k: v for k, v in overrides.items() if v is not None}).validate()
    except ConfigError as exc:
        raise CommandError("\n  ".join(["invalid simulation config:"] + exc.errors)) from None
    except OSError as exc:
        raise CommandError(str(exc)) from None

    trace = run_simulation(cfg)
    binned, relevance = trace_to_ratings(trace)
    uid = cfg.user_id
    write = _Writer(out)
    write(output_name(uid, "binned", "jsonl"), dump_binned([binned]))
    write(output_name(uid, "relevance", "csv"), format_tag_relevance(relevance))
    write(output_name(uid, "simconfig", "txt"), format_sim_config(cfg))
    header = ["step"] + [f"mu_{c}" for c in cfg.category_labels()] + ["mu_entropy", "served_entropy", "new_items"]
    rows = [",".join(header)]
    for s in trace.states:
        rows.append(",".join([str(s.step)] + [format(float(m), ".9g") for m in s.mu]
                             + [format(entropy(s.mu), ".9g"), format(s.served_entropy, ".9g"), str(s.n_new_items)]))
    write(output_name(uid, "trace", "csv"), "\n".join(rows) + "\n")

    report_written = None
    if args.pipeline:
        echo = {"binning": "simulation-step", "seed": cfg.seed}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DataWarning)
            report = _analyze(write, binned, relevance, args, echo, plots=args.plots, series_csv=args.series)
        report_written = report is not None
        if not report_written:
            log.warning("simulated series of %d steps is too short for nu=%d; no report", len(binned), args.nu)
    write.manifest({
        "command": "simulate",
        "version": __version__,
        "config": {
            "simulation": format_sim_config(cfg).splitlines(),
            "pipeline": bool(args.pipeline),
            "nu": args.nu,
            "k": args.k,
            "mode": args.mode,
        },
        "counts": {"steps": len(trace), "report": report_written},
    })
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    write = _Writer(out)
    for path in args.reports:
        path = Path(path)
        if not path.is_file():
            raise CommandError(f"report not found: {path}")
        report = parse_bte_report(path.read_bytes())
        uid = report.user_id
        write(output_name(uid, "bte", "csv"), emit_bte_report(report, "csv"))
        cats = tuple(args.categories) if args.categories else None
        write(output_name(uid, "bte-by-category", "svg"),
              render_plot(PlotSpec(uid, "bte-by-category", categories=cats, top_n=args.top), report=report))
    write.manifest({"command": "report", "version": __version__,
                    "inputs": {Path(p).name: _sha256(p) for p in args.reports}})
    return 0


def _add_pipeline_flags(p):
    p.add_argument("--nu", type=int, default=4, help="past horizon in steps (default 4)")
    p.add_argument("--k", type=float, default=2.0, help="band width in standard deviations (default 2)")
    p.add_argument("--mode", choices=MODES, default="per-category", help="threshold each category against its own band or the averaged one")
    p.add_argument("--series", action="store_true", help="also write per-user series/threshold CSVs")
    p.add_argument("--plots", action="store_true", help="also write SVG figures")
    p.add_argument("--plot-categories", type=_csv_list, default=None, help="comma separated labels to plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exitbarrier", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="barrier-to-exit reports from a ratings log")
    p.add_argument("--ratings", required=True)
    p.add_argument("--relevance", required=True, help="CSV with movieId,tag,relevance")
    p.add_argument("--format", choices=("dat", "csv"), default=None, help="ratings layout (default: by extension)")
    p.add_argument("--scale", choices=("half", "ml1m"), default="half", help="[0.5, 5] or [1, 5]")
    p.add_argument("--bin", default="weekly", help="weekly | daily | seconds:S | count:N | gap:S")
    p.add_argument("--users", default=None, help="comma separated ids or 'all'")
    p.add_argument("--categories", type=_csv_list, default=None, help="comma separated tag labels")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV})")
    p.add_argument("--strict", action="store_true", help="fail on malformed input lines")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("simulate", help="run the interaction simulator")
    p.add_argument("--sim-config", default=None, help="key = value file; defaults used when omitted")
    p.add_argument("--seed", type=int, default=None, help="overrides the config's seed")
    p.add_argument("--horizon", type=int, default=None, help="overrides the config's horizon")
    p.add_argument("--pipeline", action="store_true", help="run the barrier-to-exit analysis on the trace")
    p.add_argument("--out", default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="CSV and bar chart from existing report JSON files")
    p.add_argument("reports", nargs="+")
    p.add_argument("--categories", type=_csv_list, default=None)
    p.add_argument("--top", type=int, default=None, help="plot the N categories with most windows")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "nu", 1) < 1:
        parser.error("--nu must be >= 1")
    if getattr(args, "k", 1.0) <= 0:
        parser.error("--k must be > 0")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"exitbarrier {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"exitbarrier {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
