"""Command-line front door: every pipeline stage, end-to-end runs, and the service."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import biasim, cleaning, evaluate, featsel, ingest
from .errors import ParameterError, PipelineError
from .models import ModelSpec
from .pipeline import PipelineConfig, canonical_json, run_pipeline
from .server import ServerConfig, serve


def parse_model_spec(text: str) -> ModelSpec:
    """Parse 'kind' or 'kind:key=value,key=value' into a ModelSpec."""
    kind, _, rest = text.partition(":")
    hp: dict = {}
    if rest:
        for part in rest.split(","):
            key, eq, raw = part.partition("=")
            if not eq:
                raise ParameterError(f"bad hyperparameter {part!r} in {text!r}")
            hp[key.strip()] = _parse_value(raw.strip())
    return ModelSpec(kind.strip(), hp)


def _parse_value(raw: str):
    if raw.lower() in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _parse_pattern(text: str) -> biasim.RunLengthPattern:
    return biasim.RunLengthPattern(tuple(int(x) for x in text.split(",") if x.strip()))


def _read_trace(path: Path, source_id: str = "") -> ingest.RawTrace:
    data = path.read_bytes()
    if path.suffix == ".zip":
        data = ingest.decompress_upload(data)
    return ingest.parse_trace(data, source_id or path.stem)


def _save_matrix(path: Path, m: ingest.FeatureMatrix) -> None:
    np.savez(
        path,
        X=m.X,
        y=m.y,
        feature_names=np.asarray(m.feature_names, dtype=str),
        dropped_rows=np.asarray(m.dropped_rows),
    )


def _load_matrix(path: Path) -> ingest.FeatureMatrix:
    data = np.load(path, allow_pickle=False)
    return ingest.FeatureMatrix(
        feature_names=[str(s) for s in data["feature_names"]],
        X=data["X"],
        y=data["y"],
        dropped_rows=int(data["dropped_rows"]),
    )


def _emit(doc: dict, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(canonical_json(doc))
    else:
        for key, value in doc.items():
            print(f"{key}: {value}")


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("text", "json"), default="text",
                        help="report format on stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tracewatt",
        description="Build smartphone energy-consumption models from usage traces.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic usage trace")
    p.add_argument("--out", type=Path, required=True, help=".csv or .zip output path")
    p.add_argument("--duration", type=int, default=3600)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise-sigma", type=float, default=biasim.DEFAULT_POWER_LAW.noise_sigma_mw)
    p.add_argument("--session-mean", type=float, default=120.0)
    p.add_argument("--gauge-pattern", type=str, default=None,
                   help="comma-separated run lengths simulating a faulty gauge")

    p = sub.add_parser("ingest", help="Parse a trace and derive the feature matrix")
    p.add_argument("--input", type=Path, required=True, help=".csv or .zip trace")
    p.add_argument("--out", type=Path, required=True, help=".npz feature matrix")
    _add_format(p)

    p = sub.add_parser("clean", help="Drop degenerate features and outlier rows")
    p.add_argument("--input", type=Path, required=True, help=".npz feature matrix")
    p.add_argument("--out", type=Path, required=True, help=".npz cleaned matrix")
    p.add_argument("--report", type=Path, default=None, help="cleaning report JSON path")
    p.add_argument("--sparse-fraction", type=float, default=cleaning.DEFAULT_SPARSE_FRACTION)
    p.add_argument("--variance-floor", type=float, default=cleaning.DEFAULT_VARIANCE_FLOOR)
    p.add_argument("--lof-neighbors", type=int, default=cleaning.DEFAULT_LOF_NEIGHBORS)
    p.add_argument("--lof-threshold", type=float, default=cleaning.DEFAULT_LOF_THRESHOLD)
    p.add_argument("--max-outlier-fraction", type=float,
                   default=cleaning.DEFAULT_MAX_OUTLIER_FRACTION)
    _add_format(p)

    p = sub.add_parser("select-k", help="Choose the best feature count")
    p.add_argument("--input", type=Path, required=True, help=".npz cleaned matrix")
    p.add_argument("--out", type=Path, default=None, help="result JSON path")
    p.add_argument("--strategy", choices=featsel.STRATEGY_KINDS, default="mutual_info")
    p.add_argument("--bins", type=int, default=featsel.DEFAULT_MI_BINS)
    p.add_argument("--model", type=parse_model_spec, default=ModelSpec("ridge"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--repetitions", type=int, default=featsel.K_RANK_REPETITIONS)
    _add_format(p)

    p = sub.add_parser("benchmark", help="Thirty-run benchmark of one model")
    p.add_argument("--input", type=Path, required=True, help=".npz cleaned matrix")
    p.add_argument("--out", type=Path, default=None, help="result JSON path")
    p.add_argument("--model", type=parse_model_spec, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--select-k", type=int, default=None,
                   help="apply per-fold top-k feature selection")
    p.add_argument("--strategy", choices=featsel.STRATEGY_KINDS, default="mutual_info")
    p.add_argument("--bins", type=int, default=featsel.DEFAULT_MI_BINS)
    _add_format(p)

    p = sub.add_parser("rank", help="Rank benchmark results with the critical difference")
    p.add_argument("--inputs", type=Path, nargs="+", required=True,
                   help="benchmark result JSON files")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", type=Path, default=None, help="rank table JSON path")
    p.add_argument("--cd-csv", type=Path, default=None, help="CD diagram data CSV path")
    _add_format(p)

    p = sub.add_parser("bias", help="Replay a gauge fault over a clean trace")
    p.add_argument("--input", type=Path, required=True, help=".csv trace")
    p.add_argument("--out", type=Path, required=True, help=".csv biased trace")
    p.add_argument("--pattern", type=str, default=None,
                   help="comma-separated run lengths")
    p.add_argument("--pattern-from", type=Path, default=None,
                   help="trace whose current channel supplies the pattern")
    _add_format(p)

    p = sub.add_parser("pipeline", help="Run the full pipeline on one trace")
    p.add_argument("--input", type=Path, required=True, help=".csv or .zip trace")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scenario", choices=("all",) + tuple(s for s in
                   ("full", "no-orientation", "feature-selected")), default="all")
    p.add_argument("--strategy", choices=featsel.STRATEGY_KINDS, default="mutual_info",
                   help="strategy driving the feature-selected scenario")
    p.add_argument("--model", action="append", type=parse_model_spec, default=None,
                   help="benchmark model (repeatable); default zoo when omitted")
    p.add_argument("--k-rank-model", action="append", type=parse_model_spec, default=None,
                   help="feature-count selection model (repeatable)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sparse-fraction", type=float, default=cleaning.DEFAULT_SPARSE_FRACTION)
    p.add_argument("--variance-floor", type=float, default=cleaning.DEFAULT_VARIANCE_FLOOR)
    p.add_argument("--lof-neighbors", type=int, default=cleaning.DEFAULT_LOF_NEIGHBORS)
    p.add_argument("--lof-threshold", type=float, default=cleaning.DEFAULT_LOF_THRESHOLD)
    p.add_argument("--max-outlier-fraction", type=float,
                   default=cleaning.DEFAULT_MAX_OUTLIER_FRACTION)
    _add_format(p)

    p = sub.add_parser("serve", help="Run the analysis service")
    p.add_argument("--config", type=Path, default=None, help="JSON config file")
    p.add_argument("--host", type=str, default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--data-dir", type=Path, default=None)
    p.add_argument("--size-cap-bytes", type=int, default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", type=str, default=None)

    return ap


def _cmd_synth(args) -> dict:
    pattern = _parse_pattern(args.gauge_pattern) if args.gauge_pattern else None
    law = biasim.PowerLaw(
        coefficients=dict(biasim.DEFAULT_POWER_LAW.coefficients),
        intercept_mw=biasim.DEFAULT_POWER_LAW.intercept_mw,
        noise_sigma_mw=args.noise_sigma,
    )
    config = biasim.SynthConfig(
        duration=args.duration,
        seed=args.seed,
        app_sessions={"mean_length_s": args.session_mean},
        power_law=law,
        gauge_fault=pattern,
    )
    trace = biasim.synth_trace(config)
    if args.out.suffix == ".zip":
        args.out.write_bytes(biasim.trace_to_zip_bytes(trace))
    else:
        args.out.write_bytes(biasim.trace_to_csv_bytes(trace))
    return {"rows": trace.n_rows, "out": str(args.out)}


def _cmd_ingest(args) -> dict:
    trace = _read_trace(args.input)
    matrix = ingest.derive_features(trace)
    _save_matrix(args.out, matrix)
    return {
        "rows": matrix.n,
        "dropped_rows": matrix.dropped_rows,
        "features": matrix.feature_names,
        "out": str(args.out),
    }


def _cmd_clean(args) -> dict:
    matrix = _load_matrix(args.input)
    cleaned, report = cleaning.clean_feature_matrix(
        matrix,
        sparse_fraction=args.sparse_fraction,
        variance_floor=args.variance_floor,
        lof_neighbors=args.lof_neighbors,
        lof_threshold=args.lof_threshold,
        max_drop_fraction=args.max_outlier_fraction,
    )
    _save_matrix(args.out, cleaned)
    doc = report.to_json_dict()
    if args.report is not None:
        args.report.write_text(canonical_json(doc), encoding="utf-8")
    return {"rows": cleaned.n, "features": cleaned.feature_names, **doc, "out": str(args.out)}


def _cmd_select_k(args) -> dict:
    matrix = _load_matrix(args.input)
    strategy = featsel.ScoreStrategy(args.strategy, args.bins)
    result = featsel.build_k_rank(
        matrix.X,
        matrix.y,
        args.model,
        strategy,
        base_seed=args.seed,
        repetitions=args.repetitions,
    )
    doc = result.to_json_dict()
    if args.out is not None:
        args.out.write_text(canonical_json(doc), encoding="utf-8")
    return doc


def _cmd_benchmark(args) -> dict:
    matrix = _load_matrix(args.input)
    select = None
    if args.select_k is not None:
        strategy = featsel.ScoreStrategy(args.strategy, args.bins)
        select = featsel.make_selector(strategy, args.select_k)
    result = evaluate.thirty_run_benchmark(
        args.model.with_seed(args.seed),
        matrix.X,
        matrix.y,
        select=select,
        feature_names=matrix.feature_names,
    )
    doc = result.to_json_dict()
    if args.out is not None:
        args.out.write_text(canonical_json(doc), encoding="utf-8")
    return doc


def _cmd_rank(args) -> dict:
    results = [
        evaluate.BenchmarkResult.from_json_dict(json.loads(p.read_text(encoding="utf-8")))
        for p in args.inputs
    ]
    table = evaluate.choose_best(results, alpha=args.alpha)
    doc = table.to_json_dict()
    if args.out is not None:
        args.out.write_text(canonical_json(doc), encoding="utf-8")
    if args.cd_csv is not None:
        lines = ["algorithm,mean_rank,cd"]
        for name, rank in zip(table.algorithms, table.mean_ranks):
            lines.append(f"{name},{rank!r},{table.cd!r}")
        args.cd_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return doc


def _cmd_bias(args) -> dict:
    if (args.pattern is None) == (args.pattern_from is None):
        raise ParameterError("give exactly one of --pattern or --pattern-from")
    if args.pattern is not None:
        pattern = _parse_pattern(args.pattern)
    else:
        donor = _read_trace(args.pattern_from)
        pattern = biasim.extract_run_lengths(donor.rows["current_ma"].to_numpy())
    trace = _read_trace(args.input)
    biased = trace.rows.copy()
    biased["current_ma"] = biasim.apply_bias(biased["current_ma"].to_numpy(), pattern)
    out_trace = ingest.RawTrace(header=trace.header, rows=biased, source_id=trace.source_id)
    args.out.write_bytes(biasim.trace_to_csv_bytes(out_trace))
    return {
        "rows": out_trace.n_rows,
        "pattern_runs": len(pattern.run_lengths),
        "mean_run_length": pattern.mean_run_length,
        "out": str(args.out),
    }


def _cmd_pipeline(args) -> dict:
    trace = _read_trace(args.input)
    kwargs: dict = {
        "seed": args.seed,
        "scenario": args.scenario,
        "chosen_strategy": args.strategy,
        "alpha": args.alpha,
        "sparse_fraction": args.sparse_fraction,
        "variance_floor": args.variance_floor,
        "lof_neighbors": args.lof_neighbors,
        "lof_threshold": args.lof_threshold,
        "max_outlier_fraction": args.max_outlier_fraction,
    }
    if args.model:
        kwargs["models"] = args.model
    if args.k_rank_model:
        kwargs["k_rank_models"] = args.k_rank_model
    config = PipelineConfig(**kwargs)
    artifact = run_pipeline(trace, config, out_dir=args.out_dir)
    return {
        "winner": artifact["winner"],
        "selected_k": artifact["selected_k"],
        "rows_used": artifact["trace"]["rows_used"],
        "out_dir": str(args.out_dir),
    }


def _cmd_serve(args) -> dict:
    config = ServerConfig.from_file(args.config)
    overrides = {
        "host": args.host,
        "port": args.port,
        "data_dir": args.data_dir,
        "size_cap_bytes": args.size_cap_bytes,
        "concurrency": args.concurrency,
        "seed": args.seed,
        "scenario": args.scenario,
    }
    for key, value in overrides.items():
        if value is not None:
            config = dataclasses.replace(config, **{key: value})
    serve(config)
    return {}


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "clean": _cmd_clean,
    "select-k": _cmd_select_k,
    "benchmark": _cmd_benchmark,
    "rank": _cmd_rank,
    "bias": _cmd_bias,
    "pipeline": _cmd_pipeline,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if doc and getattr(args, "format", None) is not None:
        _emit(doc, args.format)
    elif doc:
        _emit(doc, "text")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
