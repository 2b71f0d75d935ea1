"""Command-line surface.

Subcommands: ``ci`` (one interval from a stratum-count file), ``simulate``
(repeated-sampling experiments to summary.json/reps.csv), ``analyze``
(closed-form variance and width-ratio tables), ``qq`` (paired quantiles).

Every command is a pure function of its flags, input files, and seed; there
is no time-based seeding, so identical invocations produce byte-identical
output.  Exit codes: 0 success, 1 parse error, 2 validation error,
3 infeasible configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .analysis import width_ratio_report
from .core import (
    AlgorithmTag,
    CiResult,
    InfeasibleError,
    PrivacyBudget,
    StratumCounts,
    StratumDesign,
    ValidationError,
    build_design,
)
from .dp_ci import (
    PrivateStratumRelease,
    population_noise_public_sizes,
    stratum_noise_private_sizes,
    stratum_noise_public_sizes,
)
from .estimators import non_private_ci, sample_proportions
from .randomness import derive_stream
from .simharness import (
    RHO_ONE_OVER_MAX_N,
    ExperimentConfig,
    Uniform,
    qq_data,
    rho_sweep,
    run_experiment,
)

STRATUM_FILE_HEADER = "stratum_id,N_h,n_h,c_h"

_TAG_BY_NAME = {tag.value: tag for tag in AlgorithmTag}


class CliParseError(Exception):
    """Malformed flags or input file syntax (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: D102 - argparse hook
        raise CliParseError(message)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _read_stratum_file(path: str) -> tuple[tuple[StratumDesign, ...], StratumCounts]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliParseError(f"cannot read input file {path!r}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CliParseError(f"{path}: empty input file")
    if lines[0].strip() != STRATUM_FILE_HEADER:
        raise CliParseError(
            f"{path}: row 1: expected header {STRATUM_FILE_HEADER!r}, got {lines[0].strip()!r}"
        )
    sizes: list[tuple[int, int]] = []
    counts: list[int] = []
    for i, line in enumerate(lines[1:], start=2):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 4:
            raise CliParseError(f"{path}: row {i}: expected 4 columns, got {len(fields)}")
        values = []
        for j, name in enumerate(("stratum_id", "N_h", "n_h", "c_h")):
            try:
                values.append(int(fields[j]))
            except ValueError as exc:
                raise CliParseError(
                    f"{path}: row {i}, column {j + 1} ({name}): not an integer: {fields[j]!r}"
                ) from exc
        sizes.append((values[1], values[2]))
        counts.append(values[3])
    design = build_design(sizes)
    stratum_counts = StratumCounts(tuple(counts))
    return design, stratum_counts


def _release_payload(release: PrivateStratumRelease, index: int) -> dict:
    payload: dict = {
        "stratum": index,
        "proportion": release.proportion,
        "variance": release.variance,
        "proportion_clipped": release.proportion_clipped,
        "variance_floored": release.variance_floored,
    }
    if release.proportion_noise_variance is not None:
        payload["proportion_noise_variance"] = release.proportion_noise_variance
    if release.noisy_count is not None:
        payload.update(
            noisy_count=release.noisy_count,
            noisy_size=release.noisy_size,
            count_noise_variance=release.count_noise_variance,
            size_noise_variance=release.size_noise_variance,
            noisy_size_floored=release.noisy_size_floored,
            fpc_floored=release.fpc_floored,
        )
    return payload


def _ci_payload(ci: CiResult, releases: Sequence[PrivateStratumRelease] | None) -> dict:
    payload: dict = {
        "algorithm": ci.algorithm.value,
        "alpha": ci.alpha,
        "point_estimate": ci.point_estimate,
        "variance_estimate": ci.variance_estimate,
        "lower": ci.lower,
        "upper": ci.upper,
        "budget": None
        if ci.budget_spent is None
        else {
            "rho": ci.budget_spent.rho,
            "rho1": ci.budget_spent.rho1,
            "rho2": ci.budget_spent.rho2,
        },
        "clipped": {
            "proportion": ci.clipped.proportion_clipped,
            "interval": ci.clipped.interval_clipped,
            "variance_floored": ci.clipped.variance_floored,
            "noisy_size_floored": ci.clipped.noisy_size_floored,
        },
        "noise_variances": {label: value for label, value in ci.noise_variances},
    }
    if releases is not None:
        payload["strata"] = [_release_payload(r, h) for h, r in enumerate(releases)]
    return payload


def _payload_to_csv(payload: dict) -> str:
    """Flatten the JSON payload to long-format rows ``field,stratum,value``."""
    rows = ["field,stratum,value"]

    def emit(field: str, stratum: str, value) -> None:
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = _fmt(value)
        else:
            text = str(value)
        rows.append(f"{field},{stratum},{text}")

    for key in ("algorithm", "alpha", "point_estimate", "variance_estimate", "lower", "upper"):
        emit(key, "", payload[key])
    if payload["budget"] is not None:
        for key, value in payload["budget"].items():
            emit(f"budget_{key}", "", value)
    for key, value in payload["clipped"].items():
        emit(f"clipped_{key}", "", value)
    for label, value in payload["noise_variances"].items():
        emit(f"noise_variance[{label}]", "", value)
    for stratum in payload.get("strata", []):
        index = stratum["stratum"]
        for key, value in stratum.items():
            if key != "stratum":
                emit(key, str(index), value)
    return "\n".join(rows) + "\n"


def _cmd_ci(args: argparse.Namespace) -> int:
    design, counts = _read_stratum_file(args.input)
    tag = _TAG_BY_NAME[args.algorithm]
    releases = None
    if tag is AlgorithmTag.NON_PRIVATE:
        ci = non_private_ci(design, counts, args.alpha)
        if args.clip_interval:
            ci = ci.clip_to_unit_interval()
    else:
        if args.rho is None:
            raise ValidationError(f"--rho is required for algorithm {args.algorithm!r}")
        budget = PrivacyBudget.total(args.rho, args.split)
        stream = derive_stream(args.seed, [0])
        if tag is AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES:
            ci, releases = stratum_noise_public_sizes(
                stream, design, counts, budget, args.alpha,
                clip_proportions=args.clip_proportions, clip_interval=args.clip_interval,
            )
        elif tag is AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES:
            ci = population_noise_public_sizes(
                stream, design, counts, budget, args.alpha,
                clip_estimate=args.clip_proportions, clip_interval=args.clip_interval,
            )
        else:
            ci, releases = stratum_noise_private_sizes(
                stream, design, counts, budget, args.alpha,
                clip_proportions=args.clip_proportions, clip_interval=args.clip_interval,
            )
    payload = _ci_payload(ci, releases)
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        sys.stdout.write(_payload_to_csv(payload))
    return 0


# --- simulate -------------------------------------------------------------

_CONFIG_KEYS = {
    "alpha", "strata", "stratum_size", "rate", "proportion", "rho", "rho_grid",
    "split", "algorithms", "repetitions", "base_seed", "clip_proportions",
    "clip_interval", "min_sample_size", "emit_reps",
}
_REQUIRED_KEYS = {"strata", "stratum_size", "rate", "proportion", "algorithms", "repetitions", "base_seed"}


def _parse_scalar_or_uniform(raw: str, key: str, integer: bool):
    raw = raw.strip()
    if raw.startswith("uniform(") and raw.endswith(")"):
        inner = raw[len("uniform("):-1]
        parts = [p.strip() for p in inner.split(",")]
        if len(parts) != 2:
            raise ValidationError(f"config key {key!r}: uniform(...) takes two bounds, got {raw!r}")
        try:
            lo, hi = (float(p) for p in parts)
        except ValueError as exc:
            raise ValidationError(f"config key {key!r}: bad uniform bounds in {raw!r}") from exc
        return Uniform(lo, hi)
    try:
        return int(raw) if integer else float(raw)
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: expected a number or uniform(a,b), got {raw!r}") from exc


def _parse_bool(raw: str, key: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValidationError(f"config key {key!r}: expected true/false, got {raw!r}")


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: expected a number, got {raw!r}") from exc


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: expected an integer, got {raw!r}") from exc


def _parse_config_file(path: str) -> tuple[ExperimentConfig, tuple[float, ...] | None, bool]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliParseError(f"cannot read config file {path!r}: {exc}") from exc
    values: dict[str, str] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CliParseError(f"{path}: line {i}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"{path}: line {i}: unknown config key {key!r}")
        if key in values:
            raise ValidationError(f"{path}: line {i}: duplicate config key {key!r}")
        values[key] = raw.strip()

    missing = _REQUIRED_KEYS - values.keys()
    if missing:
        raise ValidationError(f"{path}: missing required config keys: {', '.join(sorted(missing))}")
    if "rho" not in values and "rho_grid" not in values:
        raise ValidationError(f"{path}: one of 'rho' or 'rho_grid' is required")
    if "rho" in values and "rho_grid" in values:
        raise ValidationError(f"{path}: 'rho' and 'rho_grid' are mutually exclusive")

    algorithms = []
    for name in values["algorithms"].split(","):
        name = name.strip()
        if name not in _TAG_BY_NAME or name == AlgorithmTag.DIFFERENCE.value:
            raise ValidationError(f"{path}: unknown algorithm {name!r}")
        algorithms.append(_TAG_BY_NAME[name])

    rho_grid = None
    rho: float | str = 1.0  # placeholder when sweeping
    if "rho_grid" in values:
        try:
            rho_grid = tuple(float(v) for v in values["rho_grid"].split(","))
        except ValueError as exc:
            raise ValidationError(f"{path}: bad rho_grid: {values['rho_grid']!r}") from exc
    else:
        raw = values["rho"]
        rho = RHO_ONE_OVER_MAX_N if raw == RHO_ONE_OVER_MAX_N else _parse_float(raw, "rho")

    config = ExperimentConfig(
        alpha=_parse_float(values.get("alpha", "0.1"), "alpha"),
        strata=_parse_int(values["strata"], "strata"),
        stratum_size=_parse_scalar_or_uniform(values["stratum_size"], "stratum_size", integer=True),
        rate=_parse_scalar_or_uniform(values["rate"], "rate", integer=False),
        proportion=_parse_scalar_or_uniform(values["proportion"], "proportion", integer=False),
        rho=rho,
        split=_parse_float(values.get("split", "0.5"), "split"),
        algorithms=tuple(algorithms),
        repetitions=_parse_int(values["repetitions"], "repetitions"),
        base_seed=_parse_int(values["base_seed"], "base_seed"),
        clip_proportions=_parse_bool(values.get("clip_proportions", "false"), "clip_proportions"),
        clip_interval=_parse_bool(values.get("clip_interval", "false"), "clip_interval"),
        min_sample_size=_parse_int(values["min_sample_size"], "min_sample_size")
        if "min_sample_size" in values
        else None,
    )
    emit_reps = _parse_bool(values.get("emit_reps", "false"), "emit_reps")
    return config, rho_grid, emit_reps


def _summary_payload(summary) -> dict:
    return {
        tag.value: {
            "coverage": row.coverage,
            "mean_width": row.mean_width,
            "width_sd": row.width_sd,
            "mean_width_ratio": row.mean_width_ratio,
            "mean_lower": row.mean_lower,
            "mean_upper": row.mean_upper,
        }
        for tag, row in summary.by_algorithm
    }


def _cmd_simulate(args: argparse.Namespace) -> int:
    config, rho_grid, emit_reps = _parse_config_file(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rho_grid is None:
        summary = run_experiment(config, keep_records=emit_reps)
        results = ((summary.rho, summary),)
    else:
        results = rho_sweep(config, rho_grid, keep_records=emit_reps)
    first = results[0][1]
    payload = {
        "alpha": config.alpha,
        "repetitions": config.repetitions,
        "base_seed": config.base_seed,
        "split": config.split,
        "true_proportion": first.true_proportion,
        "stratum_sizes": list(first.stratum_sizes),
        "sample_sizes": list(first.sample_sizes),
        "grid": [
            {"rho": rho, "algorithms": _summary_payload(summary)}
            for rho, summary in results
        ],
    }
    (out_dir / "summary.json").write_text(json.dumps(payload, indent=2) + "\n")
    if emit_reps:
        sweep = rho_grid is not None
        lines = ["rho,rep,algorithm,covered,width,lower,upper" if sweep
                 else "rep,algorithm,covered,width,lower,upper"]
        for rho, summary in results:
            assert summary.records is not None
            for rec in summary.records:
                fields = [
                    str(rec.repetition),
                    rec.algorithm.value,
                    "1" if rec.covered else "0",
                    _fmt(rec.width),
                    _fmt(rec.lower),
                    _fmt(rec.upper),
                ]
                if sweep:
                    fields.insert(0, _fmt(rho))
                lines.append(",".join(fields))
        (out_dir / "reps.csv").write_text("\n".join(lines) + "\n")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    if args.input is not None:
        design, counts = _read_stratum_file(args.input)
        if args.p is not None:
            proportions: tuple[float, ...] | None = (args.p,) * len(design)
        else:
            _, proportions = sample_proportions(design, counts)
    else:
        if args.N is None or args.n is None:
            raise ValidationError("either --input or both --N and --n are required")
        design = build_design([(args.N, args.n)])
        proportions = (args.p,) * 1 if args.p is not None else None
    budget = PrivacyBudget.total(args.rho, args.split)
    report = width_ratio_report(design, budget, proportions)
    lines = ["metric,algorithm,value"]
    for tag, value in report.extrinsic_variances:
        lines.append(f"v_ex,{tag.value},{_fmt(value)}")
    lines.append(f"budget_ratio_stratum_vs_population,,{_fmt(report.ratio_stratum_vs_population)}")
    if report.ratio_private_vs_public is not None:
        lines.append(f"budget_ratio_private_vs_public,,{_fmt(report.ratio_private_vs_public)}")
    for tag, value in report.width_ratios:
        lines.append(f"twr,{tag.value},{_fmt(value)}")
    for tag, value in report.lower_bounds:
        lines.append(f"twr_lower_bound,{tag.value},{_fmt(value)}")
    print("\n".join(lines))
    return 0


def _cmd_qq(args: argparse.Namespace) -> int:
    config, rho_grid, _ = _parse_config_file(args.config)
    if rho_grid is not None:
        raise ValidationError("qq requires a single 'rho', not 'rho_grid'")
    tables = qq_data(config, args.grid)
    multi = len(tables) > 1
    lines = ["algorithm,q,theoretical,empirical" if multi else "q,theoretical,empirical"]
    for tag, rows in tables:
        for q, theo, emp in rows:
            prefix = f"{tag.value}," if multi else ""
            lines.append(f"{prefix}{_fmt(q)},{_fmt(theo)},{_fmt(emp)}")
    print("\n".join(lines))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="stratci", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ci = sub.add_parser("ci", help="confidence interval from a stratum-count file")
    p_ci.add_argument("--input", required=True, help=f"CSV with header {STRATUM_FILE_HEADER!r}")
    p_ci.add_argument(
        "--algorithm", required=True,
        choices=[t.value for t in AlgorithmTag if t is not AlgorithmTag.DIFFERENCE],
    )
    p_ci.add_argument("--rho", type=float, default=None, help="total privacy budget")
    p_ci.add_argument("--split", type=float, default=0.5, help="fraction of rho spent on the first mechanism")
    p_ci.add_argument("--alpha", type=float, default=0.1)
    p_ci.add_argument("--seed", type=int, default=0)
    p_ci.add_argument("--clip-proportions", action="store_true", dest="clip_proportions")
    p_ci.add_argument("--clip-interval", action="store_true", dest="clip_interval")
    p_ci.add_argument("--format", choices=("json", "csv"), default="json")
    p_ci.set_defaults(func=_cmd_ci)

    p_sim = sub.add_parser("simulate", help="run a repeated-sampling experiment")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_an = sub.add_parser("analyze", help="closed-form variance and width-ratio table")
    p_an.add_argument("--input", default=None, help="stratum-count file for multi-stratum designs")
    p_an.add_argument("--N", type=int, default=None, help="population size (one-stratum shorthand)")
    p_an.add_argument("--n", type=int, default=None, help="sample size (one-stratum shorthand)")
    p_an.add_argument("--rho", type=float, required=True)
    p_an.add_argument("--split", type=float, default=0.5)
    p_an.add_argument("--p", type=float, default=None, help="assumed true proportion")
    p_an.set_defaults(func=_cmd_analyze)

    p_qq = sub.add_parser("qq", help="paired theoretical/empirical quantiles")
    p_qq.add_argument("--config", required=True)
    p_qq.add_argument("--grid", type=int, default=99)
    p_qq.set_defaults(func=_cmd_qq)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleError as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
