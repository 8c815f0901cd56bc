"""Command-line interface: estimate, calibrate, and experiment.

Option values resolve as flags over config-file entries over built-in
defaults.  The config file is a flat JSON object whose keys are flag names
(dashes or underscores); it is taken from --config or, failing that, the
PRECISE_CONFIG environment variable.  Exit codes: 0 on success, 2 for input
or usage errors, 3 for statistical precondition failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import figures
from .calibration import (
    CalibrationError,
    ConfidenceScale,
    DEFAULT_SCALE,
    calibration_pairs,
    fit_isotonic,
)
from .data import DatasetError, load_dataset
from .estimators import (
    ESTIMATOR_NAMES,
    EstimatorError,
    GOLD_ONLY,
    LLM_BIN,
    LLM_PROB,
    PRECISE_PPI,
    LambdaPolicy,
    estimate_gold,
    estimate_llm_bin,
    estimate_llm_prob,
    estimate_precise_ppi,
    per_query_stats,
)
from .experiments import (
    PROFILES,
    TrialConfig,
    ablate_unlabeled_size,
    calibration_diagnostics,
    run_resampling,
    simulate_pool,
)
from .metrics import PRECISION_AT_K

CONFIG_ENV = "PRECISE_CONFIG"

_ESTIMATOR_ALIASES = {
    "gold": GOLD_ONLY,
    "prob": LLM_PROB,
    "bin": LLM_BIN,
    "ppi": PRECISE_PPI,
}

# Built-in defaults; config-file keys match these names (dashes accepted).
DEFAULTS: dict = {
    "k": None,
    "level": 0.95,
    "lambda": "auto",
    "estimators": "gold,prob,bin,ppi",
    "calibrate": False,
    "bin_threshold": 0.5,
    "n": 30,
    "trials": 50,
    "seed": 0,
    "format": "human",
    "figures": True,
    "cost_per_query_usd": 0.0,
    "bin_width": 0.1,
    "confidence_scale": None,
}

# Flag names whose argparse destination differs from the config key.
_KEY_TO_DEST = {"lambda": "lambda_spec", "format": "output_format"}


@dataclass
class RunConfig:
    """Fully resolved settings shared by the commands."""

    k: int | None
    level: float
    lambda_policy: LambdaPolicy
    estimators: tuple[str, ...]
    calibrate: bool
    bin_threshold: float
    n: int
    trials: int
    seed: int
    output_format: str
    figures: bool
    scale: ConfidenceScale
    cost_per_query_usd: float
    bin_width: float


def _load_config_file(explicit: Path | None) -> dict:
    path = explicit
    if path is None:
        env = os.environ.get(CONFIG_ENV)
        if not env:
            return {}
        path = Path(env)
    if not path.is_file():
        raise DatasetError(f"config file not found: {path}")
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid config JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise DatasetError(f"{path}: config must be a flat JSON object")
    out = {}
    for key, value in rec.items():
        canon = str(key).replace("-", "_")
        if canon not in DEFAULTS:
            raise DatasetError(f"{path}: unknown config key {key!r}")
        out[canon] = value
    return out


def _parse_estimators(text: str) -> tuple[str, ...]:
    out: list[str] = []
    for token in str(text).split(","):
        token = token.strip()
        if not token:
            continue
        low = token.lower()
        name = _ESTIMATOR_ALIASES.get(low)
        if name is None:
            name = next((n for n in ESTIMATOR_NAMES if n.lower() == low), None)
        if name is None:
            raise DatasetError(
                f"unknown estimator {token!r}; valid: {', '.join(_ESTIMATOR_ALIASES)}"
            )
        if name not in out:
            out.append(name)
    if not out:
        raise DatasetError("no estimators requested")
    return tuple(out)


def _build_config(args: argparse.Namespace) -> RunConfig:
    config = _load_config_file(args.config)

    def get(key: str):
        flag = getattr(args, _KEY_TO_DEST.get(key, key), None)
        if flag is not None:
            return flag
        if config.get(key) is not None:
            return config[key]
        return DEFAULTS[key]

    try:
        policy = LambdaPolicy.parse(str(get("lambda")))
    except EstimatorError as exc:
        raise DatasetError(str(exc)) from None
    scale_spec = get("confidence_scale")
    try:
        scale = ConfidenceScale.from_mapping(scale_spec) if scale_spec else DEFAULT_SCALE
    except CalibrationError as exc:
        raise DatasetError(str(exc)) from None
    level = float(get("level"))
    if not 0.0 < level < 1.0:
        raise DatasetError(f"--level must lie in (0, 1), got {level}")
    fmt = str(get("format"))
    if fmt not in ("json", "csv", "human"):
        raise DatasetError(f"--format must be json, csv, or human, got {fmt!r}")
    k = get("k")
    return RunConfig(
        k=int(k) if k is not None else None,
        level=level,
        lambda_policy=policy,
        estimators=_parse_estimators(get("estimators")),
        calibrate=bool(get("calibrate")),
        bin_threshold=float(get("bin_threshold")),
        n=int(get("n")),
        trials=int(get("trials")),
        seed=int(get("seed")),
        output_format=fmt,
        figures=bool(get("figures")),
        scale=scale,
        cost_per_query_usd=float(get("cost_per_query_usd")),
        bin_width=float(get("bin_width")),
    )


def _require_k(cfg: RunConfig) -> int:
    if cfg.k is None:
        raise DatasetError("--k is required (set the flag or a config file entry)")
    return cfg.k


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        print(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")


def _pct(x: float) -> str:
    return f"{x * 100:.2f}%"


def _render_estimates(records, payload: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2)
    if fmt == "csv":
        lines = ["estimator,value,value_clamped,variance,ci_lower,ci_upper,level,lambda,n,N"]
        for r in records:
            lam = "" if r.lam is None else repr(r.lam)
            lines.append(
                f"{r.estimator},{r.value!r},{r.value_clamped!r},{r.variance!r},"
                f"{r.ci[0]!r},{r.ci[1]!r},{r.level!r},{lam},{r.n},{r.N}"
            )
        return "\n".join(lines)
    header = f"{'estimator':<12} {'value':>8} {'ci':>20} {'lambda':>7} {'n':>6} {'N':>7}"
    lines = [header, "-" * len(header)]
    for r in records:
        ci = f"[{_pct(r.ci[0])}, {_pct(r.ci[1])}]"
        lam = "-" if r.lam is None else f"{r.lam:.3f}"
        lines.append(
            f"{r.estimator:<12} {_pct(r.value_clamped):>8} {ci:>20} {lam:>7} {r.n:>6} {r.N:>7}"
        )
    return "\n".join(lines)


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    dataset = load_dataset(args.input, _require_k(cfg))
    cal = None
    if cfg.calibrate:
        cal = fit_isotonic(calibration_pairs(dataset, cfg.scale))
    gold_stats, unlabeled_stats = per_query_stats(dataset, PRECISION_AT_K, cfg.scale, cal)
    records = []
    for name in cfg.estimators:
        if name == GOLD_ONLY:
            records.append(estimate_gold(gold_stats, cfg.level))
        elif name == LLM_PROB:
            records.append(estimate_llm_prob(unlabeled_stats, cfg.level))
        elif name == LLM_BIN:
            records.append(
                estimate_llm_bin(
                    dataset, cfg.bin_threshold, PRECISION_AT_K, cfg.level, cfg.scale, cal
                )
            )
        else:
            records.append(
                estimate_precise_ppi(gold_stats, unlabeled_stats, cfg.lambda_policy, cfg.level)
            )
    payload: dict = {"estimates": [r.to_json_dict() for r in records]}
    if cal is not None:
        payload["calibration"] = {
            "fitted_on_gold": True,
            "breakpoints": len(cal.breakpoints),
            "note": "the gold split is reused for both calibration and the rectifier term",
        }
    _emit(_render_estimates(records, payload, cfg.output_format), args.out)
    if args.out is not None and cfg.figures:
        figures.estimate_figure(records, args.out.with_suffix(".png"))
    return 0


def _render_diagnostics(diag, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(diag.to_json_dict(), indent=2)
    if fmt == "csv":
        lines = ["bin_lo,bin_hi,tp_count,tn_count"]
        for lo, hi, tp, tn in diag.bins:
            lines.append(f"{lo!r},{hi!r},{tp},{tn}")
        return "\n".join(lines)
    lines = [f"{'bin':<14} {'relevant':>9} {'irrelevant':>11}"]
    for lo, hi, tp, tn in diag.bins:
        lines.append(f"[{lo:.2f}, {hi:.2f}) {tp:>9} {tn:>11}")
    fp = diag.frac_positive_high
    fn = diag.frac_negative_low
    lines.append(f"relevant docs scoring >= 0.5:  {'-' if fp is None else f'{fp:.3f}'}")
    lines.append(f"irrelevant docs scoring <= 0.4: {'-' if fn is None else f'{fn:.3f}'}")
    return "\n".join(lines)


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    dataset = load_dataset(args.input, _require_k(cfg))
    pairs = calibration_pairs(dataset, cfg.scale)
    cal = fit_isotonic(pairs)
    diag = calibration_diagnostics(pairs, cfg.bin_width)
    map_text = json.dumps(cal.to_json_dict(), indent=2)
    if args.out is not None:
        _emit(map_text, args.out)
        print(_render_diagnostics(diag, cfg.output_format))
        if cfg.figures:
            figures.calibration_figure(diag, args.out.with_suffix(".png"))
    else:
        print(map_text)
        print(_render_diagnostics(diag, "human"), file=sys.stderr)
    return 0


def _to_int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise DatasetError(f"{what} must be an integer, got {value!r}") from None


def _to_float(value: str, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise DatasetError(f"{what} must be a number, got {value!r}") from None


def _parse_simulate(text: str, cfg: RunConfig) -> dict:
    """Parse --simulate key=value pairs into simulate_pool arguments."""
    fields: dict = {"profile": "sonnet", "shift": 0.0, "verbalize": False, "seed": cfg.seed}
    for token in text.split(","):
        key, sep, value = token.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not sep or not value:
            raise DatasetError(f"--simulate entries must be key=value, got {token!r}")
        if key == "queries":
            fields["queries"] = _to_int(value, "--simulate queries")
        elif key == "k":
            fields["k"] = _to_int(value, "--simulate k")
        elif key == "rate":
            fields["rate"] = _to_float(value, "--simulate rate")
        elif key == "profile":
            if value not in PROFILES:
                raise DatasetError(
                    f"unknown profile {value!r}; valid: {', '.join(sorted(PROFILES))}"
                )
            fields["profile"] = value
        elif key == "shift":
            fields["shift"] = _to_float(value, "--simulate shift")
        elif key == "verbalize":
            fields["verbalize"] = value.lower() in ("1", "true", "yes")
        elif key == "seed":
            fields["seed"] = _to_int(value, "--simulate seed")
        else:
            raise DatasetError(f"unknown --simulate key {key!r}")
    if "queries" not in fields or "rate" not in fields:
        raise DatasetError("--simulate needs at least queries=<int> and rate=<float>")
    if "k" not in fields:
        if cfg.k is None:
            raise DatasetError("--simulate needs k=<int> (or --k)")
        fields["k"] = cfg.k
    profile = replace(
        PROFILES[fields["profile"]],
        systematic_shift=fields["shift"],
        verbalize=fields["verbalize"],
    )
    return {
        "num_queries": fields["queries"],
        "k": fields["k"],
        "relevance_rate": fields["rate"],
        "profile": profile,
        "seed": fields["seed"],
    }


def _parse_multipliers(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise DatasetError(f"--ablate must be a comma list of integers, got {text!r}") from None


def _report_summary_lines(report, label: str | None = None) -> list[str]:
    prefix = f"[{label}] " if label else ""
    lines = [
        f"{prefix}truth={_pct(report.truth)} n={report.n} N={report.N}"
        f" trials={report.trials} cost=${report.cost_usd:.2f}"
    ]
    header = f"{'estimator':<12} {'bias':>8} {'abs_bias':>9} {'std_error':>10}"
    lines.extend([header, "-" * len(header)])
    for name, s in report.estimators.items():
        lines.append(f"{name:<12} {s.bias:>+8.2f} {s.abs_bias:>9.2f} {s.std_error:>10.2f}")
    return lines


def _write_ablation_summary(reports, multipliers, path: Path) -> None:
    lines = ["multiplier,N,estimator,bias,abs_bias,std_error,cost_usd"]
    for m, report in zip(multipliers, reports):
        for name, s in report.estimators.items():
            lines.append(
                f"{m},{report.N},{name},{s.bias!r},{s.abs_bias!r},{s.std_error!r},"
                f"{report.cost_usd!r}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    if args.simulate:
        pool = simulate_pool(**_parse_simulate(args.simulate, cfg))
    else:
        if args.input is None:
            raise DatasetError("experiment needs a pool file or --simulate")
        pool = load_dataset(args.input, _require_k(cfg))
    tcfg = TrialConfig(
        n_gold=cfg.n,
        trials=cfg.trials,
        base_seed=cfg.seed,
        estimators=cfg.estimators,
        lambda_policy=cfg.lambda_policy,
        k=pool.k,
        level=cfg.level,
        bin_threshold=cfg.bin_threshold,
        calibrate=cfg.calibrate,
        scale=cfg.scale,
        per_query_cost_usd=cfg.cost_per_query_usd,
    )
    if args.ablate:
        multipliers = _parse_multipliers(args.ablate)
        reports = ablate_unlabeled_size(pool, tcfg, multipliers)
        if args.out is not None:
            outdir = args.out
            outdir.mkdir(parents=True, exist_ok=True)
            for m, report in zip(multipliers, reports):
                report.save_json(outdir / f"report_x{m}.json")
                report.save_csv(outdir / f"estimates_x{m}.csv")
                if cfg.figures:
                    figures.sampling_figure(report, outdir / f"sampling_x{m}.png")
            _write_ablation_summary(reports, multipliers, outdir / "ablation.csv")
            if cfg.figures:
                figures.ablation_figure(reports, outdir / "ablation.png")
        elif cfg.output_format == "json":
            payload = {
                "ablation": [
                    {"multiplier": m, **r.to_json_dict()} for m, r in zip(multipliers, reports)
                ]
            }
            print(json.dumps(payload, indent=2))
        elif cfg.output_format == "csv":
            lines = ["multiplier,N,estimator,bias,abs_bias,std_error,cost_usd"]
            for m, report in zip(multipliers, reports):
                for name, s in report.estimators.items():
                    lines.append(
                        f"{m},{report.N},{name},{s.bias!r},{s.abs_bias!r},"
                        f"{s.std_error!r},{report.cost_usd!r}"
                    )
            print("\n".join(lines))
        else:
            blocks = []
            for m, report in zip(multipliers, reports):
                blocks.extend(_report_summary_lines(report, label=f"x{m}"))
                blocks.append("")
            print("\n".join(blocks).rstrip())
    else:
        report = run_resampling(pool, tcfg)
        if args.out is not None:
            outdir = args.out
            outdir.mkdir(parents=True, exist_ok=True)
            report.save_json(outdir / "report.json")
            report.save_csv(outdir / "estimates.csv")
            if cfg.figures:
                figures.sampling_figure(report, outdir / "sampling.png")
        elif cfg.output_format == "json":
            print(json.dumps(report.to_json_dict(), indent=2))
        elif cfg.output_format == "csv":
            lines = ["estimator,trial,estimate"]
            for name, s in report.estimators.items():
                for t, est in enumerate(s.estimates):
                    lines.append(f"{name},{t},{est!r}")
            print("\n".join(lines))
        else:
            print("\n".join(_report_summary_lines(report)))
    return 0


def _add_common_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=None, help="ranked docs per query (no default; required)")
    p.add_argument("--level", type=float, default=None, help="confidence level (default 0.95)")
    p.add_argument(
        "--lambda",
        dest="lambda_spec",
        default=None,
        metavar="POLICY",
        help="fixed:<v> | analytic | grid:<step> (default: analytic with grid fallback)",
    )
    p.add_argument(
        "--estimators",
        default=None,
        help="comma list from gold, prob, bin, ppi (default: all four)",
    )
    p.add_argument(
        "--calibrate",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="fit isotonic calibration on the gold split and apply it everywhere (default: off)",
    )
    p.add_argument(
        "--bin-threshold",
        type=float,
        default=None,
        help="binarization threshold for the bin estimator (default 0.5)",
    )
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
    p.add_argument(
        "--format",
        dest="output_format",
        choices=("json", "csv", "human"),
        default=None,
        help="stdout format (default human)",
    )
    p.add_argument(
        "--out",
        type=Path,
        default=None,
        help="output path; a file for estimate/calibrate, a directory for experiment",
    )
    p.add_argument(
        "--config",
        type=Path,
        default=None,
        help=f"flat JSON config file (default: ${CONFIG_ENV} when set)",
    )
    p.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="render figures beside --out files (default: on)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="precise",
        description="Debiased, variance-reduced top-K metric estimates from"
        " a small gold set plus a large machine-annotated pool.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the metric for an annotated dataset")
    est.add_argument("input", type=Path, help="JSONL or CSV annotation file")
    _add_common_options(est)
    est.set_defaults(func=cmd_estimate)

    cal = sub.add_parser("calibrate", help="fit a calibration map on the gold split")
    cal.add_argument("input", type=Path, help="JSONL or CSV annotation file with gold labels")
    _add_common_options(cal)
    cal.set_defaults(func=cmd_calibrate)

    exp = sub.add_parser("experiment", help="resampling experiments against a labeled pool")
    exp.add_argument("input", type=Path, nargs="?", help="fully gold-labeled pool file")
    _add_common_options(exp)
    exp.add_argument("--n", type=int, default=None, help="gold sample size per trial (default 30)")
    exp.add_argument("--trials", type=int, default=None, help="resampling trials (default 50)")
    exp.add_argument(
        "--ablate",
        default=None,
        metavar="MULTIPLIERS",
        help="comma list of unlabeled-size multipliers, e.g. 10,100,2000",
    )
    exp.add_argument(
        "--simulate",
        default=None,
        metavar="KVLIST",
        help="synthesize the pool: queries=<int>,rate=<float>[,k=<int>,profile=<name>"
        ",shift=<float>,verbalize=<0|1>,seed=<int>]",
    )
    exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CalibrationError, EstimatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
