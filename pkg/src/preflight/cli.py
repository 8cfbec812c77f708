"""Command-line surface: run plans, static checks, calibration, and reports."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics
from .checker import static_score
from .harness import RunPlan, builtin_mini_suite, read_episode_log, run_plan
from .modelio import HttpBackend, PlaybackBackend, UsageLedger
from .prompts import AblationConfig
from .registry import MalformedSuite, DuplicateToolName, UnknownImplId, load_suite
from .strategies import StrategyConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


@dataclass
class Config:
    """Resolved CLI configuration for a run."""

    backend_kind: str = "playback"  # playback | http
    script_path: str | None = None
    strict_script: bool = False
    base_url: str | None = None
    model: str | None = None
    auth_env: str | None = None
    top_logprobs_k: int = 5
    n: int = 5
    r: int = 5
    p: int = 2
    asset_dir: str | None = None
    ablation: frozenset[str] = field(default_factory=frozenset)

    def validate(self) -> None:
        if self.backend_kind == "http":
            if not self.base_url or not self.model:
                raise ConfigError("http backend needs --base-url and --model")
        elif self.backend_kind == "playback":
            if not self.script_path:
                raise ConfigError("playback backend needs --script")
            if not Path(self.script_path).is_file():
                raise ConfigError(f"script file not found: {self.script_path}")
        else:
            raise ConfigError(f"unknown backend {self.backend_kind!r}")

    def build_backend(self, ledger: UsageLedger | None = None):
        if self.backend_kind == "playback":
            return PlaybackBackend.from_jsonl(self.script_path, strict=self.strict_script, ledger=ledger)
        return HttpBackend(base_url=self.base_url, model=self.model, auth_env=self.auth_env, ledger=ledger)


def _load_suite_arg(spec: str):
    if spec == "mini":
        return builtin_mini_suite()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"suite file not found: {spec}")
    try:
        return load_suite(path.read_bytes())
    except (MalformedSuite, DuplicateToolName, UnknownImplId) as exc:
        raise ConfigError(f"invalid suite: {exc}") from exc


def _parse_methods(raw: str, config: Config) -> list[StrategyConfig]:
    ablation = AblationConfig(removed_groups=config.ablation)
    configs = []
    for label in [part.strip() for part in raw.split(",") if part.strip()]:
        try:
            configs.append(
                StrategyConfig.from_label(
                    label,
                    N=config.n,
                    R=config.r,
                    P=config.p,
                    ablation=ablation,
                    top_logprobs_k=config.top_logprobs_k,
                    asset_dir=config.asset_dir,
                )
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if not configs:
        raise ConfigError("no methods given")
    return configs


def _fmt(value: float | None) -> str:
    if value is None:
        return "n/a"
    return format(value, ".6g")


# --- run -------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    config = Config(
        backend_kind=args.backend,
        script_path=args.script,
        strict_script=args.strict_script,
        base_url=args.base_url,
        model=args.model,
        auth_env=args.auth_env,
        top_logprobs_k=args.top_logprobs_k,
        n=args.N,
        r=args.R,
        p=args.P,
        asset_dir=args.asset_dir,
        ablation=frozenset(part.strip() for part in args.ablate.split(",") if part.strip()) if args.ablate else frozenset(),
    )
    try:
        config.validate()
        suite = _load_suite_arg(args.suite)
        methods = _parse_methods(args.methods, config)
        task_ids = [t.strip() for t in args.tasks.split(",")] if args.tasks else None
        if task_ids:
            known = {t.id for t in suite}
            missing = [t for t in task_ids if t not in known]
            if missing:
                raise ConfigError(f"unknown task id(s): {', '.join(missing)}")
        plan = RunPlan(
            suite=suite,
            methods=methods,
            trials=args.trials,
            seed=args.seed,
            shadow_judge=args.shadow_judge,
            log_path=args.log,
            task_ids=task_ids,
        )
        backend = config.build_backend()
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_plan(plan, backend)
    except Exception as exc:  # plan-level failure (per-episode failures are recorded, not raised)
        print(f"plan failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{'method':<32} {'success':>10} {'se':>10} {'trials':>7} {'episodes':>9}")
    for label in sorted(summary.methods):
        m = summary.methods[label]
        print(f"{label:<32} {m.mean_success:>10.4f} {m.se:>10.4f} {m.trials:>7d} {m.episodes:>9d}")
    if summary.log_path:
        print(f"episode log written to {summary.log_path}")
    return EXIT_OK


# --- check -----------------------------------------------------------------------


def cmd_check(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.file}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        suite = _load_suite_arg(args.suite)
        task = suite.get(args.task)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = static_score(raw, task.tools)
    for finding in report.findings:
        print(finding.render())
    print(f"score {report.score}")
    return EXIT_OK if report.score == 10 else EXIT_FAILURE


# --- calibrate ---------------------------------------------------------------------


def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        records = read_episode_log(args.log)
    except OSError as exc:
        print(f"error: cannot read log {args.log}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    points = metrics.confidence_points(records)
    if not points:
        print("error: no rubric-scored candidates in the log", file=sys.stderr)
        return EXIT_FAILURE
    report = metrics.calibration_report(points, bins=args.bins)
    if args.out_csv:
        _write_bins_csv(args.out_csv, report)
        print(f"reliability bins written to {args.out_csv}")
    print(f"n {report.n}")
    print(f"ece {_fmt(report.ece)}")
    print(f"auroc {_fmt(report.auroc)}")
    print(f"top_bin_accuracy {_fmt(report.top_bin_accuracy)}")
    if report.auroc is None:
        print("note: only one outcome class present; AUROC undefined", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _write_bins_csv(path: str, report: metrics.CalibrationReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_index", "interval_low", "interval_high", "count", "mean_confidence", "accuracy"])
        for b in report.bins:
            writer.writerow([b.index, _fmt(b.lower), _fmt(b.upper), b.count, _fmt(b.mean_confidence), _fmt(b.accuracy)])


# --- report ----------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    try:
        records = read_episode_log(args.log)
    except OSError as exc:
        print(f"error: cannot read log {args.log}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    price = (args.price_in, args.price_out) if args.price_in is not None and args.price_out is not None else None
    efficiency = metrics.efficiency_report(records, price=price)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    print("== efficiency ==")
    header = f"{'method':<32} {'n':>5} {'success':>9} {'wall_ms':>12} {'lm_calls':>9} {'tokens':>12} {'cost':>10}"
    print(header)
    for method in sorted(efficiency):
        e = efficiency[method]
        print(
            f"{method:<32} {e.n_episodes:>5d} {e.success_mean:>9.4f} {e.wall_ms_mean:>12.1f} "
            f"{e.lm_calls_mean:>9.2f} {e.tokens_total_mean:>12.1f} {_fmt(e.cost_mean):>10}"
        )
    if out_dir is not None:
        _write_efficiency_csv(out_dir / "efficiency.csv", efficiency)

    distribution = metrics.round_distribution(records)
    print("== round distribution ==")
    if distribution:
        for method in sorted(distribution):
            d = distribution[method]
            buckets = ", ".join(f"{k}: {v:.3f}" for k, v in d.fractions.items())
            print(f"{method}: {buckets} (mean rounds {d.mean_rounds:.2f}, n={d.n_episodes})")
        if out_dir is not None:
            _write_round_csv(out_dir / "round_distribution.csv", distribution)
    else:
        print("no iterative-method episodes in the log")

    print("== budget curves ==")
    try:
        curves = metrics.budget_curves(records)
    except metrics.MissingCandidateData:
        print("budget curves need a log recorded with shadow judging enabled (run with --shadow-judge)")
    else:
        for method in sorted(curves.success_vs_r):
            points = " ".join(f"R={p.budget}:{p.success_rate:.3f}" for p in curves.success_vs_r[method])
            print(f"{method}: {points}")
        for method in sorted(curves.success_vs_n):
            points = " ".join(f"N={p.budget}:{p.success_rate:.3f}" for p in curves.success_vs_n[method])
            print(f"{method}: {points}")
        if out_dir is not None:
            _write_curves_csv(out_dir / "budget_curves.csv", curves)

    if args.paired:
        try:
            method_a, method_b = [part.strip() for part in args.paired.split(",")]
        except ValueError:
            print("error: --paired needs exactly two method labels", file=sys.stderr)
            return EXIT_CONFIG
        print(f"== paired stats: {method_a} - {method_b} ==")
        try:
            stats = _paired_from_records(records, method_a, method_b)
        except (KeyError, ValueError, metrics.AllZeroGaps) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        print(
            f"n={stats.n_total} positive={stats.n_positive} mean={_fmt(stats.mean)} "
            f"sd={_fmt(stats.sd)} min={_fmt(stats.min)} t={_fmt(stats.t_statistic)}"
        )
        bound = ", p<=0.002" if stats.wilcoxon_p_two_sided <= 0.002 else ""
        print(f"wilcoxon: W={_fmt(stats.wilcoxon_w)}{bound} (exact p={stats.wilcoxon_p_two_sided!r})")
    return EXIT_OK


def _paired_from_records(records: list[dict], method_a: str, method_b: str) -> metrics.PairedStats:
    def trial_rates(method: str) -> dict[int, float]:
        by_trial: dict[int, list[bool]] = {}
        for record in records:
            if record["method"]["method"] == method:
                by_trial.setdefault(record["trial"], []).append(bool(record["success"]))
        if not by_trial:
            raise KeyError(f"no episodes for method {method!r}")
        return {trial: sum(flags) / len(flags) for trial, flags in by_trial.items()}

    rates_a = trial_rates(method_a)
    rates_b = trial_rates(method_b)
    shared = sorted(set(rates_a) & set(rates_b))
    if not shared:
        raise ValueError("the two methods share no trial indices")
    gaps = [rates_a[t] - rates_b[t] for t in shared]
    return metrics.paired_stats(gaps)


def _write_efficiency_csv(path: Path, efficiency: dict[str, metrics.MethodEfficiency]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "method", "n_episodes", "success_mean", "wall_ms_mean", "lm_calls_mean",
                "tokens_in_mean", "tokens_out_mean", "tokens_total_mean", "cost_mean",
            ]
        )
        for method in sorted(efficiency):
            e = efficiency[method]
            writer.writerow(
                [
                    e.method, e.n_episodes, _fmt(e.success_mean), _fmt(e.wall_ms_mean), _fmt(e.lm_calls_mean),
                    _fmt(e.tokens_in_mean), _fmt(e.tokens_out_mean), _fmt(e.tokens_total_mean), _fmt(e.cost_mean),
                ]
            )


def _write_round_csv(path: Path, distribution: dict[str, metrics.RoundDistribution]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "round_bucket", "fraction", "mean_rounds"])
        for method in sorted(distribution):
            d = distribution[method]
            for bucket, fraction in d.fractions.items():
                writer.writerow([method, bucket, _fmt(fraction), _fmt(d.mean_rounds)])


def _write_curves_csv(path: Path, curves: metrics.BudgetCurves) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["curve", "method", "budget", "success_rate", "n_episodes"])
        for method in sorted(curves.success_vs_r):
            for p in curves.success_vs_r[method]:
                writer.writerow(["success_vs_r", method, p.budget, _fmt(p.success_rate), p.n_episodes])
        for method in sorted(curves.success_vs_n):
            for p in curves.success_vs_n[method]:
                writer.writerow(["success_vs_n", method, p.budget, _fmt(p.success_rate), p.n_episodes])


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preflight", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a plan of methods over a task suite")
    run.add_argument("--suite", default="mini", help="'mini' or a path to a suite JSON file")
    run.add_argument("--methods", required=True, help="comma list, e.g. codeact,rubric_refine,best_of_n:sample_rubric")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--backend", choices=("playback", "http"), default="playback")
    run.add_argument("--script", help="playback script JSONL")
    run.add_argument("--strict-script", action="store_true", help="verify recorded request hashes")
    run.add_argument("--base-url", help="chat-completions endpoint base URL")
    run.add_argument("--model", help="model name for the http backend")
    run.add_argument("--auth-env", help="environment variable holding the bearer token")
    run.add_argument("--top-logprobs-k", type=int, default=5)
    run.add_argument("--N", type=int, default=5, help="best-of-N candidate count")
    run.add_argument("--R", type=int, default=5, help="max refinement rounds")
    run.add_argument("--P", type=int, default=2, help="early-stopping patience")
    run.add_argument("--ablate", help="comma list of rule groups to remove from system prompts")
    run.add_argument("--asset-dir", help="override the prompt asset directory")
    run.add_argument("--shadow-judge", action="store_true", help="record analysis-only per-candidate outcomes")
    run.add_argument("--tasks", help="comma list of task ids to restrict the run to")
    run.add_argument("--log", help="episode log output path (JSONL)")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="static-check a response file against a task registry")
    check.add_argument("--file", required=True)
    check.add_argument("--suite", default="mini")
    check.add_argument("--task", required=True, help="task id providing the tool registry")
    check.set_defaults(func=cmd_check)

    calibrate = sub.add_parser("calibrate", help="reliability bins, ECE, and AUROC from an episode log")
    calibrate.add_argument("--log", required=True)
    calibrate.add_argument("--bins", type=int, default=10)
    calibrate.add_argument("--out-csv", help="write reliability bins CSV here")
    calibrate.set_defaults(func=cmd_calibrate)

    report = sub.add_parser("report", help="efficiency, round distribution, budget curves, paired stats")
    report.add_argument("--log", required=True)
    report.add_argument("--out-dir", help="write CSV tables into this directory")
    report.add_argument("--paired", help="two method labels, e.g. rubric_refine,codeact")
    report.add_argument("--price-in", type=float, help="price per million input tokens")
    report.add_argument("--price-out", type=float, help="price per million output tokens")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
