"""Analytics over episode logs: calibration, paired statistics, efficiency,
round-stopping distributions, and budget curves.

Everything here is a pure computation over already-recorded data; the only
outputs are numbers and CSV-ready tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

ITERATIVE_METHODS = ("rubric_refine", "fixed_rubric_refine", "static_refine")


class EmptyDataset(Exception):
    pass


class OneClassOnly(Exception):
    pass


class AllZeroGaps(Exception):
    pass


class MissingCandidateData(Exception):
    pass


# --- Calibration ---------------------------------------------------------------


@dataclass(frozen=True)
class ReliabilityBin:
    index: int  # 1-based
    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[ReliabilityBin, ...]
    ece: float
    auroc: float | None
    top_bin_accuracy: float | None
    n: int


def bin_index(confidence: float, bins: int) -> int:
    """Index m of the interval containing the confidence: the first interval is
    [0, 1/M], every later one is ((m-1)/M, m/M]."""
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence!r} outside [0, 1]")
    return max(1, math.ceil(confidence * bins))


def ece(points: Sequence[tuple[float, int]], bins: int = 10) -> CalibrationReport:
    """Expected calibration error over equal-width bins.

    ECE is the bin-size-weighted mean absolute gap between a bin's mean
    confidence and its accuracy; empty bins contribute nothing.
    """
    if not points:
        raise EmptyDataset("calibration needs at least one point")
    confs: dict[int, list[float]] = {}
    hits: dict[int, list[int]] = {}
    for confidence, success in points:
        m = bin_index(confidence, bins)
        confs.setdefault(m, []).append(confidence)
        hits.setdefault(m, []).append(1 if success else 0)
    total = len(points)
    out_bins = []
    error = 0.0
    for m in range(1, bins + 1):
        lower = 0.0 if m == 1 else (m - 1) / bins
        upper = m / bins
        if m not in confs:
            out_bins.append(ReliabilityBin(m, lower, upper, 0, 0.0, 0.0))
            continue
        count = len(confs[m])
        mean_confidence = sum(confs[m]) / count
        accuracy = sum(hits[m]) / count
        error += (count / total) * abs(mean_confidence - accuracy)
        out_bins.append(ReliabilityBin(m, lower, upper, count, mean_confidence, accuracy))
    top = out_bins[-1]
    top_bin_accuracy = top.accuracy if top.count else None
    return CalibrationReport(bins=tuple(out_bins), ece=error, auroc=None, top_bin_accuracy=top_bin_accuracy, n=total)


def auroc(points: Sequence[tuple[float, int]]) -> float:
    """Probability a random positive outranks a random negative, ties half.

    Computed by the rank formulation of the Mann-Whitney statistic.
    """
    positives = [score for score, success in points if success]
    negatives = [score for score, success in points if not success]
    if not positives or not negatives:
        raise OneClassOnly("AUROC needs both a success and a failure")
    values = sorted(positives + negatives)
    rank_of_value: dict[float, float] = {}  # average ranks for tied values
    i = 0
    while i < len(values):
        j = i
        while j < len(values) and values[j] == values[i]:
            j += 1
        rank_of_value[values[i]] = (i + 1 + j) / 2
        i = j
    rank_sum_pos = sum(rank_of_value[score] for score in positives)
    n_pos, n_neg = len(positives), len(negatives)
    u_statistic = rank_sum_pos - n_pos * (n_pos + 1) / 2
    return u_statistic / (n_pos * n_neg)


def calibration_report(points: Sequence[tuple[float, int]], bins: int = 10) -> CalibrationReport:
    report = ece(points, bins)
    try:
        area = auroc(points)
    except OneClassOnly:
        area = None
    return CalibrationReport(
        bins=report.bins, ece=report.ece, auroc=area, top_bin_accuracy=report.top_bin_accuracy, n=report.n
    )


# --- Paired statistics -----------------------------------------------------------


@dataclass(frozen=True)
class PairedStats:
    gaps: tuple[float, ...]
    mean: float
    sd: float
    min: float
    n_positive: int
    n_total: int
    wilcoxon_w: float
    wilcoxon_p_two_sided: float
    t_statistic: float


def _signed_rank_w(gaps: Sequence[float]) -> tuple[int, list[int], int]:
    """Doubled signed ranks of the nonzero gaps.

    Returns (W_obs, ranks, total), all doubled so tied average ranks stay
    integral.
    """
    nonzero = [g for g in gaps if g != 0]
    magnitudes = sorted(abs(g) for g in nonzero)
    doubled_rank: dict[float, int] = {}
    i = 0
    while i < len(magnitudes):
        j = i
        while j < len(magnitudes) and magnitudes[j] == magnitudes[i]:
            j += 1
        doubled_rank[magnitudes[i]] = i + 1 + j  # 2 * average rank
        i = j
    w_plus = sum(doubled_rank[abs(g)] for g in nonzero if g > 0)
    w_minus = sum(doubled_rank[abs(g)] for g in nonzero if g < 0)
    ranks = [doubled_rank[abs(g)] for g in nonzero]
    return min(w_plus, w_minus), ranks, sum(ranks)


def _exact_two_sided_p(w_obs: int, ranks: list[int], total: int) -> float:
    """Exact two-sided p over all sign assignments of the ranks.

    Counts assignments whose min rank-sum is at most the observed one via a
    subset-sum distribution, which enumerates the same 2^n assignments
    without materializing them.
    """
    counts = [0] * (total + 1)
    counts[0] = 1
    for rank in ranks:
        for value in range(total, rank - 1, -1):
            counts[value] += counts[value - rank]
    threshold_low = w_obs
    threshold_high = total - w_obs
    favorable = sum(c for value, c in enumerate(counts) if value <= threshold_low or value >= threshold_high)
    return favorable / (2 ** len(ranks))


def paired_stats(gaps: Sequence[float]) -> PairedStats:
    """Gap summary plus the exact Wilcoxon signed-rank test on nonzero gaps.

    Tied magnitudes take average ranks. The t statistic is reported raw,
    without a p-value.
    """
    if not gaps:
        raise ValueError("paired_stats needs at least one gap")
    n = len(gaps)
    mean = sum(gaps) / n
    sd = math.sqrt(sum((g - mean) ** 2 for g in gaps) / (n - 1)) if n > 1 else 0.0
    if sd > 0:
        t_statistic = mean / (sd / math.sqrt(n))
    else:
        t_statistic = math.inf if mean > 0 else (-math.inf if mean < 0 else math.nan)
    nonzero = [g for g in gaps if g != 0]
    if not nonzero:
        raise AllZeroGaps("the signed-rank test is undefined when every gap is zero")
    w2_obs, ranks2, total2 = _signed_rank_w(gaps)
    p = _exact_two_sided_p(w2_obs, ranks2, total2)
    return PairedStats(
        gaps=tuple(gaps),
        mean=mean,
        sd=sd,
        min=min(gaps),
        n_positive=sum(1 for g in gaps if g > 0),
        n_total=n,
        wilcoxon_w=w2_obs / 2,
        wilcoxon_p_two_sided=p,
        t_statistic=t_statistic,
    )


# --- Episode-log analytics --------------------------------------------------------


def _method(record: dict) -> str:
    return record["method"]["method"]


def confidence_points(records: Sequence[dict], prefer_shadow: bool = True) -> list[tuple[float, int]]:
    """(normalized confidence, success) pairs from rubric-scored candidates.

    With shadow data present, every scored candidate contributes through its
    shadow-judged outcome; otherwise only chosen candidates contribute through
    the episode outcome.
    """
    shadow_available = prefer_shadow and any(
        c.get("shadow_success") is not None for r in records for c in r.get("candidates", ())
    )
    points: list[tuple[float, int]] = []
    for record in records:
        for candidate in record.get("candidates", ()):
            report = candidate.get("score_report")
            if report is None:
                continue
            confidence = report["score"] / 10
            if shadow_available:
                if candidate.get("shadow_success") is None:
                    continue
                points.append((confidence, 1 if candidate["shadow_success"] else 0))
            elif candidate.get("round") == record.get("chosen_round"):
                points.append((confidence, 1 if record.get("success") else 0))
    return points


@dataclass(frozen=True)
class MethodEfficiency:
    method: str
    n_episodes: int
    success_mean: float
    wall_ms_mean: float
    lm_calls_mean: float
    tokens_in_mean: float
    tokens_out_mean: float
    tokens_total_mean: float
    cost_mean: float | None


def efficiency_report(
    records: Sequence[dict], price: tuple[float, float] | None = None
) -> dict[str, MethodEfficiency]:
    """Arithmetic per-method means; cost uses per-million-token prices."""
    if not records:
        raise EmptyDataset("no episodes to report on")
    grouped: dict[str, list[dict]] = {}
    for record in records:
        grouped.setdefault(_method(record), []).append(record)
    out = {}
    for method, group in grouped.items():
        n = len(group)
        tokens_in = [r["totals"]["tokens_in"] for r in group]
        tokens_out = [r["totals"]["tokens_out"] for r in group]
        cost = None
        if price is not None:
            per_in, per_out = price
            cost = sum(ti * per_in / 1e6 + to * per_out / 1e6 for ti, to in zip(tokens_in, tokens_out)) / n
        out[method] = MethodEfficiency(
            method=method,
            n_episodes=n,
            success_mean=sum(1 for r in group if r["success"]) / n,
            wall_ms_mean=sum(r["totals"]["wall_ms"] for r in group) / n,
            lm_calls_mean=sum(r["totals"]["lm_calls"] for r in group) / n,
            tokens_in_mean=sum(tokens_in) / n,
            tokens_out_mean=sum(tokens_out) / n,
            tokens_total_mean=(sum(tokens_in) + sum(tokens_out)) / n,
            cost_mean=cost,
        )
    return out


@dataclass(frozen=True)
class RoundDistribution:
    method: str
    fractions: dict[str, float]  # buckets "1", "2", "3", "4+"; zero buckets omitted
    mean_rounds: float
    n_episodes: int


def round_distribution(records: Sequence[dict], methods: Sequence[str] = ITERATIVE_METHODS) -> dict[str, RoundDistribution]:
    """Fraction of episodes stopping at round 1, 2, 3, and 4 or later.

    Episodes aborted by backend errors never entered a round and are excluded.
    """
    out = {}
    for method in methods:
        group = [r for r in records if _method(r) == method and not r.get("error")]
        if not group:
            continue
        rounds = [r["totals"]["rounds_used"] for r in group]
        n = len(rounds)
        fractions: dict[str, float] = {}
        for bucket in ("1", "2", "3"):
            count = sum(1 for value in rounds if value == int(bucket))
            if count:
                fractions[bucket] = count / n
        late = sum(1 for value in rounds if value >= 4)
        if late:
            fractions["4+"] = late / n
        out[method] = RoundDistribution(
            method=method, fractions=fractions, mean_rounds=sum(rounds) / n, n_episodes=n
        )
    return out


@dataclass(frozen=True)
class CurvePoint:
    budget: int
    success_rate: float
    n_episodes: int


@dataclass(frozen=True)
class BudgetCurves:
    success_vs_r: dict[str, tuple[CurvePoint, ...]]
    success_vs_n: dict[str, tuple[CurvePoint, ...]]


def _candidate_score(candidate: dict) -> float:
    if candidate.get("score_report") is not None:
        return float(candidate["score_report"]["score"])
    if candidate.get("static_report") is not None:
        return float(candidate["static_report"]["score"])
    if candidate.get("selection_score") is not None:
        return float(candidate["selection_score"])
    return 0.0


def _require_shadow(record: dict) -> None:
    for candidate in record.get("candidates", ()):
        if candidate.get("shadow_success") is None:
            raise MissingCandidateData(
                f"episode for task {record.get('task_id')!r} lacks shadow-judge data; "
                "record the run with shadow_judge enabled"
            )


def _truncated_success(record: dict, budget: int) -> int:
    available = [c for c in record["candidates"] if c["round"] <= budget]
    if not available:
        return 0
    best = available[0]
    for candidate in available[1:]:
        if _candidate_score(candidate) > _candidate_score(best):
            best = candidate
    return 1 if best.get("shadow_success") else 0


def budget_curves(records: Sequence[dict]) -> BudgetCurves:
    """Success under truncated budgets, reconstructed from shadow-judged
    candidate records: best-scored candidate among the first r rounds for the
    iterative loop, selection over the first n samples for best-of-N."""
    refine = [r for r in records if _method(r) in ITERATIVE_METHODS and r.get("candidates")]
    selection = [r for r in records if _method(r).startswith("best_of_n") and r.get("candidates")]
    if not refine and not selection:
        raise MissingCandidateData("no candidate-level records present in the log")
    for record in (*refine, *selection):
        _require_shadow(record)

    success_vs_r: dict[str, tuple[CurvePoint, ...]] = {}
    for method in ITERATIVE_METHODS:
        group = [r for r in refine if _method(r) == method]
        if not group:
            continue
        max_rounds = max(len(r["candidates"]) for r in group)
        points = []
        for budget in range(1, max_rounds + 1):
            wins = sum(_truncated_success(r, budget) for r in group)
            points.append(CurvePoint(budget=budget, success_rate=wins / len(group), n_episodes=len(group)))
        success_vs_r[method] = tuple(points)

    success_vs_n: dict[str, tuple[CurvePoint, ...]] = {}
    selection_methods = sorted({_method(r) for r in selection})
    for method in selection_methods:
        group = [r for r in selection if _method(r) == method]
        max_candidates = max(len(r["candidates"]) for r in group)
        points = []
        for budget in range(1, max_candidates + 1):
            wins = sum(_truncated_success(r, budget) for r in group)
            points.append(CurvePoint(budget=budget, success_rate=wins / len(group), n_episodes=len(group)))
        success_vs_n[method] = tuple(points)

    return BudgetCurves(success_vs_r=success_vs_r, success_vs_n=success_vs_n)
