"""Experiment harness: scenario construction, metrics, comparison, export.

The hurricane scenario mirrors the reference deployment: a 25 km x 25 km
urban area, 16 base stations on a 4x4 grid clustered in one quadrant, four
corner relief camps, two opposite-edge adversary zones, and a 200-UAV fleet
of 50 connectivity, 100 delivery, 25 rescue, and 25 assessment drones.
Connectivity and delivery clusters operate within 10 km of the base
stations; the rescue cluster is deployed at least 20 km from every base
station.  Radio constants: 915 MHz carrier, 1 W transmit power, 6 dBi gains,
10 MHz bandwidth.

Scenario-level assumptions (documented, overridable): offered load is
1 tx/s per UAV; transaction payloads are 60 kbit (imagery-bearing field
reports); in-band noise is 2e-11 W, a hurricane-zone RF environment that
makes link capacity meaningfully distance-dependent at this map scale;
stake concentrates on connectivity drones (the fleet's network backbone),
with delivery staked lightly and rescue/assessment unstaked.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

from .consensus import Mission, ProtocolKind, byzantine_tolerance, elect_validators
from .faults import ByzantineStrategy, DdosWindow, FaultPlan, SpoofWindow
from .mobility import AreaBounds, MobilityConfig, Vec3
from .radio import LinkBudgetParams, NodeServiceProfile
from .scenario import (
    ClusterSpec,
    ConsensusParams,
    Region,
    Scenario,
    WorkloadParams,
    deploy_fleet,
    fault_plan_from_dict,
    fault_plan_to_dict,
    scenario_from_dict,
    scenario_to_dict,
)
from .simnet import EventTrace, RunResult, run as run_simulation
from .stats import AnovaResult, anova_oneway, DegenerateGroups, InsufficientSamples


class InvalidOverride(ValueError):
    def __init__(self, key: str) -> None:
        super().__init__(f"unknown scenario override: {key!r}")
        self.key = key


@dataclass(frozen=True)
class LatencyStats:
    count: int
    median: float
    mean: float
    p95: float
    p99: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count, "median": self.median, "mean": self.mean,
            "p95": self.p95, "p99": self.p99,
        }


EMPTY_STATS = LatencyStats(0, math.nan, math.nan, math.nan, math.nan)


@dataclass(frozen=True)
class MetricsReport:
    protocol: str
    seed: int
    duration_s: float
    throughput_tps: float
    txs_committed: int
    txs_offered: int
    blocks_committed: int
    latency: LatencyStats
    per_group: dict[str, LatencyStats]
    anova: Optional[AnovaResult]
    queue_wait_measured_mean_s: float
    queue_wait_analytic_mean_s: float
    counters: dict[str, int]
    trace_hash: str
    degradation: Optional[dict[str, float]] = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "protocol": self.protocol,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "throughput_tps": self.throughput_tps,
            "txs_committed": self.txs_committed,
            "txs_offered": self.txs_offered,
            "blocks_committed": self.blocks_committed,
            "latency": self.latency.to_dict(),
            "per_group": {k: v.to_dict() for k, v in sorted(self.per_group.items())},
            "queue_wait_measured_mean_s": self.queue_wait_measured_mean_s,
            "queue_wait_analytic_mean_s": self.queue_wait_analytic_mean_s,
            "counters": dict(sorted(self.counters.items())),
            "trace_hash": self.trace_hash,
        }
        if self.anova is not None:
            d["anova"] = {
                "f_statistic": self.anova.f_statistic,
                "p_value": self.anova.p_value,
                "df_between": self.anova.df_between,
                "df_within": self.anova.df_within,
                "group_means": list(self.anova.group_means),
            }
        if self.degradation is not None:
            d["degradation"] = dict(sorted(self.degradation.items()))
        return d


# --- scenario builders ---------------------------------------------------------


def _grid(x0: float, y0: float, count: int, spacing: float) -> tuple[tuple[float, float], ...]:
    return tuple(
        (x0 + i * spacing, y0 + j * spacing) for j in range(count) for i in range(count)
    )


def build_hurricane_scenario(overrides: Optional[dict[str, Any]] = None) -> Scenario:
    """The reference hurricane-response experiment with optional overrides.

    Overrides use flat keys (``duration_s``, ``tx_rate_per_uav`` ...) or
    dotted section paths (``consensus.n_validators``); unknown keys raise
    InvalidOverride.
    """
    area = AreaBounds(0.0, 25_000.0, 0.0, 25_000.0, 50.0, 500.0)
    scenario = Scenario(
        area=area,
        # 16 stations, 4x4; compressed into one quadrant so the rescue zone
        # can sit >= 20 km from every station inside the 25 km box.
        base_stations=_grid(500.0, 500.0, 4, 1500.0),
        relief_camps=(
            (500.0, 500.0), (24_500.0, 500.0), (500.0, 24_500.0), (24_500.0, 24_500.0),
        ),
        adversary_zones=(
            Region(0.0, 2_000.0, 10_000.0, 15_000.0),
            Region(23_000.0, 25_000.0, 10_000.0, 15_000.0),
        ),
        fleet={
            Mission.CONNECTIVITY: ClusterSpec(50, Region(2_000.0, 8_000.0, 2_000.0, 8_000.0), stake=1.0),
            Mission.DELIVERY: ClusterSpec(100, Region(0.0, 12_000.0, 0.0, 12_000.0), stake=0.3),
            Mission.RESCUE: ClusterSpec(25, Region(19_500.0, 24_500.0, 19_500.0, 24_500.0), stake=0.0),
            Mission.ASSESSMENT: ClusterSpec(25, Region(15_000.0, 21_000.0, 15_000.0, 21_000.0), stake=0.0),
        },
        radio=LinkBudgetParams(noise_power_w=2e-11),
        mobility=MobilityConfig(area=area),
        service=NodeServiceProfile(proc_latency_s=0.001, service_rate_msgs_per_s=1000.0),
        consensus=ConsensusParams(n_validators=12),
        workload=WorkloadParams(tx_rate_per_uav=1.0, payload_bits=60_000),
        duration_s=30.0,
    )
    if overrides:
        scenario = apply_overrides(scenario, overrides)
    return scenario


def build_desk_scenario(overrides: Optional[dict[str, Any]] = None) -> Scenario:
    """Small-fleet variant for the three-protocol latency comparison:
    24 UAVs, 20 elected validators, lighter offered load, 60 s horizon.

    Stakes and weights are chosen so the election provably keeps all 15
    near-infrastructure UAVs in the hybrid validator set: its two-thirds
    quorum (14) can complete on near links, while the all-node baseline's
    quorum (17 of 24) must always wait for distant validators.
    """
    base = {
        "fleet.connectivity.count": 8,
        "fleet.delivery.count": 7,
        "fleet.rescue.count": 5,
        "fleet.assessment.count": 4,
        "fleet.delivery.stake": 0.6,
        "consensus.n_validators": 20,
        "consensus.weights": [0.4, 0.2, 0.2, 0.2],
        "consensus.min_block_interval_s": 0.25,
        "tx_rate_per_uav": 0.2,
        # Heavy imagery payloads: block transmission dominates the round, so
        # the all-node baseline (whose quorum always crosses the slow far
        # links) runs round-bound while the elected set stays pacing-bound.
        "payload_bits": 1_000_000,
        "duration_s": 60.0,
    }
    if overrides:
        base.update(overrides)
    return build_hurricane_scenario(base)


# Flat override aliases into the serialized scenario document.
_FLAT_OVERRIDES = {
    "duration_s": ("run", "duration_s"),
    "trace_detail": ("run", "trace_detail"),
    "extra_delay_jitter_s": ("run", "extra_delay_jitter_s"),
    "proc_latency_s": ("run", "proc_latency_s"),
    "service_rate_msgs_per_s": ("run", "service_rate_msgs_per_s"),
    "tx_rate_per_uav": ("workload", "tx_rate_per_uav"),
    "payload_bits": ("workload", "payload_bits"),
    "n_validators": ("consensus", "n_validators"),
    "policy": ("consensus", "policy"),
    "timeout_s": ("consensus", "timeout_s"),
    "max_txs_per_block": ("consensus", "max_txs_per_block"),
    "min_block_interval_s": ("consensus", "min_block_interval_s"),
    "optimistic_fast_path": ("consensus", "optimistic_fast_path"),
    "noise_power_w": ("radio", "noise_power_w"),
    "bandwidth_hz": ("radio", "bandwidth_hz"),
}


def apply_overrides(scenario: Scenario, overrides: dict[str, Any]) -> Scenario:
    doc = scenario_to_dict(scenario)
    for key, value in overrides.items():
        if key in _FLAT_OVERRIDES:
            section, name = _FLAT_OVERRIDES[key]
            doc[section][name] = value
            continue
        parts = key.split(".")
        cursor: Any = doc
        try:
            for part in parts[:-1]:
                cursor = cursor[part]
            if parts[-1] not in cursor:
                raise KeyError(parts[-1])
            cursor[parts[-1]] = value
        except (KeyError, TypeError):
            raise InvalidOverride(key) from None
    return scenario_from_dict(doc)


def canonical_fault_plan(scenario: Scenario, seed: int) -> FaultPlan:
    """The fixed resilience-experiment attack plan for a (scenario, seed) run:
    a 2x-service-rate DDoS on two validators for 20% of the run, two
    equivocating byzantine validators (within tolerance), a 500 m spoof on
    five rescue UAVs, and no baseline loss."""
    uavs = deploy_fleet(scenario, seed)
    profiles = [u.profile for u in uavs]
    n = scenario.consensus.n_validators
    vset = elect_validators(profiles, scenario.consensus.weights, n)
    members = vset.member_nodes()
    f = byzantine_tolerance(vset.n)
    byz_count = min(2, f)
    byzantine = {members[i]: ByzantineStrategy.EQUIVOCATE for i in range(byz_count)}
    ddos_targets = [members[-1], members[-2]]
    window = 0.2 * scenario.duration_s
    start = 0.4 * scenario.duration_s
    rate = 2.0 * scenario.service.service_rate_msgs_per_s
    rescue_ids = [p.node for p in profiles if p.mission is Mission.RESCUE][:5]
    return FaultPlan(
        byzantine=byzantine,
        ddos=tuple(DdosWindow(t, start, window, rate) for t in ddos_targets),
        spoof=tuple(
            SpoofWindow(r, Vec3(500.0, 0.0, 0.0), 0.0, scenario.duration_s)
            for r in rescue_ids
        ),
        drop_prob=0.0,
    )


# --- metrics ---------------------------------------------------------------------


def nearest_rank(sorted_values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile (no interpolation); values must be sorted."""
    if not sorted_values:
        return math.nan
    rank = math.ceil(percentile / 100.0 * len(sorted_values))
    rank = min(max(rank, 1), len(sorted_values))
    return sorted_values[rank - 1]


def _latency_stats(values: Sequence[float]) -> LatencyStats:
    if not values:
        return EMPTY_STATS
    ordered = sorted(values)
    return LatencyStats(
        count=len(ordered),
        median=nearest_rank(ordered, 50),
        mean=sum(ordered) / len(ordered),
        p95=nearest_rank(ordered, 95),
        p99=nearest_rank(ordered, 99),
    )


def commit_latencies(trace: EventTrace) -> dict[str, list[float]]:
    """Per-mission commit latency samples: first block commit time minus the
    transaction's arrival time."""
    tx_arrivals: dict[int, tuple[float, str]] = {}
    for record in trace.by_kind("tx_arrival"):
        tx_arrivals[record["tx"]] = (record["t"], record["mission"])
    groups: dict[str, list[float]] = {}
    for record in trace.by_kind("block"):
        commit_t = record["t"]
        for tx_id in record["txs"]:
            if tx_id not in tx_arrivals:
                continue
            arrived, mission = tx_arrivals[tx_id]
            groups.setdefault(mission, []).append(commit_t - arrived)
    return groups


def compute_metrics(
    trace: EventTrace,
    protocol: str = "",
    seed: int = 0,
    queue_stats: Optional[dict[int, dict[str, float]]] = None,
) -> MetricsReport:
    """Extract the throughput/latency/ANOVA report from a completed trace."""
    end_records = trace.by_kind("end")
    if not end_records:
        raise ValueError("trace has no end record; run incomplete")
    end = end_records[-1]
    counters = dict(end["counters"])
    duration = end["duration_s"]

    groups = commit_latencies(trace)
    all_latencies = [v for g in groups.values() for v in g]
    txs_committed = counters.get("txs_committed", 0)
    throughput = txs_committed / duration if duration > 0 else 0.0

    anova: Optional[AnovaResult] = None
    anova_groups = [
        groups.get(m.value, [])
        for m in (Mission.CONNECTIVITY, Mission.DELIVERY, Mission.RESCUE)
    ]
    if all(len(g) >= 2 for g in anova_groups):
        try:
            anova = anova_oneway(anova_groups)
        except (DegenerateGroups, InsufficientSamples):
            anova = None

    measured = analytic = math.nan
    if queue_stats:
        served = sum(q["served"] for q in queue_stats.values())
        if served > 0:
            measured = sum(q["mean_wait_s"] * q["served"] for q in queue_stats.values()) / served
            analytic = sum(q["mean_len_over_rate_s"] * q["served"] for q in queue_stats.values()) / served

    return MetricsReport(
        protocol=protocol,
        seed=seed,
        duration_s=duration,
        throughput_tps=throughput,
        txs_committed=txs_committed,
        txs_offered=len(trace.by_kind("tx_arrival")),
        blocks_committed=counters.get("blocks_committed", 0),
        latency=_latency_stats(all_latencies),
        per_group={mission: _latency_stats(vals) for mission, vals in groups.items()},
        anova=anova,
        queue_wait_measured_mean_s=measured,
        queue_wait_analytic_mean_s=analytic,
        counters=counters,
        trace_hash=trace.hash_hex(),
    )


def degradation_pct(baseline: MetricsReport, attacked: MetricsReport) -> dict[str, float]:
    """Relative change under attack vs the same-seed baseline; positive = worse."""
    out: dict[str, float] = {}
    if baseline.throughput_tps > 0:
        out["throughput_pct"] = 100.0 * (
            (baseline.throughput_tps - attacked.throughput_tps) / baseline.throughput_tps
        )
    if baseline.latency.count and attacked.latency.count and baseline.latency.median > 0:
        out["median_latency_pct"] = 100.0 * (
            (attacked.latency.median - baseline.latency.median) / baseline.latency.median
        )
    return out


def run_experiment(
    scenario: Scenario,
    protocol: ProtocolKind,
    fault_plan: FaultPlan,
    seed: int,
    baseline: Optional[MetricsReport] = None,
    enforce_tolerance: bool = True,
) -> tuple[MetricsReport, RunResult]:
    result = run_simulation(
        scenario, fault_plan, protocol, seed, enforce_tolerance=enforce_tolerance
    )
    report = compute_metrics(
        result.trace, protocol=protocol.value, seed=seed, queue_stats=result.queue_stats
    )
    if baseline is not None:
        report = replace(report, degradation=degradation_pct(baseline, report))
    return report, result


def compare_protocols(
    scenario: Scenario, seeds: Sequence[int], fault_plan: Optional[FaultPlan] = None
) -> list[MetricsReport]:
    """Run all three protocols on identical (scenario, seed) pairs."""
    plan = fault_plan if fault_plan is not None else FaultPlan()
    reports = []
    for protocol in (ProtocolKind.HYBRID, ProtocolKind.PURE_DPOS, ProtocolKind.PURE_PBFT):
        for seed in seeds:
            report, _ = run_experiment(scenario, protocol, plan, seed)
            reports.append(report)
    reports.sort(key=lambda r: (r.protocol, r.seed))
    return reports


# --- export / replay ----------------------------------------------------------------

METRICS_COLUMNS = [
    "protocol", "seed", "duration_s", "throughput_tps", "txs_committed",
    "txs_offered", "blocks_committed", "latency_count", "latency_median",
    "latency_mean", "latency_p95", "latency_p99",
    "queue_wait_measured_mean_s", "queue_wait_analytic_mean_s", "trace_hash",
]

GROUPS_COLUMNS = ["protocol", "seed", "mission", "count", "median", "mean", "p95", "p99"]

ANOVA_COLUMNS = [
    "protocol", "seed", "f_statistic", "p_value", "df_between", "df_within", "group_means",
]


def _fmt(value: Any) -> str:
    # repr keeps the shortest round-trip decimal form for floats.
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export(
    report: MetricsReport,
    result: RunResult,
    out_dir: str | Path,
    scenario: Scenario,
    fault_plan: FaultPlan,
) -> dict[str, Path]:
    """Write metrics.csv, groups.csv, anova.csv, events.jsonl, summary.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "metrics": out / "metrics.csv",
            "groups": out / "groups.csv",
            "anova": out / "anova.csv",
            "events": out / "events.jsonl",
            "summary": out / "summary.json",
        }
        with open(paths["metrics"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            writer.writerow([
                _fmt(v) for v in (
                    report.protocol, report.seed, report.duration_s,
                    report.throughput_tps, report.txs_committed, report.txs_offered,
                    report.blocks_committed, report.latency.count,
                    report.latency.median, report.latency.mean,
                    report.latency.p95, report.latency.p99,
                    report.queue_wait_measured_mean_s,
                    report.queue_wait_analytic_mean_s, report.trace_hash,
                )
            ])
        with open(paths["groups"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(GROUPS_COLUMNS)
            for mission, stats in sorted(report.per_group.items()):
                writer.writerow([
                    _fmt(v) for v in (
                        report.protocol, report.seed, mission, stats.count,
                        stats.median, stats.mean, stats.p95, stats.p99,
                    )
                ])
        with open(paths["anova"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(ANOVA_COLUMNS)
            if report.anova is not None:
                writer.writerow([
                    _fmt(v) for v in (
                        report.protocol, report.seed, report.anova.f_statistic,
                        report.anova.p_value, report.anova.df_between,
                        report.anova.df_within,
                        ";".join(repr(m) for m in report.anova.group_means),
                    )
                ])
        with open(paths["events"], "w", encoding="utf-8") as fh:
            for line in result.trace.jsonl_lines():
                fh.write(line)
                fh.write("\n")
        summary = {
            "scenario": scenario_to_dict(scenario),
            "fault_plan": fault_plan_to_dict(fault_plan),
            "protocol": report.protocol,
            "seed": report.seed,
            "metrics": report.to_dict(),
            "trace_hash": report.trace_hash,
        }
        with open(paths["summary"], "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths
    except OSError as exc:
        raise OSError(f"export to {out} failed: {exc}") from exc


def replay(summary_path: str | Path) -> tuple[bool, str, str]:
    """Re-run the experiment recorded in summary.json and verify its trace
    hash.  Returns (matches, recorded_hash, recomputed_hash)."""
    with open(summary_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    scenario = scenario_from_dict(summary["scenario"])
    plan = fault_plan_from_dict(summary["fault_plan"])
    protocol = ProtocolKind(summary["protocol"])
    seed = int(summary["seed"])
    report, _ = run_experiment(
        scenario, protocol, plan, seed, enforce_tolerance=False
    )
    recorded = summary["trace_hash"]
    return report.trace_hash == recorded, recorded, report.trace_hash
