"""End-to-end experiment driver with machine-readable reports.

A run takes a dataset (synthetic league or CSV pair), forms query teams,
selects a target per team, ranks swap pairs with both methods, and records
distances, exact block I/O, and wall-clock timings. Query timing is the
median of ``timing_repeats`` runs after ``timing_warmup`` warm-up runs,
with sub-millisecond calls batched inside each timed sample (timeit-style,
floor configurable via ``timing_min_sample_s``) so the per-call medians are
stable; index build time is measured once since builds are deterministic
and expensive. I/O numbers come from a dedicated accounting pass whose
counters are snapshotted before the timing runs start.

Synthetic target modes:

* ``dominant``: the target is the team's own aggregate scaled up by
  ``target_margin``, so every dimension is weak. This isolates the index's
  constant-I/O behaviour from data-dependent fallback re-scoring.
* ``elite``: ``elite_count`` independently sampled team aggregates, scaled by
  ``target_margin``, with the nearest chosen per query team. Strong
  dimensions and fallbacks do occur here.

Reports serialize losslessly to JSON (the round-trip format) and to a flat,
type-tagged CSV carrying the same numbers at full precision.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ObjectSpace, TargetContext, TeamContext, diff, team_from_ids, truncated_distance, truncating_vector
from .dataio import NbParams, gen_synthetic, load_manifest, load_objects, load_rosters, load_teams
from .errors import InvalidArgument
from .nnindex import IoStats, build_index
from .ranking import SwapRecommendation, brute_force_rank, rtc_star_rank
from .weighting import compute_weights, select_target

__all__ = [
    "ExperimentConfig",
    "TeamRow",
    "ExperimentReport",
    "run_experiment",
    "emit_report",
    "parse_report",
]

SCHEMA_VERSION = 1
TARGET_RULE = "weighted-truncated-distance-argmin"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; echoed verbatim into the report."""

    dataset: dict
    block_size: int = 100
    top_k: int = 10
    methods: tuple[str, ...] = ("bf", "rtcstar")
    seed: int = 0
    team_size: int = 5
    n_teams: int = 1
    team_ids: tuple[str, ...] | None = None
    target_mode: str = "dominant"
    target_margin: float = 0.10
    elite_count: int = 10
    weights: tuple[float, ...] | None = None
    timing_repeats: int = 5
    timing_warmup: int = 1
    timing_min_sample_s: float = 0.02
    index_dir: str | None = None

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "block_size": self.block_size,
            "top_k": self.top_k,
            "methods": list(self.methods),
            "seed": self.seed,
            "team_size": self.team_size,
            "n_teams": self.n_teams,
            "team_ids": list(self.team_ids) if self.team_ids is not None else None,
            "target_mode": self.target_mode,
            "target_margin": self.target_margin,
            "elite_count": self.elite_count,
            "weights": list(self.weights) if self.weights is not None else None,
            "timing_repeats": self.timing_repeats,
            "timing_warmup": self.timing_warmup,
            "timing_min_sample_s": self.timing_min_sample_s,
            "index_dir": self.index_dir,
            "target_rule": TARGET_RULE,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("methods", "team_ids", "weights"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class TeamRow:
    team_id: str
    target_id: str
    distance_before: float
    distance_after: float
    methods_agree: bool
    recommendations: list[dict]
    io: dict
    timing: dict

    def to_dict(self) -> dict:
        return {
            "team_id": self.team_id,
            "target_id": self.target_id,
            "distance_before": self.distance_before,
            "distance_after": self.distance_after,
            "methods_agree": self.methods_agree,
            "recommendations": self.recommendations,
            "io": self.io,
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TeamRow":
        return cls(**data)


@dataclass
class ExperimentReport:
    config: dict
    rows: list[TeamRow]
    io: dict
    timing: dict
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "rows": [r.to_dict() for r in self.rows],
            "io": self.io,
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            schema_version=data["schema_version"],
            config=data["config"],
            rows=[TeamRow.from_dict(r) for r in data["rows"]],
            io=data["io"],
            timing=data["timing"],
        )


def _recommendations_payload(recs: Sequence[SwapRecommendation]) -> list[dict]:
    return [
        {
            "swap_out": r.swap_out_id,
            "swap_in": r.swap_in_id,
            "new_distance": r.new_distance,
            "odis": r.odis,
        }
        for r in recs
    ]


def _lists_agree(a: Sequence[SwapRecommendation], b: Sequence[SwapRecommendation]) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if (x.swap_out_id, x.swap_in_id) != (y.swap_out_id, y.swap_in_id):
            return False
        if abs(x.new_distance - y.new_distance) > 1e-9 * max(1.0, abs(y.new_distance)):
            return False
    return True


def _median_time(fn, warmup: int, repeats: int, min_sample_s: float = 0.02) -> float:
    """Median per-call wall-clock over ``repeats`` samples after warm-up.

    Sub-millisecond callables are batched inside each timed sample until the
    sample lasts at least ``min_sample_s``, timeit-style, so scheduler jitter
    does not swamp the measurement; the reported value is always per call.
    """
    single = float("inf")
    for _ in range(max(1, warmup)):
        start = time.perf_counter()
        fn()
        single = min(single, time.perf_counter() - start)
    inner = max(1, min(1000, math.ceil(min_sample_s / max(single, 1e-9))))
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - start) / inner)
    return statistics.median(samples)


def _load_dataset(config: ExperimentConfig):
    """Return (space, teams, targets-or-None, weights)."""
    ds = config.dataset
    kind = ds.get("kind", "synthetic")
    if kind == "synthetic":
        params = {name: NbParams(**p) for name, p in ds["params"].items()}
        space = gen_synthetic(
            params,
            count=int(ds["n"]),
            seed=int(ds.get("seed", config.seed)),
            lambda_range=tuple(ds.get("lambda_range", (500.0, 3000.0))),
        )
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(101,)))
        teams = []
        for i in range(config.n_teams):
            member_ids = rng.choice(space.ids, size=config.team_size, replace=False)
            teams.append(team_from_ids(space, member_ids, team_id=f"team{i:02d}"))
        if config.weights is not None:
            weights = np.asarray(config.weights, dtype=np.float64)
        else:
            weights = np.ones(space.dimension)
        return space, teams, None, weights

    if kind == "csv":
        players_manifest = load_manifest(ds["players_manifest"])
        teams_manifest = load_manifest(ds["teams_manifest"])
        space = load_objects(ds["players"], players_manifest)
        rosters = load_rosters(ds["players"], players_manifest)
        targets, wins = load_teams(ds["teams"], teams_manifest)
        stats = np.stack([t.aggregate for t in targets])
        weights = compute_weights(stats, wins).weights
        wanted = config.team_ids or tuple(rosters)
        teams = [team_from_ids(space, rosters[tid], team_id=tid) for tid in wanted]
        order = np.argsort(-wins.values, kind="stable")
        elite = [targets[i] for i in order[: config.elite_count]]
        return space, teams, (targets, elite), weights

    raise InvalidArgument(f"unknown dataset kind {kind!r}")


def _target_from_elite(team: TeamContext, elite: Sequence[TargetContext], weights) -> TargetContext:
    candidates = [t for t in elite if t.team_id != team.team_id] or list(elite)
    selection = select_target(team, candidates, weights)
    for cand in candidates:
        if cand.team_id == selection.target_id:
            return cand
    raise InvalidArgument(f"selected target {selection.target_id!r} missing from elite set")


def _synthetic_elite(space: ObjectSpace, config: ExperimentConfig) -> list[TargetContext]:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(202,)))
    elite = []
    for j in range(config.elite_count):
        member_ids = rng.choice(space.ids, size=config.team_size, replace=False)
        agg = team_from_ids(space, member_ids, team_id=f"elite{j:02d}").aggregate
        elite.append(
            TargetContext(team_id=f"elite{j:02d}", aggregate=agg * (1.0 + config.target_margin))
        )
    return elite


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every configured team through every configured method."""
    space, teams, loaded, weights = _load_dataset(config)

    synthetic_elite = None
    if loaded is None and config.target_mode == "elite":
        synthetic_elite = _synthetic_elite(space, config)

    rows: list[TeamRow] = []
    own_dir = None
    if config.index_dir is None:
        own_dir = tempfile.TemporaryDirectory(prefix="teamrank-index-")
        index_dir = own_dir.name
    else:
        index_dir = config.index_dir
    try:
        for team in teams:
            if loaded is not None:
                target = _target_from_elite(team, loaded[1], weights)
            elif config.target_mode == "dominant":
                target = TargetContext(
                    team_id=f"{team.team_id}-target",
                    aggregate=team.aggregate * (1.0 + config.target_margin),
                )
            elif config.target_mode == "elite":
                target = _target_from_elite(team, synthetic_elite, weights)
            else:
                raise InvalidArgument(f"unknown target mode {config.target_mode!r}")

            gap = diff(target, team)
            distance_before = truncated_distance(gap, truncating_vector(gap), weights)

            row_io: dict = {}
            row_timing: dict = {}
            results: dict[str, list[SwapRecommendation]] = {}

            if "bf" in config.methods:
                io = IoStats()
                stats: dict = {}
                results["bf"] = brute_force_rank(
                    team, target, space, weights, config.top_k,
                    block_size=config.block_size, io=io, stats_out=stats,
                )
                snap = io.snapshot()
                row_io["bf"] = {
                    "blocks_read": snap.blocks_read,
                    "blocks_written": 0,
                    "queries_served": 0,
                    "per_member_reads": stats.get("per_member_reads", []),
                }
                row_timing["bf"] = {
                    "build_s": 0.0,
                    "query_s": _median_time(
                        lambda: brute_force_rank(
                            team, target, space, weights, config.top_k,
                            block_size=config.block_size, io=IoStats(),
                        ),
                        config.timing_warmup,
                        config.timing_repeats,
                        config.timing_min_sample_s,
                    ),
                }

            if "rtcstar" in config.methods:
                build_start = time.perf_counter()
                index = build_index(space, team, target, weights, config.block_size, index_dir)
                build_s = time.perf_counter() - build_start
                with index:
                    stats = {}
                    index.reset_query_io()
                    results["rtcstar"] = rtc_star_rank(
                        team, target, space, weights, index, config.top_k, stats_out=stats
                    )
                    snap = index.query_io.snapshot()
                    build_snap = index.build_io.snapshot()
                    row_io["rtcstar"] = {
                        "blocks_read": snap.blocks_read,
                        "blocks_written": build_snap.blocks_written,
                        "queries_served": snap.queries_served,
                        "per_member_reads": stats.get("per_member_reads", []),
                        "fallback_members": stats.get("fallback_members", []),
                    }
                    row_timing["rtcstar"] = {
                        "build_s": build_s,
                        "query_s": _median_time(
                            lambda: rtc_star_rank(team, target, space, weights, index, config.top_k),
                            config.timing_warmup,
                            config.timing_repeats,
                            config.timing_min_sample_s,
                        ),
                    }

            method_names = [m for m in config.methods if m in results]
            reference = results[method_names[0]]
            agree = all(_lists_agree(results[m], reference) for m in method_names[1:])
            best_after = reference[0].new_distance if reference else distance_before

            rows.append(
                TeamRow(
                    team_id=team.team_id,
                    target_id=target.team_id,
                    distance_before=distance_before,
                    distance_after=best_after,
                    methods_agree=agree,
                    recommendations=_recommendations_payload(reference),
                    io=row_io,
                    timing=row_timing,
                )
            )
    finally:
        if own_dir is not None:
            own_dir.cleanup()

    totals_io: dict = {}
    totals_timing: dict = {}
    for method in config.methods:
        method_rows = [r for r in rows if method in r.io]
        if not method_rows:
            continue
        totals_io[method] = {
            "blocks_read": sum(r.io[method]["blocks_read"] for r in method_rows),
            "blocks_written": sum(r.io[method]["blocks_written"] for r in method_rows),
            "queries_served": sum(r.io[method]["queries_served"] for r in method_rows),
        }
        totals_timing[method] = {
            "build_s": sum(r.timing[method]["build_s"] for r in method_rows),
            "query_s": sum(r.timing[method]["query_s"] for r in method_rows),
        }

    return ExperimentReport(
        config=config.to_dict(),
        rows=rows,
        io=totals_io,
        timing=totals_timing,
    )


CSV_COLUMNS = [
    "record_type", "team", "target", "distance_before", "distance_after", "methods_agree",
    "method", "rank", "swap_out", "swap_in", "new_distance", "odis",
    "blocks_read", "blocks_written", "queries_served", "build_s", "query_s",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: ExperimentReport, format: str, path) -> None:
    """Serialize a report; JSON is lossless, CSV is flat and plot-ready.

    Both renderings print floats with repr, so numeric values agree between
    formats to full precision.
    """
    path = Path(path)
    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")
        return
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)

            def emit(record_type, **cells):
                writer.writerow([_fmt(cells.get(c)) if c != "record_type" else record_type for c in CSV_COLUMNS])

            for row in report.rows:
                emit(
                    "team",
                    team=row.team_id,
                    target=row.target_id,
                    distance_before=row.distance_before,
                    distance_after=row.distance_after,
                    methods_agree=row.methods_agree,
                )
                for rank, rec in enumerate(row.recommendations, start=1):
                    emit(
                        "recommendation",
                        team=row.team_id,
                        rank=rank,
                        swap_out=rec["swap_out"],
                        swap_in=rec["swap_in"],
                        new_distance=rec["new_distance"],
                        odis=rec["odis"],
                    )
                for method, io in row.io.items():
                    emit(
                        "io",
                        team=row.team_id,
                        method=method,
                        blocks_read=io["blocks_read"],
                        blocks_written=io["blocks_written"],
                        queries_served=io["queries_served"],
                    )
                for method, timing in row.timing.items():
                    emit(
                        "timing",
                        team=row.team_id,
                        method=method,
                        build_s=timing["build_s"],
                        query_s=timing["query_s"],
                    )
            for method, io in report.io.items():
                emit("io", team="__total__", method=method, **io)
            for method, timing in report.timing.items():
                emit("timing", team="__total__", method=method, **timing)
        return
    raise InvalidArgument(f"unknown report format {format!r}")


def parse_report(path) -> ExperimentReport:
    """Load a JSON report back into structured form."""
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentReport.from_dict(json.load(fh))
