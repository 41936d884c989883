"""Command-line entry point.

Subcommands: ingest, weights, target, index build, rank, gen, gof, bench.
Results go to stdout (or --out) as JSON by default; --pretty renders simple
text tables instead. Diagnostics go to stderr. Exit codes: 0 success,
1 usage error, 2 data error. Every invocation echoes its flags into the
output payload so results are reproducible from the payload alone.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .core import diff, team_from_ids, truncated_distance, truncating_vector
from .dataio import (
    NbParams,
    chi_square_gof,
    gen_synthetic,
    load_manifest,
    load_objects,
    load_rosters,
    load_teams,
    write_objects_csv,
)
from .errors import InvalidArgument, MissingColumn, TeamRankError
from .nnindex import NnIndex, build_index, fingerprint
from .ranking import brute_force_rank, rtc_star_rank
from .weighting import compute_weights, select_target

__all__ = ["cli_main", "main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _config_echo(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _emit(payload: dict, args: argparse.Namespace) -> None:
    text = _render_pretty(payload) if getattr(args, "pretty", False) else json.dumps(payload, indent=2)
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _render_pretty(payload: dict, indent: int = 0) -> str:
    lines = []
    pad = "  " * indent
    for key, value in payload.items():
        if isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            lines.append(_render_pretty(value, indent + 1))
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            columns = list(value[0].keys())
            widths = [max(len(c), *(len(str(row.get(c, ""))) for row in value)) for c in columns]
            lines.append(f"{pad}{key}:")
            lines.append(pad + "  " + "  ".join(c.ljust(w) for c, w in zip(columns, widths)))
            for row in value:
                lines.append(pad + "  " + "  ".join(str(row.get(c, "")).ljust(w) for c, w in zip(columns, widths)))
        else:
            lines.append(f"{pad}{key}: {value}")
    return "\n".join(lines)


def _load_real(args):
    objects_manifest = load_manifest(args.manifest)
    teams_manifest = load_manifest(args.teams_manifest)
    space = load_objects(args.objects, objects_manifest)
    rosters = load_rosters(args.objects, objects_manifest)
    targets, wins = load_teams(args.teams, teams_manifest)
    stats = np.stack([t.aggregate for t in targets])
    weights = compute_weights(stats, wins).weights
    order = np.argsort(-wins.values, kind="stable")
    elite = [targets[i] for i in order[: args.elite_count]]
    return space, rosters, targets, weights, elite


def _cmd_ingest(args) -> dict:
    manifest = load_manifest(args.manifest)
    space = load_objects(args.objects, manifest)
    return {
        "config": _config_echo(args),
        "rows": len(space),
        "dimension": space.dimension,
        "attributes": list(space.attribute_names),
        "digest": space.digest(),
    }


def _cmd_weights(args) -> dict:
    manifest = load_manifest(args.teams_manifest)
    targets, wins = load_teams(args.teams, manifest)
    stats = np.stack([t.aggregate for t in targets])
    result = compute_weights(stats, wins)
    names = manifest.attributes
    return {
        "config": _config_echo(args),
        "weights": {name: float(w) for name, w in zip(names, result.weights)},
        "floored": [names[j] for j in result.floored],
    }


def _cmd_target(args) -> dict:
    space, rosters, _targets, weights, elite = _load_real(args)
    team_ids = [args.team] if args.team else sorted(rosters)
    selections = []
    for team_id in team_ids:
        if team_id not in rosters:
            raise InvalidArgument(f"team {team_id!r} has no roster rows in {args.objects}")
        team = team_from_ids(space, rosters[team_id], team_id=team_id)
        candidates = [t for t in elite if t.team_id != team_id] or elite
        sel = select_target(team, candidates, weights)
        selections.append({"team": sel.team_id, "target": sel.target_id, "distance": sel.distance})
    return {
        "config": _config_echo(args),
        "rule": bench_mod.TARGET_RULE,
        "selections": selections,
    }


def _resolve_team_target(args, space, rosters, weights, elite):
    if args.team not in rosters:
        raise InvalidArgument(f"team {args.team!r} has no roster rows in {args.objects}")
    team = team_from_ids(space, rosters[args.team], team_id=args.team)
    candidates = [t for t in elite if t.team_id != args.team] or elite
    sel = select_target(team, candidates, weights)
    target = next(t for t in candidates if t.team_id == sel.target_id)
    return team, target


def _cmd_index_build(args) -> dict:
    space, rosters, _targets, weights, elite = _load_real(args)
    team, target = _resolve_team_target(args, space, rosters, weights, elite)
    index = build_index(space, team, target, weights, args.block_size, args.index_dir)
    with index:
        payload = {
            "config": _config_echo(args),
            "fingerprint": index.fingerprint,
            "members": list(team.member_ids),
            "data_blocks_per_partition": index.data_blocks,
            "blocks_written": index.build_io.blocks_written,
            "files": [f"{index.fingerprint}.{i}.idx" for i in range(index.m)],
        }
    return payload


def _cmd_rank(args) -> dict:
    space, rosters, _targets, weights, elite = _load_real(args)
    team, target = _resolve_team_target(args, space, rosters, weights, elite)
    gap = diff(target, team)
    before = truncated_distance(gap, truncating_vector(gap), weights)

    if args.method == "bf":
        recs = brute_force_rank(team, target, space, weights, args.top_k)
    else:
        scratch = None
        index_dir = args.index_dir
        if index_dir is None:
            scratch = tempfile.TemporaryDirectory(prefix="teamrank-index-")
            index_dir = scratch.name
        try:
            fp = fingerprint(space, team, target, weights, args.block_size)
            if (Path(index_dir) / f"{fp}.0.idx").exists():
                index = NnIndex.open(index_dir, fp, space)
            else:
                index = build_index(space, team, target, weights, args.block_size, index_dir)
            with index:
                recs = rtc_star_rank(team, target, space, weights, index, args.top_k)
        finally:
            if scratch is not None:
                scratch.cleanup()

    return {
        "config": _config_echo(args),
        "team": team.team_id,
        "target": target.team_id,
        "distance_before": before,
        "recommendations": [
            {
                "swap_out": r.swap_out_id,
                "swap_in": r.swap_in_id,
                "new_distance": r.new_distance,
                "odis": r.odis,
            }
            for r in recs
        ],
    }


def _cmd_gen(args) -> dict:
    with open(args.params, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    params = {name: NbParams(**p) for name, p in raw.items()}
    space = gen_synthetic(
        params,
        count=args.count,
        seed=args.seed,
        lambda_range=(args.lambda_min, args.lambda_max),
    )
    write_objects_csv(space, args.out_csv)
    return {
        "config": _config_echo(args),
        "rows": len(space),
        "dimension": space.dimension,
        "attributes": list(space.attribute_names),
        "path": str(args.out_csv),
    }


def _cmd_gof(args) -> dict:
    import csv as csv_mod

    with open(args.csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv_mod.reader(fh)
        rows = list(reader)
    if not rows or len(rows) < 2:
        raise InvalidArgument(f"{args.csv}: need a header row plus data rows")
    header = rows[0]
    if args.column not in header:
        raise MissingColumn(f"{args.csv}: column {args.column!r} not found")
    col = header.index(args.column)
    samples = np.array([float(row[col]) for row in rows[1:]], dtype=np.float64)
    result = chi_square_gof(samples, args.r, args.p, args.alpha)
    return {
        "config": _config_echo(args),
        "statistic": result.statistic,
        "dof": result.dof,
        "accepted": result.accepted,
        "n_bins": result.n_bins,
    }


def _cmd_bench(args) -> dict | None:
    with open(args.config, "r", encoding="utf-8") as fh:
        config = bench_mod.ExperimentConfig.from_dict(json.load(fh))
    report = bench_mod.run_experiment(config)
    if args.out:
        bench_mod.emit_report(report, args.format, args.out)
        print(f"report written to {args.out}", file=sys.stderr)
        return None
    if args.format == "csv":
        with tempfile.TemporaryDirectory(prefix="teamrank-bench-") as tmp:
            path = Path(tmp) / "report.csv"
            bench_mod.emit_report(report, "csv", path)
            sys.stdout.write(path.read_text(encoding="utf-8"))
        return None
    return report.to_dict()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="teamrank", description="Team-context swap ranking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=None, help="write results here instead of stdout")
        p.add_argument("--pretty", action="store_true", help="render text tables instead of JSON")

    def add_real_inputs(p, with_team=True):
        p.add_argument("--objects", required=True, help="object CSV file")
        p.add_argument("--manifest", required=True, help="object manifest JSON")
        p.add_argument("--teams", required=True, help="team CSV file")
        p.add_argument("--teams-manifest", required=True, dest="teams_manifest", help="team manifest JSON")
        p.add_argument("--elite-count", type=int, default=10, dest="elite_count")
        if with_team:
            p.add_argument("--team", required=True, help="query team id")

    p = sub.add_parser("ingest", help="validate and summarize an object CSV")
    p.add_argument("--objects", required=True)
    p.add_argument("--manifest", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("weights", help="per-dimension weights from the team file")
    p.add_argument("--teams", required=True)
    p.add_argument("--teams-manifest", required=True, dest="teams_manifest")
    add_common(p)
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("target", help="select the nearest elite target per team")
    add_real_inputs(p, with_team=False)
    p.add_argument("--team", default=None, help="restrict to one team id")
    add_common(p)
    p.set_defaults(func=_cmd_target)

    p = sub.add_parser("index", help="index maintenance")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    pb = index_sub.add_parser("build", help="build the per-member index files")
    add_real_inputs(pb)
    pb.add_argument("--block-size", type=int, default=100, dest="block_size")
    pb.add_argument("--index-dir", required=True, dest="index_dir")
    add_common(pb)
    pb.set_defaults(func=_cmd_index_build)

    p = sub.add_parser("rank", help="rank swap pairs for one team")
    add_real_inputs(p)
    p.add_argument("--method", choices=("bf", "rtcstar"), required=True)
    p.add_argument("--top-k", type=int, default=10, dest="top_k")
    p.add_argument("--block-size", type=int, default=100, dest="block_size")
    p.add_argument("--index-dir", default=None, dest="index_dir")
    add_common(p)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("gen", help="generate a synthetic object CSV")
    p.add_argument("--params", required=True, help="JSON of attribute -> {r, p}")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-csv", required=True, dest="out_csv")
    p.add_argument("--lambda-min", type=float, default=500.0, dest="lambda_min")
    p.add_argument("--lambda-max", type=float, default=3000.0, dest="lambda_max")
    add_common(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("gof", help="chi-square goodness of fit for one CSV column")
    p.add_argument("--csv", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    add_common(p)
    p.set_defaults(func=_cmd_gof)

    p = sub.add_parser("bench", help="run a full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    add_common(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits directly for --help; keep its code for success paths
        return 0 if exc.code in (0, None) else 1

    try:
        payload = args.func(args)
    except (TeamRankError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if payload is not None:
        _emit(payload, args)
    return 0


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
