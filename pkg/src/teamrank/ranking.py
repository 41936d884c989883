"""Swap-pair ranking: exhaustive baseline and the index-backed fast path.

Both methods rank (swap-out member, swap-in candidate) pairs by the exact
post-exchange distance to the target, with ties broken by ascending
(swap-out id, swap-in id). The exhaustive method scores every pair. The fast
path maps each member R to a *virtual object*: the rate vector that a
replacement would need, per unit of R's exchange parameter, to close every
weak-dimension gap exactly:

    v_i = max(0, (gap_i + r_i) / lambda_r) on weak dimensions, 0 on strong

Candidates are compared against it in rate space (attributes divided by
their own exchange parameter) through the one-sided key

    odis = sqrt(sum_i (w_i * max(v_i - rate_i, 0) * mask_i) ** 2)

For a fixed member, exact post-exchange distance equals lambda_r * odis
whenever the trade flips no strong dimension and the virtual object needed
no clipping, so candidates retrieved in ascending key order arrive already
ranked. Each member therefore contributes its first ``top_k`` index entries,
re-scored exactly; a member for which some candidate *could* flip a strong
dimension (it carries more than the team's whole surplus there, and a cheap
per-dimension rate minimum proves a capable candidate exists) falls back to
exhaustively re-scoring the in-memory candidate matrix for correctness. The
merged result is provably identical to the exhaustive baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import (
    ObjectRecord,
    ObjectSpace,
    TargetContext,
    TeamContext,
    diff,
    post_exchange_diff,
    post_exchange_distance,
    truncating_vector,
    weight_vector,
)
from .errors import DimensionMismatch, EmptySpace, InvalidArgument, NotAMember, StaleIndex

if TYPE_CHECKING:  # pragma: no cover
    from .nnindex import IoStats, NnIndex

__all__ = [
    "VirtualObject",
    "NormalizedCandidate",
    "SwapRecommendation",
    "CorollaryReport",
    "virtual_object",
    "normalized_candidate",
    "odis",
    "odis_keys",
    "brute_force_rank",
    "rtc_star_rank",
    "verify_corollary",
]


@dataclass(frozen=True)
class VirtualObject:
    """Per-member rate-space target used as the nearest-neighbour query point.

    ``clipped_dims`` marks weak dimensions whose raw value was negative and
    got clipped to zero (possible only with negative attribute values); those
    dimensions void the scaled-distance identity, so the flag is kept.
    """

    swap_out_id: str
    values: np.ndarray
    tv2: np.ndarray
    clipped_dims: np.ndarray

    @property
    def clipped(self) -> bool:
        return bool(self.clipped_dims.any())


@dataclass(frozen=True)
class NormalizedCandidate:
    """A candidate projected into rate space: attributes over its lambda."""

    object_id: str
    rates: np.ndarray


@dataclass(frozen=True)
class SwapRecommendation:
    swap_out_id: str
    swap_in_id: str
    new_distance: float
    odis: float


@dataclass(frozen=True)
class CorollaryReport:
    """Diagnostic pairing the exact distance with the index key.

    When ``strong_flip`` is False and the virtual object was not clipped,
    ``dis_prime == lambda_r * odis`` up to floating-point noise.
    """

    dis_prime: float
    odis: float
    lambda_r: float
    strong_flip: bool
    clipped: bool


def virtual_object(team: TeamContext, target: TargetContext, swap_out: ObjectRecord) -> VirtualObject:
    """Build the rate vector a replacement for ``swap_out`` would need."""
    if swap_out.id not in set(team.member_ids):
        raise NotAMember(f"object {swap_out.id!r} is not a member of the team")
    gap = diff(target, team)
    tv2 = truncating_vector(gap)
    raw = (gap + swap_out.attrs) / swap_out.lam
    clipped_dims = (raw < 0.0) & (tv2 > 0.0)
    values = np.maximum(raw, 0.0) * tv2
    return VirtualObject(swap_out_id=swap_out.id, values=values, tv2=tv2, clipped_dims=clipped_dims)


def normalized_candidate(record: ObjectRecord) -> NormalizedCandidate:
    return NormalizedCandidate(object_id=record.id, rates=record.attrs / record.lam)


def odis_keys(values: np.ndarray, tv2: np.ndarray, rates: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Vectorized one-sided key for every row of a rate matrix."""
    rates = np.atleast_2d(rates)
    if rates.shape[1] != values.size:
        raise DimensionMismatch(f"rates have {rates.shape[1]} dims, virtual object has {values.size}")
    shortfall = np.maximum(values[None, :] - rates, 0.0)
    terms = w * shortfall * tv2
    return np.sqrt(np.sum(terms * terms, axis=1))


def odis(v: VirtualObject, cand: NormalizedCandidate, w) -> float:
    """One-sided distance from a candidate's rates to the virtual object.

    Zero exactly when the candidate meets or exceeds the virtual object on
    every weak dimension.
    """
    w = weight_vector(w)
    if w.size != v.values.size:
        raise DimensionMismatch(f"weights have {w.size} dims, virtual object has {v.values.size}")
    return float(odis_keys(v.values, v.tv2, cand.rates, w)[0])


def _exchange_distance_rows(
    base: np.ndarray,
    lambda_r: float,
    attr_rows: np.ndarray,
    lambda_rows: np.ndarray,
    w: np.ndarray,
) -> np.ndarray:
    """Exact post-exchange distances for one member against candidate rows.

    ``base`` is gap + member attributes; each row's contribution is rescaled
    by lambda_r over its own lambda, and the mask comes from the
    post-exchange gap sign.
    """
    ratio = lambda_r / lambda_rows
    new_gap = base[None, :] - ratio[:, None] * attr_rows
    terms = w * np.maximum(new_gap, 0.0)
    return np.sqrt(np.sum(terms * terms, axis=1))


def _member_top(dist: np.ndarray, ids: np.ndarray, k: int) -> list[tuple[float, str, int]]:
    """Smallest k entries as (distance, id, row) with ties by ascending id."""
    n = dist.size
    if k >= n:
        candidates = np.arange(n)
    else:
        kth = np.partition(dist, k - 1)[k - 1]
        candidates = np.nonzero(dist <= kth)[0]
    order = np.lexsort((ids[candidates], dist[candidates]))
    chosen = candidates[order[:k]]
    return [(float(dist[i]), str(ids[i]), int(i)) for i in chosen]


def _merge_and_rank(
    per_member: list[tuple[ObjectRecord, list[tuple[float, str, int]], np.ndarray]],
    top_k: int,
) -> list[SwapRecommendation]:
    pool: list[tuple[float, str, str, float]] = []
    for record, entries, keys in per_member:
        for (dist, in_id, _row), key in zip(entries, keys):
            pool.append((dist, record.id, in_id, float(key)))
    pool.sort(key=lambda item: (item[0], item[1], item[2]))
    return [
        SwapRecommendation(swap_out_id=out_id, swap_in_id=in_id, new_distance=dist, odis=key)
        for dist, out_id, in_id, key in pool[:top_k]
    ]


def brute_force_rank(
    team: TeamContext,
    target: TargetContext,
    space: ObjectSpace,
    w,
    top_k: int,
    *,
    block_size: int | None = None,
    io: "IoStats | None" = None,
    stats_out: dict | None = None,
) -> list[SwapRecommendation]:
    """Score every (member, candidate) pair and keep the best ``top_k``.

    With ``block_size`` set, candidates are consumed through the block
    scanner once per member, charging ceil(n / block_size) reads per member
    to ``io``; results are identical either way. ``stats_out``, when given,
    receives per-member read counts.
    """
    if top_k < 1:
        raise InvalidArgument(f"top_k must be >= 1, got {top_k}")
    if len(space) < 1:
        raise EmptySpace("ranking needs a non-empty object space")
    w = weight_vector(w)
    gap = diff(target, team)
    if w.size != gap.size or space.dimension != gap.size:
        raise DimensionMismatch("team, target, space and weights must share a dimension")

    per_member = []
    per_member_reads = []
    for record in team.members:
        base = gap + record.attrs
        if block_size is None:
            dist = _exchange_distance_rows(base, record.lam, space.attrs, space.lambdas, w)
            per_member_reads.append(0)
        else:
            from .nnindex import scan_blocks

            reads = 0
            dist = np.empty(len(space), dtype=np.float64)
            for window in scan_blocks(space, block_size, io=io):
                reads += 1
                dist[window] = _exchange_distance_rows(
                    base, record.lam, space.attrs[window], space.lambdas[window], w
                )
            per_member_reads.append(reads)
        entries = _member_top(dist, space.ids, min(top_k, len(space)))
        v = virtual_object(team, target, record)
        rows = np.array([row for _, _, row in entries], dtype=np.intp)
        keys = odis_keys(v.values, v.tv2, space.rates()[rows], w) if rows.size else np.empty(0)
        per_member.append((record, entries, keys))
    if stats_out is not None:
        stats_out["per_member_reads"] = per_member_reads
    return _merge_and_rank(per_member, top_k)


def _flip_possible(gap: np.ndarray, record: ObjectRecord, min_rates: np.ndarray) -> bool:
    """Could any candidate turn one of the team's strong dimensions weak?

    On a strong dimension the post-exchange gap is (gap_i + r_i) minus the
    candidate's scaled rate; it can only go positive if some candidate's rate
    falls below (gap_i + r_i) / lambda_r. The comparison carries a small
    guard so borderline members take the exact fallback path.
    """
    strong = gap < 0.0
    if not strong.any():
        return False
    threshold = (gap + record.attrs) / record.lam
    guard = 1e-12 * np.maximum(1.0, np.abs(threshold))
    return bool(np.any(strong & (min_rates < threshold + guard)))


def rtc_star_rank(
    team: TeamContext,
    target: TargetContext,
    space: ObjectSpace,
    w,
    index: "NnIndex",
    top_k: int,
    *,
    stats_out: dict | None = None,
) -> list[SwapRecommendation]:
    """Index-backed ranking, guaranteed equal to :func:`brute_force_rank`.

    Per member, the first ``top_k`` index entries are fetched (ascending key,
    ceil(top_k / block_size) block reads) and re-scored exactly; the member's
    candidate list is replaced by an exhaustive in-memory re-score when a
    strong-dimension flip is possible or a clipped dimension meets negative
    candidate rates, cases where key order stops tracking exact order.
    ``stats_out``, when given, receives per-member read counts and the ids
    of members that took the fallback.
    """
    if top_k < 1:
        raise InvalidArgument(f"top_k must be >= 1, got {top_k}")
    if len(space) < 1:
        raise EmptySpace("ranking needs a non-empty object space")
    w = weight_vector(w)

    from .nnindex import fingerprint

    expected = fingerprint(space, team, target, w, index.block_size)
    if expected != index.fingerprint:
        raise StaleIndex(
            f"index fingerprint {index.fingerprint} does not match configuration {expected}"
        )

    gap = diff(target, team)
    min_rates = space.min_rates()
    rates = space.rates()

    per_member = []
    per_member_reads = []
    fallback_members = []
    for member_index, record in enumerate(team.members):
        base = gap + record.attrs
        v = virtual_object(team, target, record)

        before = index.query_io.blocks_read
        ordinals, keys = index.query_min_raw(member_index, top_k)
        per_member_reads.append(index.query_io.blocks_read - before)

        clip_unsafe = v.clipped and bool(np.any(v.clipped_dims & (min_rates < 0.0)))
        if _flip_possible(gap, record, min_rates) or clip_unsafe:
            fallback_members.append(record.id)
            dist = _exchange_distance_rows(base, record.lam, space.attrs, space.lambdas, w)
            entries = _member_top(dist, space.ids, min(top_k, len(space)))
            rows = np.array([row for _, _, row in entries], dtype=np.intp)
            entry_keys = odis_keys(v.values, v.tv2, rates[rows], w) if rows.size else np.empty(0)
        else:
            dist = _exchange_distance_rows(
                base, record.lam, space.attrs[ordinals], space.lambdas[ordinals], w
            )
            order = np.lexsort((space.ids[ordinals], dist))
            entries = [
                (float(dist[j]), str(space.ids[ordinals[j]]), int(ordinals[j])) for j in order
            ]
            entry_keys = keys[order]
        per_member.append((record, entries, entry_keys))
    if stats_out is not None:
        stats_out["per_member_reads"] = per_member_reads
        stats_out["fallback_members"] = fallback_members
    return _merge_and_rank(per_member, top_k)


def verify_corollary(
    team: TeamContext,
    target: TargetContext,
    swap_out: ObjectRecord,
    cand: ObjectRecord,
    w,
) -> CorollaryReport:
    """Report the exact distance next to the index key for one pair."""
    w = weight_vector(w)
    gap = diff(target, team)
    new_gap = post_exchange_diff(gap, swap_out, cand)
    strong_flip = bool(np.any((gap < 0.0) & (new_gap > 0.0)))
    dis_prime = post_exchange_distance(team, target, swap_out, cand, w)
    v = virtual_object(team, target, swap_out)
    key = odis(v, normalized_candidate(cand), w)
    return CorollaryReport(
        dis_prime=dis_prime,
        odis=key,
        lambda_r=float(swap_out.lam),
        strong_flip=strong_flip,
        clipped=v.clipped,
    )
