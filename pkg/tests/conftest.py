"""Shared fixtures: seeded random problem instances used across test modules.

Instances use count-like non-negative integer attributes with continuous
exchange parameters, the regime the library targets. Team members are always
drawn from the object space, so the identity swap is available.
"""

from dataclasses import dataclass

import numpy as np
from hypothesis import settings

from teamrank.core import ObjectRecord, ObjectSpace, TargetContext, TeamContext, team_from_ids
from teamrank.dataio import NbParams, gen_synthetic
from teamrank.ranking import virtual_object

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


@dataclass
class Instance:
    seed: int
    space: ObjectSpace
    team: TeamContext
    target: TargetContext
    weights: np.ndarray
    top_k: int
    block_size: int


def random_instance(
    seed: int,
    *,
    n: int | None = None,
    d: int | None = None,
    m: int | None = None,
    lambda_mode: str = "uniform",
    inject_dominator: bool = False,
) -> Instance:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = int(rng.integers(20, 501)) if n is None else n
    d = int(rng.integers(2, 12)) if d is None else d
    m = int(rng.integers(2, 16)) if m is None else m
    m = min(m, n)

    params = {
        f"a{j}": NbParams(r=float(rng.uniform(0.5, 2.2)), p=float(rng.uniform(0.005, 0.35)))
        for j in range(d)
    }
    space = gen_synthetic(params, count=n, seed=int(rng.integers(0, 2**31)), lambda_range=(1.0, 100.0))
    if lambda_mode == "ones":
        space = ObjectSpace(
            ids=space.ids,
            lambdas=np.ones(n),
            attrs=space.attrs,
            attribute_names=space.attribute_names,
        )

    member_ids = rng.choice(space.ids, size=m, replace=False)
    team = team_from_ids(space, member_ids, team_id="C")

    other = team_from_ids(space, rng.choice(space.ids, size=m, replace=False), team_id="X")
    factors = rng.uniform(0.7, 1.4, size=d)
    target = TargetContext(team_id="T", aggregate=other.aggregate * factors)

    weights = rng.uniform(0.1, 2.0, size=d)
    top_k = int(rng.integers(1, 16))
    block_size = int(rng.choice([1, 2, 3, 4, 7, 10, 50]))

    if inject_dominator:
        v = virtual_object(team, target, team.members[0])
        dom = ObjectRecord(
            id="zzz-dominator",
            label="dominator",
            lam=1.0,
            attrs=np.ceil(v.values) + 1.0,
        )
        space = ObjectSpace.from_records(space.records() + [dom], space.attribute_names)
        team = team_from_ids(space, member_ids, team_id="C")

    return Instance(
        seed=seed,
        space=space,
        team=team,
        target=target,
        weights=weights,
        top_k=top_k,
        block_size=block_size,
    )
