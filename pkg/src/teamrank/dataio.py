"""Dataset ingestion, synthetic generation, and goodness-of-fit checks.

CSV contract: comma separated, UTF-8, mandatory header row, '.' decimal
separator. A manifest names the id/label/lambda columns and the ordered
attribute subset to project; loaders reject files whose header is missing a
named column and reject rows with unparseable, non-finite, or non-positive
lambda values, reporting the 1-based data row number.

Synthetic spaces draw each attribute independently from a negative binomial
distribution parameterized as failures before the r-th success: mean
r(1-p)/p, variance r(1-p)/p^2. Real-valued r is handled with the standard
gamma-Poisson mixture (Gamma(r, (1-p)/p) intensity feeding a Poisson draw),
which matches the negative binomial pmf exactly. Exchange parameters are
drawn uniformly from a configurable positive range, default [500, 3000].
Generation is fully deterministic for a fixed seed: the master seed is
expanded with numpy's SeedSequence into one child stream per attribute
column plus one for the lambda column.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sstats

from .core import ObjectSpace, TargetContext
from .errors import (
    DegenerateBinning,
    DimensionMismatch,
    EmptyFile,
    InsufficientData,
    InvalidArgument,
    InvalidParams,
    MalformedRow,
    MissingColumn,
)
from .weighting import RankedSeries

__all__ = [
    "DatasetManifest",
    "NbParams",
    "GofResult",
    "default_manifest",
    "load_manifest",
    "load_objects",
    "load_rosters",
    "load_teams",
    "write_objects_csv",
    "sample_negative_binomial",
    "gen_synthetic",
    "nb_mean",
    "nb_variance",
    "chi_square_statistic",
    "chi_square_gof",
]


@dataclass(frozen=True)
class DatasetManifest:
    """Column mapping for a CSV file.

    ``attributes`` fixes both the projection and the dimension order.
    ``lambda_column`` is required for object files, ``wins_column`` for team
    files, ``team_column`` only when rosters are read from an object file.
    """

    attributes: tuple[str, ...]
    id_column: str
    lambda_column: str | None = None
    label_column: str | None = None
    team_column: str | None = None
    wins_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise InvalidArgument("manifest needs a non-empty attribute subset")
        if not self.id_column:
            raise InvalidArgument("manifest needs an id column name")

    def to_dict(self) -> dict:
        return {
            "attributes": list(self.attributes),
            "id_column": self.id_column,
            "lambda_column": self.lambda_column,
            "label_column": self.label_column,
            "team_column": self.team_column,
            "wins_column": self.wins_column,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DatasetManifest":
        return cls(
            attributes=tuple(data["attributes"]),
            id_column=data["id_column"],
            lambda_column=data.get("lambda_column"),
            label_column=data.get("label_column"),
            team_column=data.get("team_column"),
            wins_column=data.get("wins_column"),
        )


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return DatasetManifest.from_dict(json.load(fh))


def _read_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise EmptyFile(f"{path}: file is empty")
    header, data = rows[0], rows[1:]
    if not data:
        raise EmptyFile(f"{path}: no data rows")
    return header, data


def _column_indices(header, names, path) -> dict[str, int]:
    positions = {}
    for name in names:
        if name is None:
            continue
        try:
            positions[name] = header.index(name)
        except ValueError:
            raise MissingColumn(f"{path}: column {name!r} not found in header") from None
    return positions


def _parse_float(raw: str, row_no: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(row_no, f"column {column!r}: cannot parse {raw!r} as a number") from None
    if not math.isfinite(value):
        raise MalformedRow(row_no, f"column {column!r}: non-finite value {raw!r}")
    return value


def load_objects(path, manifest: DatasetManifest) -> ObjectSpace:
    """Read one record per data row, projected to the manifest's attributes."""
    if manifest.lambda_column is None:
        raise InvalidArgument("object manifest needs a lambda column")
    header, data = _read_rows(path)
    wanted = [manifest.id_column, manifest.lambda_column, manifest.label_column, *manifest.attributes]
    pos = _column_indices(header, wanted, path)

    ids, labels, lambdas = [], [], []
    attrs = np.empty((len(data), len(manifest.attributes)), dtype=np.float64)
    for row_no, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise MalformedRow(row_no, f"expected {len(header)} fields, got {len(row)}")
        lam = _parse_float(row[pos[manifest.lambda_column]], row_no, manifest.lambda_column)
        if lam <= 0.0:
            raise MalformedRow(row_no, f"exchange parameter must be > 0, got {lam}")
        ids.append(row[pos[manifest.id_column]])
        labels.append(row[pos[manifest.label_column]] if manifest.label_column else row[pos[manifest.id_column]])
        lambdas.append(lam)
        for j, attr in enumerate(manifest.attributes):
            attrs[row_no - 1, j] = _parse_float(row[pos[attr]], row_no, attr)
    return ObjectSpace(ids=ids, lambdas=lambdas, attrs=attrs, attribute_names=manifest.attributes, labels=labels)


def load_rosters(path, manifest: DatasetManifest) -> dict[str, list[str]]:
    """Map each team id to its member object ids, in file order."""
    if manifest.team_column is None:
        raise InvalidArgument("roster loading needs a team column in the manifest")
    header, data = _read_rows(path)
    pos = _column_indices(header, [manifest.id_column, manifest.team_column], path)
    rosters: dict[str, list[str]] = {}
    for row_no, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise MalformedRow(row_no, f"expected {len(header)} fields, got {len(row)}")
        rosters.setdefault(row[pos[manifest.team_column]], []).append(row[pos[manifest.id_column]])
    return rosters


def load_teams(path, manifest: DatasetManifest) -> tuple[list[TargetContext], RankedSeries]:
    """Read team aggregate vectors plus the wins series used for weighting."""
    if manifest.wins_column is None:
        raise InvalidArgument("team manifest needs a wins column")
    header, data = _read_rows(path)
    wanted = [manifest.id_column, manifest.wins_column, *manifest.attributes]
    pos = _column_indices(header, wanted, path)

    targets: list[TargetContext] = []
    wins = np.empty(len(data), dtype=np.float64)
    for row_no, row in enumerate(data, start=1):
        if len(row) != len(header):
            raise MalformedRow(row_no, f"expected {len(header)} fields, got {len(row)}")
        agg = np.array(
            [_parse_float(row[pos[a]], row_no, a) for a in manifest.attributes], dtype=np.float64
        )
        wins[row_no - 1] = _parse_float(row[pos[manifest.wins_column]], row_no, manifest.wins_column)
        targets.append(TargetContext(team_id=row[pos[manifest.id_column]], aggregate=agg))
    return targets, RankedSeries(values=wins, higher_is_better=True)


def write_objects_csv(space: ObjectSpace, path) -> None:
    """Write a space back out in the same CSV contract the loaders read.

    Floats are rendered with repr, so a load round-trips bit-for-bit.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "lambda", *space.attribute_names])
        for i in range(len(space)):
            writer.writerow(
                [
                    str(space.ids[i]),
                    str(space.labels[i]),
                    repr(float(space.lambdas[i])),
                    *[repr(float(v)) for v in space.attrs[i]],
                ]
            )


def default_manifest(space: ObjectSpace) -> DatasetManifest:
    """Manifest matching the :func:`write_objects_csv` layout."""
    return DatasetManifest(
        attributes=space.attribute_names,
        id_column="id",
        lambda_column="lambda",
        label_column="label",
    )


@dataclass(frozen=True)
class NbParams:
    """Negative binomial parameters: r > 0 successes, success probability p."""

    r: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0.0):
            raise InvalidParams(f"r must be finite and > 0, got {self.r}")
        if not (math.isfinite(self.p) and 0.0 < self.p < 1.0):
            raise InvalidParams(f"p must lie strictly inside (0, 1), got {self.p}")


def nb_mean(params: NbParams) -> float:
    return params.r * (1.0 - params.p) / params.p


def nb_variance(params: NbParams) -> float:
    return params.r * (1.0 - params.p) / (params.p * params.p)


def sample_negative_binomial(params: NbParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw counts via the gamma-Poisson mixture; returns float64 values."""
    intensity = rng.gamma(shape=params.r, scale=(1.0 - params.p) / params.p, size=size)
    return rng.poisson(intensity).astype(np.float64)


def gen_synthetic(
    params,
    count: int,
    seed: int,
    *,
    lambda_range: tuple[float, float] = (500.0, 3000.0),
    attribute_names: Sequence[str] | None = None,
    id_prefix: str = "o",
) -> ObjectSpace:
    """Generate a synthetic object space with independent per-dimension draws.

    ``params`` is either a mapping of attribute name to :class:`NbParams`
    (iteration order fixes the dimension order) or a plain sequence of
    :class:`NbParams`, in which case names default to a0, a1, ...
    """
    if count < 1:
        raise InvalidArgument(f"count must be >= 1, got {count}")
    lo, hi = float(lambda_range[0]), float(lambda_range[1])
    if not (0.0 < lo <= hi):
        raise InvalidParams(f"lambda range must satisfy 0 < lo <= hi, got ({lo}, {hi})")

    if isinstance(params, Mapping):
        names = tuple(str(k) for k in params.keys())
        plist = [p if isinstance(p, NbParams) else NbParams(**p) for p in params.values()]
    else:
        plist = [p if isinstance(p, NbParams) else NbParams(**p) for p in params]
        names = tuple(attribute_names) if attribute_names else tuple(f"a{j}" for j in range(len(plist)))
    if len(names) != len(plist):
        raise InvalidParams(f"{len(names)} attribute names for {len(plist)} parameter pairs")
    if not plist:
        raise InvalidParams("need at least one parameter pair")

    root = np.random.SeedSequence(seed)
    children = root.spawn(len(plist) + 1)
    attrs = np.empty((count, len(plist)), dtype=np.float64)
    for j, pj in enumerate(plist):
        attrs[:, j] = sample_negative_binomial(pj, count, np.random.default_rng(children[j]))
    lam_rng = np.random.default_rng(children[-1])
    lambdas = lam_rng.uniform(lo, hi, size=count)

    width = max(7, len(str(count - 1)))
    ids = np.char.mod(f"{id_prefix}%0{width}d", np.arange(count))
    return ObjectSpace(ids=ids, lambdas=lambdas, attrs=attrs, attribute_names=names)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    accepted: bool
    n_bins: int


def chi_square_statistic(observed, expected) -> float:
    """Pearson statistic sum((obs - exp)^2 / exp) for pre-binned counts."""
    obs = np.asarray(observed, dtype=np.float64)
    exp = np.asarray(expected, dtype=np.float64)
    if obs.shape != exp.shape:
        raise DimensionMismatch(f"observed shape {obs.shape} != expected shape {exp.shape}")
    if np.any(exp <= 0.0):
        raise InvalidArgument("expected counts must be strictly positive")
    return float(np.sum((obs - exp) ** 2 / exp))


def _nb_bins(params: NbParams, n_samples: int, min_expected: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy integer-range bins with expected count >= min_expected each.

    Returns (upper_bounds, expected); the final bin is open-ended and its
    expected count covers the entire remaining tail mass. An undersized tail
    is merged into the preceding bin.
    """
    hi = int(sstats.nbinom.ppf(1.0 - 1e-6, params.r, params.p))
    pmf = sstats.nbinom.pmf(np.arange(hi + 1), params.r, params.p)

    uppers: list[float] = []
    expected: list[float] = []
    acc = 0.0
    for k in range(hi + 1):
        acc += n_samples * pmf[k]
        if acc >= min_expected:
            uppers.append(float(k))
            expected.append(acc)
            acc = 0.0
    if not uppers:
        raise DegenerateBinning("all probability mass fell into a single undersized bin")
    # acc now holds mass between the last closed bin and hi; sf covers it too.
    tail = n_samples * float(sstats.nbinom.sf(uppers[-1], params.r, params.p))
    if tail >= min_expected:
        uppers.append(np.inf)
        expected.append(tail)
    else:
        uppers[-1] = np.inf
        expected[-1] += tail
    if len(uppers) < 2:
        raise DegenerateBinning(
            f"binning produced {len(uppers)} bin(s); need at least 2 (try more samples)"
        )
    return np.asarray(uppers), np.asarray(expected)


def chi_square_gof(samples, r: float, p: float, alpha: float = 0.05, *, min_expected: float = 5.0) -> GofResult:
    """Test whether integer count samples are compatible with NB(r, p).

    Parameters are taken as given, not fitted, so the degrees of freedom are
    the bin count minus one. Accepts exactly when the statistic does not
    exceed the chi-square quantile at 1 - alpha.
    """
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 1 or data.size < 50:
        raise InsufficientData(f"need at least 50 samples in a 1-D array, got shape {data.shape}")
    if not (0.0 < alpha < 1.0):
        raise InvalidArgument(f"alpha must lie strictly inside (0, 1), got {alpha}")
    params = NbParams(r=float(r), p=float(p))

    uppers, expected = _nb_bins(params, data.size, min_expected)
    bin_index = np.searchsorted(uppers, data, side="left")
    observed = np.bincount(bin_index, minlength=uppers.size).astype(np.float64)
    statistic = chi_square_statistic(observed, expected)
    dof = uppers.size - 1
    critical = float(sstats.chi2.ppf(1.0 - alpha, dof))
    return GofResult(statistic=statistic, dof=dof, accepted=bool(statistic <= critical), n_bins=uppers.size)
