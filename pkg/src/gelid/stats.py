"""Evaluation statistics: partition distance (MoJoFM), rater agreement,
rank tests, effect sizes, multiple-comparison correction, sampling margins,
and Monte-Carlo power/variability simulations.

Everything here is deterministic given its inputs (and seed, where one
applies). Enumeration oracles used to validate the fast paths are exported
with an `_enumerated` suffix; they are intentionally slow and guarded.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import erfc as _np_erfc
from scipy.stats import t as student_t

from .errors import DataError, InternalError

log = logging.getLogger(__name__)

_NEG = -(10 ** 12)

# ---------------------------------------------------------------------------
# Partitions and the Move/Join distance


@dataclass(frozen=True)
class Partition:
    """Objects mapped to group labels; groups are non-empty by construction."""

    assignment: tuple[tuple[str, int], ...]  # (object_id, group) pairs

    @staticmethod
    def from_mapping(mapping: dict) -> "Partition":
        labels = {}
        for obj, grp in sorted(mapping.items(), key=lambda kv: str(kv[0])):
            labels.setdefault(grp, len(labels))
        return Partition(tuple(
            (str(obj), labels[grp])
            for obj, grp in sorted(mapping.items(), key=lambda kv: str(kv[0]))))

    @staticmethod
    def from_groups(groups: list[list]) -> "Partition":
        mapping = {}
        for gi, members in enumerate(groups):
            if not members:
                raise DataError("partition groups must be non-empty")
            for obj in members:
                if obj in mapping:
                    raise DataError(f"object {obj!r} appears in two groups")
                mapping[obj] = gi
        return Partition.from_mapping(mapping)

    @property
    def objects(self) -> tuple[str, ...]:
        return tuple(obj for obj, _ in self.assignment)

    @property
    def n_objects(self) -> int:
        return len(self.assignment)

    @property
    def n_groups(self) -> int:
        return len({g for _, g in self.assignment})

    def labels(self) -> np.ndarray:
        return np.array([g for _, g in self.assignment], dtype=np.int64)

    def groups(self) -> list[set[str]]:
        out: dict[int, set[str]] = {}
        for obj, g in self.assignment:
            out.setdefault(g, set()).add(obj)
        return [out[g] for g in sorted(out)]


def _aligned_labels(a: Partition, b: Partition) -> tuple[np.ndarray, np.ndarray]:
    if a.objects != b.objects:
        raise DataError("partitions cover different object sets")
    return a.labels(), b.labels()


def _overlap_matrix(la: np.ndarray, lb: np.ndarray) -> np.ndarray:
    ga, gb = int(la.max()) + 1, int(lb.max()) + 1
    table = np.zeros((ga, gb), dtype=np.int64)
    np.add.at(table, (la, lb), 1)
    return table


def _mno_from_overlaps(table: np.ndarray, n: int) -> int:
    """Optimal tag assignment: max-weight matching plus greedy leftovers.

    A-groups matched to distinct B tags earn overlap + 1 (the +1 for using a
    fresh tag); an unmatched A-group is tagged greedily onto its best tag,
    earning only the overlap. mno = n + #A-groups - best total.
    """
    ga, gb = table.shape
    best = table.max(axis=1)
    weights = np.full((ga, gb + ga), _NEG, dtype=np.int64)
    weights[:, :gb] = table + 1
    weights[np.arange(ga), gb + np.arange(ga)] = best
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return n + ga - int(weights[rows, cols].sum())


def mno(a: Partition, b: Partition) -> int:
    """Minimum number of Move or Join operations transforming a into b."""
    la, lb = _aligned_labels(a, b)
    return _mno_from_overlaps(_overlap_matrix(la, lb), a.n_objects)


def mno_enumerated(a: Partition, b: Partition) -> int:
    """Exhaustive minimum over every tag assignment (oracle; small inputs).

    Uses a used-tag-set sweep, which scans the same assignment space as the
    plain product enumeration but tolerates more groups. Guarded at 20 B
    groups.
    """
    la, lb = _aligned_labels(a, b)
    table = _overlap_matrix(la, lb)
    ga, gb = table.shape
    if gb > 20:
        raise DataError(f"enumeration oracle limited to 20 B-groups, got {gb}")
    states = {0: 0}
    for i in range(ga):
        nxt: dict[int, int] = {}
        for mask, overlap in states.items():
            for t in range(gb):
                m2 = mask | (1 << t)
                v = overlap + int(table[i, t])
                if nxt.get(m2, -1) < v:
                    nxt[m2] = v
        states = nxt
    gain = max(ov + bin(mask).count("1") for mask, ov in states.items())
    return a.n_objects + ga - gain


def mno_enumerated_product(a: Partition, b: Partition) -> int:
    """Literal enumeration of all g_B^g_A tag assignments (tiny inputs)."""
    la, lb = _aligned_labels(a, b)
    table = _overlap_matrix(la, lb)
    ga, gb = table.shape
    if gb ** ga > 2_000_000:
        raise DataError(f"product enumeration infeasible for {ga}x{gb} groups")
    n = a.n_objects
    best = None
    for tau in itertools.product(range(gb), repeat=ga):
        overlap = sum(int(table[i, t]) for i, t in enumerate(tau))
        cost = (n - overlap) + (ga - len(set(tau)))
        if best is None or cost < best:
            best = cost
    return best


def _set_partitions(n: int):
    """All set partitions of range(n) as label arrays (restricted growth)."""
    labels = [0] * n

    def rec(i: int, max_used: int):
        if i == n:
            yield np.array(labels, dtype=np.int64)
            return
        for g in range(max_used + 2):
            labels[i] = g
            yield from rec(i + 1, max(max_used, g))

    yield from rec(1, 0) if n > 1 else iter([np.zeros(1, dtype=np.int64)])


def _spread_matching_number(sizes: tuple[int, ...]) -> int:
    """Max matching of the tableau adversary's best-tag graph.

    Column i of the tableau touches every group of size >= i, so
    neighborhoods are nested; Hall's condition reduces to a scan.
    """
    bmax = sizes[0]
    at_least = [sum(1 for s in sizes if s >= i) for i in range(1, bmax + 1)]
    nu = 0
    for k in range(1, bmax + 1):
        if all(at_least[i - 1] >= k - i + 1 for i in range(1, k + 1)):
            nu = k
    return nu


def _max_mno_closed_form(sizes: tuple[int, ...], n: int) -> int:
    """Closed-form max over all partitions E of mno(E, B), from B's sizes.

    Minimizes the defender's gain over three adversary families: one lump
    (gain b_max), a spread tableau (gain = its matching number), and a
    star that splits the top k groups into anchors absorbing the rest
    (gain k + b_{k+1}, needs sum(b_i - 1, i<=k) >= b_{k+1} anchors).
    Validated exhaustively against enumeration for every group-size
    multiset with n <= 10.
    """
    s = tuple(sorted(sizes, reverse=True))
    g = len(s)
    gains = [s[0], _spread_matching_number(s)]
    for k in range(1, g + 1):
        b_next = s[k] if k < g else 0
        if sum(x - 1 for x in s[:k]) >= b_next:
            gains.append(k + b_next)
    return n - min(gains)


@lru_cache(maxsize=256)
def _max_mno_enumerated(sizes: tuple[int, ...]) -> int:
    """Max of mno(E, B) over all partitions E, by enumeration (n <= 10).

    Depends only on B's group sizes: relabeling objects permutes the
    candidate set E bijectively.
    """
    n = sum(sizes)
    lb = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    best = 0
    for la in _set_partitions(n):
        table = _overlap_matrix(la, lb)
        best = max(best, _mno_from_overlaps(table, n))
    return best


_MAX_ENUMERABLE = 10


def max_mno(b: Partition) -> int:
    """max(mno(forall E_A, B)): the distance of the farthest partition."""
    sizes = tuple(sorted((len(g) for g in b.groups()), reverse=True))
    n = b.n_objects
    closed = _max_mno_closed_form(sizes, n)
    if n <= _MAX_ENUMERABLE:
        enumerated = _max_mno_enumerated(sizes)
        if enumerated != closed:
            raise InternalError(
                f"max-mno closed form {closed} disagrees with enumeration "
                f"{enumerated} for sizes {sizes}; refusing to continue")
        return enumerated
    return closed


def mojo_fm(a: Partition, b: Partition) -> float:
    """MoJoFM(A,B) = 100 - mno(A,B) / max(mno(forall E_A, B)) * 100.

    100 means A equals B; 0 means A is the farthest partition from B.
    """
    if a.n_objects < 2:
        raise DataError("MoJoFM is undefined for fewer than 2 objects")
    denominator = max_mno(b)
    if denominator == 0:
        raise DataError("MoJoFM denominator is 0 for this reference partition")
    distance = mno(a, b)
    if distance > denominator:
        raise InternalError(
            f"mno {distance} exceeds the maximum {denominator}; "
            f"max-mno closed form is wrong for this input")
    return 100.0 - (distance / denominator) * 100.0


# ---------------------------------------------------------------------------
# Rater agreement and rank statistics


def cohens_kappa(ratings1, ratings2) -> float:
    """Cohen's kappa for two categorical sequences of equal length.

    When expected agreement is 1 (both raters constant), kappa is defined
    as 1.0 for perfect agreement and 0.0 otherwise, with a warning.
    """
    r1, r2 = list(ratings1), list(ratings2)
    if len(r1) != len(r2):
        raise DataError(f"rating sequences differ in length "
                        f"({len(r1)} vs {len(r2)})")
    if not r1:
        raise DataError("rating sequences are empty")
    n = len(r1)
    p_o = sum(x == y for x, y in zip(r1, r2)) / n
    categories = sorted(set(r1) | set(r2), key=str)
    p_e = sum((r1.count(c) / n) * (r2.count(c) / n) for c in categories)
    if p_e >= 1.0 - 1e-15:
        log.warning("degenerate kappa: expected agreement is 1")
        return 1.0 if p_o >= 1.0 - 1e-15 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class RatingSample:
    """Integer Likert scores in [1, 5]."""

    scores: tuple[int, ...]

    def __post_init__(self):
        for s in self.scores:
            if not 1 <= s <= 5:
                raise DataError(f"Likert score {s} outside [1, 5]")


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p_value: float
    exact: bool


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1  # midrank, 1-based
        i = j + 1
    return ranks


def mann_whitney_u(x, y) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test.

    U counts pairs with x > y, ties worth 0.5. The p-value is exact (full
    enumeration of the C(n1+n2, n1) labelings of the pooled data) when
    n1 + n2 <= 20, and otherwise a normal approximation with tie and
    continuity corrections.
    """
    x = np.asarray(list(x), dtype=float)
    y = np.asarray(list(y), dtype=float)
    if x.size == 0 or y.size == 0:
        raise DataError("both samples must be non-empty")
    n1, n2 = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    if n1 + n2 <= 20:
        p = _exact_u_p_value(ranks, n1, n2, u)
        return MannWhitneyResult(u=u, p_value=p, exact=True)
    return MannWhitneyResult(u=u, p_value=_approx_u_p_value(pooled, n1, n2, u),
                             exact=False)


def _exact_u_p_value(ranks: np.ndarray, n1: int, n2: int, u_obs: float) -> float:
    # distribution of 2*R1 over all labelings, via subset-sum counting
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros((n1 + 1, total + 1), dtype=np.float64)
    counts[0, 0] = 1.0
    for d in doubled:
        for k in range(n1, 0, -1):  # descending so each item is used once
            counts[k, d:] += counts[k - 1, :-d]
    dist = counts[n1]
    possible_2u = np.arange(total + 1) - n1 * (n1 + 1)
    center = n1 * n2  # 2 * (n1*n2/2)
    observed_dev = abs(2 * u_obs - center)
    mask = np.abs(possible_2u - center) >= observed_dev - 1e-9
    return float(dist[mask].sum() / dist.sum())


def _approx_u_p_value(pooled: np.ndarray, n1: int, n2: int, u: float) -> float:
    n = n1 + n2
    mean_u = n1 * n2 / 2
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = ((tie_counts ** 3 - tie_counts).sum()) / (n * (n - 1))
    var_u = n1 * n2 / 12 * ((n + 1) - tie_term)
    if var_u <= 0:
        return 1.0
    correction = 0.5 if u > mean_u else (-0.5 if u < mean_u else 0.0)
    z = (u - mean_u - correction) / math.sqrt(var_u)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2)))


_CLIFF_BANDS = ((0.147, "negligible"), (0.33, "small"), (0.474, "medium"))


@dataclass(frozen=True)
class CliffsDeltaResult:
    delta: float
    magnitude: str


def cliffs_delta(x, y) -> CliffsDeltaResult:
    """Cliff's delta (#[x>y] - #[x<y]) / (n1*n2) with magnitude band."""
    x = np.asarray(list(x), dtype=float)
    y = np.asarray(list(y), dtype=float)
    if x.size == 0 or y.size == 0:
        raise DataError("both samples must be non-empty")
    diff = x[:, None] - y[None, :]
    delta = float((np.sign(diff)).sum() / (x.size * y.size))
    magnitude = "large"
    for threshold, band in _CLIFF_BANDS:
        if abs(delta) < threshold:
            magnitude = band
            break
    return CliffsDeltaResult(delta=delta, magnitude=magnitude)


def benjamini_hochberg(p_values) -> list[float]:
    """Step-up BH adjustment; returns values in the original order."""
    p = np.asarray(list(p_values), dtype=float)
    if p.size == 0:
        return []
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted.tolist()


# ---------------------------------------------------------------------------
# Normal quantiles, sampling margins


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, rational approximation (|err| < 4.5e-4)."""
    if not 0.0 < p < 1.0:
        raise DataError(f"quantile probability {p} outside (0, 1)")
    if p == 0.5:
        return 0.0
    lower = p < 0.5
    q = p if lower else 1.0 - p
    t = math.sqrt(-2.0 * math.log(q))
    z = t - ((0.010328 * t + 0.802853) * t + 2.515517) / (
        ((0.001308 * t + 0.189269) * t + 1.432788) * t + 1.0)
    return -z if lower else z


def margin_of_error(n: int, confidence: float) -> float:
    """Worst-case (p = 0.5) proportion margin, infinite population."""
    if n < 1:
        raise DataError("sample size must be >= 1")
    if not 0.0 < confidence < 1.0:
        raise DataError(f"confidence {confidence} outside (0, 1)")
    z = normal_quantile(0.5 + confidence / 2.0)
    return z * math.sqrt(0.25 / n)


# ---------------------------------------------------------------------------
# Monte-Carlo simulations


def sample_std(values) -> float:
    """Sample standard deviation with the n-1 denominator."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size < 2:
        raise DataError("sample std needs at least 2 values")
    return float(arr.std(ddof=1))


@dataclass(frozen=True)
class LikertStdSummary:
    min: float
    max: float
    mean: float


def simulate_likert_std(n_sims: int, group_size: int, seed: int = 0,
                        rng: np.random.Generator | None = None
                        ) -> LikertStdSummary:
    """Sample-std spread of i.i.d. uniform 1..5 scores, over n_sims draws."""
    if n_sims < 1:
        raise DataError("n_sims must be >= 1")
    if group_size < 2:
        raise DataError("group_size must be >= 2")
    if rng is None:
        rng = np.random.default_rng(seed)
    draws = rng.integers(1, 6, size=(n_sims, group_size))
    stds = draws.std(axis=1, ddof=1)
    return LikertStdSummary(min=float(stds.min()), max=float(stds.max()),
                            mean=float(stds.mean()))


@dataclass(frozen=True)
class PowerEstimate:
    power: float               # t-test path (primary)
    power_mann_whitney: float
    n_sims: int


def simulate_power(group_size: int, mean_shift: float, sd: float, alpha: float,
                   n_sims: int = 10_000, seed: int = 0) -> PowerEstimate:
    """Monte-Carlo power of a two-sided two-sample comparison.

    Draws two normal groups whose means differ by mean_shift and reports the
    fraction of simulations rejecting at level alpha, via both a pooled
    two-sample t-test (primary) and the Mann-Whitney U test.
    """
    if sd <= 0:
        raise DataError("sd must be > 0")
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha {alpha} outside (0, 1)")
    if group_size < 2 or n_sims < 1:
        raise DataError("group_size must be >= 2 and n_sims >= 1")
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, sd, size=(n_sims, group_size))
    b = rng.normal(mean_shift, sd, size=(n_sims, group_size))

    # pooled-variance t-test, vectorized across simulations
    va = a.var(axis=1, ddof=1)
    vb = b.var(axis=1, ddof=1)
    pooled = ((group_size - 1) * (va + vb)) / (2 * group_size - 2)
    denom = np.sqrt(pooled * 2 / group_size)
    t_stat = np.divide(a.mean(axis=1) - b.mean(axis=1), denom,
                       out=np.zeros(n_sims), where=denom > 0)
    p_t = 2 * student_t.sf(np.abs(t_stat), df=2 * group_size - 2)
    power_t = float((p_t < alpha).mean())

    # Mann-Whitney via midranks of each pooled simulation row
    pooled_rows = np.concatenate([a, b], axis=1)
    order = np.argsort(pooled_rows, axis=1, kind="stable")
    ranks = np.empty_like(pooled_rows)
    np.put_along_axis(ranks, order,
                      np.broadcast_to(np.arange(1.0, 2 * group_size + 1),
                                      pooled_rows.shape).copy(), axis=1)
    u = ranks[:, :group_size].sum(axis=1) - group_size * (group_size + 1) / 2
    mean_u = group_size * group_size / 2
    var_u = group_size * group_size * (2 * group_size + 1) / 12
    correction = np.where(u > mean_u, 0.5, np.where(u < mean_u, -0.5, 0.0))
    z = (u - mean_u - correction) / math.sqrt(var_u)
    p_mw = _np_erfc(np.abs(z) / math.sqrt(2))
    power_mw = float((p_mw < alpha).mean())
    return PowerEstimate(power=power_t, power_mann_whitney=power_mw,
                         n_sims=n_sims)


def atomicity_score(extra_segments: int) -> int:
    """5 minus the number of additional standalone segments, floored at 1."""
    if extra_segments < 0:
        raise DataError("extra_segments must be >= 0")
    return max(5 - extra_segments, 1)
