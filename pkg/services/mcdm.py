"""
Multi-criteria ranking of experiments.

Pipeline: min-max normalization (criteria oriented so larger is better),
hybrid weights (mean of equal and entropy weights), then TOPSIS,
PROMETHEE II and VIKOR. The three rankings are combined into an average
Borda-style score, (m + 1 - rank) averaged over methods.

Ties are always broken by the order in which alternatives are listed.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from core.database import save_data
from core.errors import ConfigError
from core.kpi import DecisionMatrix

logger = logging.getLogger(__name__)

TOPSIS = "TOPSIS"
PROMETHEE2 = "PROMETHEE2"
VIKOR = "VIKOR"
METHODS = (TOPSIS, PROMETHEE2, VIKOR)

PREFERENCE_FAMILIES = ("usual", "linear")
TOPSIS_NORMALIZATIONS = ("minmax", "vector")
WEIGHT_TOLERANCE = 1e-12
DEGENERATE_RTOL = 1e-12
DEGENERATE_ATOL = 1e-15


@dataclass(frozen=True, eq=False)
class NormalizedMatrix:
    values: np.ndarray
    source: DecisionMatrix

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ConfigError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ConfigError(f"weights must sum to 1, got {w.sum()}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True, eq=False)
class MethodRanking:
    method: str
    alternatives: Tuple[str, ...]
    scores: np.ndarray
    ranks: np.ndarray
    diagnostics: Dict = field(default_factory=dict, compare=False)

    def rank_of(self, alternative: str) -> int:
        return int(self.ranks[self.alternatives.index(alternative)])


@dataclass(frozen=True, eq=False)
class StudyRanking:
    alternatives: Tuple[str, ...]
    rankings: Tuple[MethodRanking, ...]
    aggregate_score: np.ndarray
    positions: np.ndarray

    def method(self, name: str) -> MethodRanking:
        for ranking in self.rankings:
            if ranking.method == name:
                return ranking
        raise KeyError(name)

    @property
    def order(self) -> List[str]:
        """Alternatives from best to worst aggregate score."""
        return [self.alternatives[i] for i in np.argsort(self.positions, kind="stable")]


@dataclass(frozen=True)
class McdmSettings:
    preference: str = "usual"
    thresholds: Union[float, Sequence[float], None] = None
    v: float = 0.5
    topsis_normalization: str = "minmax"

    def __post_init__(self):
        if self.preference not in PREFERENCE_FAMILIES:
            raise ConfigError(f"preference must be one of {PREFERENCE_FAMILIES}, got '{self.preference}'")
        if self.topsis_normalization not in TOPSIS_NORMALIZATIONS:
            raise ConfigError(
                f"topsis_normalization must be one of {TOPSIS_NORMALIZATIONS}, got '{self.topsis_normalization}'"
            )
        if not 0.0 <= self.v <= 1.0:
            raise ConfigError(f"VIKOR v must lie in [0, 1], got {self.v}")


def rank_from_scores(scores, descending: bool = True) -> np.ndarray:
    """1-based ranks; equal scores keep listing order."""
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores if descending else scores, kind="stable")
    ranks = np.empty(scores.size, dtype=int)
    ranks[order] = np.arange(1, scores.size + 1)
    return ranks


def _check_dimensions(norm: NormalizedMatrix, w: WeightVector):
    if norm.shape[1] != len(w):
        raise ConfigError(f"{len(w)} weights for {norm.shape[1]} criteria")


# ----------------------------------------------------------------------------
# Normalization and weights
# ----------------------------------------------------------------------------

def _same(a, b):
    """Element-wise equality up to rounding noise."""
    return np.isclose(a, b, rtol=DEGENERATE_RTOL, atol=DEGENERATE_ATOL)


def minmax_normalize(matrix: DecisionMatrix) -> NormalizedMatrix:
    """Scale every column to [0, 1] with larger = better; constant columns become 0.5."""
    x = np.asarray(matrix.values, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ConfigError("decision matrix contains non-finite values")
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = hi - lo
    constant = _same(hi, lo)
    safe = np.where(constant, 1.0, span)
    r = np.where(matrix.is_benefit, (x - lo) / safe, (hi - x) / safe)
    r[:, constant] = 0.5
    r = np.clip(r, 0.0, 1.0)
    r.setflags(write=False)
    return NormalizedMatrix(values=r, source=matrix)


def equal_weights(n: int) -> WeightVector:
    if n < 1:
        raise ConfigError("need at least one criterion")
    return WeightVector(np.full(n, 1.0 / n))


def entropy_weights(norm: NormalizedMatrix) -> WeightVector:
    """
    Shannon-entropy weights: columns whose values are spread out get more weight.

    0 ln 0 is taken as 0. Constant (or all-zero) columns carry no information
    and get weight 0; if every column is constant the weights fall back to equal.
    """
    r = norm.values
    m, n = r.shape
    if m < 2:
        raise ConfigError(f"entropy weights need at least 2 alternatives, got {m}")
    col_sum = r.sum(axis=0)
    constant = _same(r.max(axis=0), r.min(axis=0)) | (col_sum == 0)
    p = r / np.where(col_sum == 0, 1.0, col_sum)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    e = -plogp.sum(axis=0) / np.log(m)
    d = np.clip(1.0 - e, 0.0, None)
    d[constant] = 0.0
    if d.sum() <= 0:
        logger.info("all criteria are constant; entropy weights fall back to equal weights")
        return equal_weights(n)
    return WeightVector(d / d.sum())


def hybrid_weights(norm: NormalizedMatrix) -> WeightVector:
    n = norm.shape[1]
    w = 0.5 * (equal_weights(n).weights + entropy_weights(norm).weights)
    return WeightVector(w / w.sum())


# ----------------------------------------------------------------------------
# Methods
# ----------------------------------------------------------------------------

def topsis(norm: NormalizedMatrix, w: WeightVector, normalization: str = "minmax") -> MethodRanking:
    """Relative closeness to the ideal point; higher is better."""
    _check_dimensions(norm, w)
    if normalization == "minmax":
        v = norm.values * w.weights
        ideal = v.max(axis=0)
        anti = v.min(axis=0)
    elif normalization == "vector":
        x = np.asarray(norm.source.values, dtype=float)
        length = np.sqrt((x ** 2).sum(axis=0))
        v = x / np.where(length == 0, 1.0, length) * w.weights
        benefit = norm.source.is_benefit
        ideal = np.where(benefit, v.max(axis=0), v.min(axis=0))
        anti = np.where(benefit, v.min(axis=0), v.max(axis=0))
    else:
        raise ConfigError(f"unknown TOPSIS normalization '{normalization}'")

    d_plus = np.sqrt(((v - ideal) ** 2).sum(axis=1))
    d_minus = np.sqrt(((v - anti) ** 2).sum(axis=1))
    total = d_plus + d_minus
    scores = np.where(total > 0, d_minus / np.where(total > 0, total, 1.0), 0.5)
    return MethodRanking(
        method=TOPSIS,
        alternatives=norm.source.alternatives,
        scores=scores,
        ranks=rank_from_scores(scores),
        diagnostics={"d_plus": d_plus, "d_minus": d_minus, "normalization": normalization},
    )


def _thresholds(thresholds, n: int) -> np.ndarray:
    if thresholds is None:
        raise ConfigError("the linear preference family needs thresholds")
    p = np.asarray(thresholds, dtype=float)
    if p.ndim == 0:
        p = np.full(n, float(p))
    if p.shape != (n,):
        raise ConfigError(f"{p.size} thresholds for {n} criteria")
    if np.any(p <= 0):
        raise ConfigError("linear preference thresholds must be > 0")
    return p


def promethee2(norm: NormalizedMatrix, w: WeightVector, preference: str = "usual", thresholds=None) -> MethodRanking:
    """Net outranking flow phi = phi+ - phi-; higher is better."""
    _check_dimensions(norm, w)
    r = norm.values
    m, n = r.shape
    diff = r[:, None, :] - r[None, :, :]  # diff[a, b, j] = r_aj - r_bj
    if preference == "usual":
        pref = (diff > 0).astype(float)
    elif preference == "linear":
        p = _thresholds(thresholds, n)
        pref = np.clip(diff / p, 0.0, 1.0)
    else:
        raise ConfigError(f"unknown preference family '{preference}'")
    pi = (pref * w.weights).sum(axis=2)
    if m > 1:
        phi_plus = pi.sum(axis=1) / (m - 1)
        phi_minus = pi.sum(axis=0) / (m - 1)
    else:
        phi_plus = phi_minus = np.zeros(m)
    phi = phi_plus - phi_minus
    return MethodRanking(
        method=PROMETHEE2,
        alternatives=norm.source.alternatives,
        scores=phi,
        ranks=rank_from_scores(phi),
        diagnostics={"phi_plus": phi_plus, "phi_minus": phi_minus, "preference": preference},
    )


def vikor(matrix: DecisionMatrix, w: WeightVector, v: float = 0.5) -> MethodRanking:
    """
    Compromise ranking by Q (lower is better), from group utility S and regret R.

    The reported score is Q itself; diagnostics carry S, R and the two
    compromise conditions (acceptable advantage, acceptable stability).
    """
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"VIKOR v must lie in [0, 1], got {v}")
    x = np.asarray(matrix.values, dtype=float)
    m, n = x.shape
    if n != len(w):
        raise ConfigError(f"{len(w)} weights for {n} criteria")

    benefit = matrix.is_benefit
    best = np.where(benefit, x.max(axis=0), x.min(axis=0))
    worst = np.where(benefit, x.min(axis=0), x.max(axis=0))
    span = best - worst
    flat = _same(best, worst)
    safe = np.where(flat, 1.0, span)
    terms = np.where(flat, 0.0, w.weights * ((best - x) / safe))

    s = terms.sum(axis=1)
    r = terms.max(axis=1) if n else np.zeros(m)
    s_star, s_minus = s.min(), s.max()
    r_star, r_minus = r.min(), r.max()
    s_term = (s - s_star) / (s_minus - s_star) if not _same(s_minus, s_star) else np.zeros(m)
    r_term = (r - r_star) / (r_minus - r_star) if not _same(r_minus, r_star) else np.zeros(m)
    q = v * s_term + (1.0 - v) * r_term

    ranks = rank_from_scores(q, descending=False)
    order = np.argsort(q, kind="stable")
    leader = order[0]
    if m > 1:
        advantage = bool(q[order[1]] - q[leader] >= 1.0 / (m - 1) - 1e-12)
    else:
        advantage = True
    stability = bool(
        rank_from_scores(s, descending=False)[leader] == 1 or rank_from_scores(r, descending=False)[leader] == 1
    )
    if not (advantage and stability):
        logger.info(
            "VIKOR compromise conditions for %s: advantage=%s, stability=%s",
            matrix.alternatives[leader], advantage, stability,
        )
    return MethodRanking(
        method=VIKOR,
        alternatives=matrix.alternatives,
        scores=q,
        ranks=ranks,
        diagnostics={"S": s, "R": r, "Q": q, "v": v, "acceptable_advantage": advantage,
                     "acceptable_stability": stability},
    )


# ----------------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------------

def aggregate(rankings: Sequence[MethodRanking]) -> StudyRanking:
    if not rankings:
        raise ConfigError("nothing to aggregate")
    alternatives = rankings[0].alternatives
    for ranking in rankings[1:]:
        if ranking.alternatives != alternatives:
            raise ConfigError(f"{ranking.method} ranks a different set of alternatives")
    m = len(alternatives)
    points = np.array([m + 1 - ranking.ranks for ranking in rankings], dtype=float)
    score = points.mean(axis=0)
    return StudyRanking(
        alternatives=alternatives,
        rankings=tuple(rankings),
        aggregate_score=score,
        positions=rank_from_scores(score),
    )


@dataclass(frozen=True, eq=False)
class WeightTable:
    criteria: Tuple[str, ...]
    equal: np.ndarray
    entropy: np.ndarray
    hybrid: np.ndarray


def rank_study(matrix: DecisionMatrix, settings: McdmSettings = None) -> Tuple[StudyRanking, WeightTable]:
    """Normalize, weigh and rank with all three methods, then aggregate."""
    settings = settings or McdmSettings()
    norm = minmax_normalize(matrix)
    entropy = entropy_weights(norm)
    hybrid = hybrid_weights(norm)
    rankings = (
        topsis(norm, hybrid, settings.topsis_normalization),
        promethee2(norm, hybrid, settings.preference, settings.thresholds),
        vikor(matrix, hybrid, settings.v),
    )
    ranking = aggregate(rankings)
    logger.info("ranked %d alternatives; best: %s", len(matrix.alternatives), ranking.order[0])
    weights = WeightTable(
        criteria=tuple(matrix.criteria_names),
        equal=equal_weights(len(matrix.criteria)).weights,
        entropy=entropy.weights,
        hybrid=hybrid.weights,
    )
    return ranking, weights


def spearman(a: Sequence[str], b: Sequence[str]) -> float:
    """Spearman rank correlation between two orderings of the same labels (best first)."""
    if sorted(a) != sorted(b):
        raise ConfigError("orderings cover different alternatives")
    if len(a) < 2:
        return 1.0
    pos_b = {label: i for i, label in enumerate(b)}
    return float(spearmanr(np.arange(len(a)), [pos_b[label] for label in a])[0])


def rankings_frame(ranking: StudyRanking) -> pd.DataFrame:
    data = {"alternative": list(ranking.alternatives)}
    for method in ranking.rankings:
        data[f"{method.method.lower()}_score"] = method.scores
        data[f"{method.method.lower()}_rank"] = method.ranks
    data["aggregate_score"] = ranking.aggregate_score
    data["position"] = ranking.positions
    return pd.DataFrame(data).sort_values("position", kind="stable").reset_index(drop=True)


def weights_frame(weights: WeightTable) -> pd.DataFrame:
    return pd.DataFrame({
        "criterion": list(weights.criteria),
        "equal": weights.equal,
        "entropy": weights.entropy,
        "hybrid": weights.hybrid,
    })


def write_rankings(ranking: StudyRanking, path, provenance: dict = None):
    return save_data(rankings_frame(ranking), path, provenance)


def write_weights(weights: WeightTable, path, provenance: dict = None):
    return save_data(weights_frame(weights), path, provenance)
