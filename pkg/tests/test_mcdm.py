import math

import numpy as np
import pytest

from conftest import PUBLISHED_ORDER
from core.database import load_data
from core.errors import ConfigError
from core.kpi import DecisionMatrix
from services.mcdm import (
    PROMETHEE2,
    TOPSIS,
    VIKOR,
    McdmSettings,
    MethodRanking,
    WeightVector,
    aggregate,
    entropy_weights,
    equal_weights,
    hybrid_weights,
    minmax_normalize,
    promethee2,
    rank_from_scores,
    rank_study,
    spearman,
    topsis,
    vikor,
    write_rankings,
    write_weights,
)


def matrix(rows, orientations=None, alternatives=None):
    rows = np.asarray(rows, dtype=float)
    m, n = rows.shape
    orientations = orientations or ["benefit"] * n
    alternatives = alternatives or [chr(ord("A") + i) for i in range(m)]
    return DecisionMatrix(
        alternatives=tuple(alternatives),
        criteria=tuple((f"c{j}", o) for j, o in enumerate(orientations)),
        values=rows,
    )


def golden():
    return matrix([[7, 9], [8, 7], [9, 6]])


def random_matrix(rng, m=None, n=None):
    m = m or int(rng.integers(2, 11))
    n = n or int(rng.integers(1, 16))
    orientations = [str(o) for o in rng.choice(["benefit", "cost"], size=n)]
    return matrix(rng.uniform(0.0, 100.0, size=(m, n)), orientations, [f"a{i}" for i in range(m)])


def run_all(dm):
    norm = minmax_normalize(dm)
    w = hybrid_weights(norm)
    return {
        TOPSIS: topsis(norm, w),
        PROMETHEE2: promethee2(norm, w),
        VIKOR: vikor(dm, w),
    }


def well_separated(scores, gap=1e-9):
    s = np.sort(np.asarray(scores))
    return s.size < 2 or np.min(np.diff(s)) > gap


class TestNormalization:
    def test_benefit_and_cost_columns(self):
        norm = minmax_normalize(matrix([[1, 1], [3, 3], [5, 5]], ["benefit", "cost"]))
        assert norm.values[:, 0] == pytest.approx([0.0, 0.5, 1.0])
        assert norm.values[:, 1] == pytest.approx([1.0, 0.5, 0.0])

    def test_constant_column_is_neutral(self):
        norm = minmax_normalize(matrix([[4, 1], [4, 2], [4, 3]]))
        assert norm.values[:, 0] == pytest.approx([0.5, 0.5, 0.5])

    def test_range_and_extremes(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            norm = minmax_normalize(random_matrix(rng))
            assert norm.values.min() >= 0.0 and norm.values.max() <= 1.0
            assert np.all(norm.values.min(axis=0) == 0.0)
            assert np.all(norm.values.max(axis=0) == 1.0)


class TestWeights:
    def test_equal(self):
        assert equal_weights(4).weights == pytest.approx([0.25] * 4)

    def test_constant_column_gets_no_weight(self):
        w = entropy_weights(minmax_normalize(matrix([[1, 4], [2, 4]])))
        assert w.weights == pytest.approx([1.0, 0.0])

    def test_hybrid_is_mean_with_equal(self):
        w = hybrid_weights(minmax_normalize(matrix([[1, 4], [2, 4]])))
        assert w.weights == pytest.approx([0.75, 0.25])

    def test_equally_informative_columns(self):
        w = hybrid_weights(minmax_normalize(matrix([[1, 10], [2, 20], [4, 40]])))
        assert w.weights == pytest.approx([0.5, 0.5])

    def test_all_constant_falls_back_to_equal(self):
        w = entropy_weights(minmax_normalize(matrix([[1, 2], [1, 2], [1, 2]])))
        assert w.weights == pytest.approx([0.5, 0.5])

    def test_single_alternative_rejected(self):
        with pytest.raises(ConfigError, match="at least 2"):
            entropy_weights(minmax_normalize(matrix([[1, 2]])))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="sum to 1"):
            WeightVector(np.array([0.5, 0.6]))

    def test_published_matrix_spot_checks(self, published_matrix):
        norm = minmax_normalize(published_matrix)
        w = entropy_weights(norm).weights
        names = published_matrix.criteria_names

        def diversity(column):
            p = column / column.sum()
            e = -sum(x * math.log(x) for x in p if x > 0) / math.log(len(p))
            return 1.0 - e

        trucks = names.index("n_trucks")
        storage = names.index("storage_size")
        d_trucks = diversity(norm.values[:, trucks])
        d_storage = diversity(norm.values[:, storage])
        # hand computation: p = 3/14 (x3), 5/42 (x3), 0 (x3) and 0.2184 (x3), 0.1149 (x3), 0 (x3)
        assert d_trucks == pytest.approx(0.2034, abs=5e-4)
        assert d_storage == pytest.approx(0.2068, abs=5e-4)
        assert w[trucks] / w[storage] == pytest.approx(d_trucks / d_storage, rel=1e-12)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


class TestTopsis:
    def test_golden_equal_weights(self):
        dm = golden()
        result = topsis(minmax_normalize(dm), equal_weights(2))
        root13 = math.sqrt(13.0)
        assert result.scores == pytest.approx([0.5, root13 / (5.0 + root13), 0.5])
        assert result.ranks.tolist() == [1, 3, 2]

    def test_golden_weighted(self):
        result = topsis(minmax_normalize(golden()), WeightVector(np.array([0.7, 0.3])))
        assert result.scores == pytest.approx([0.3, math.sqrt(0.1325) / (math.sqrt(0.1625) + math.sqrt(0.1325)), 0.7])
        assert result.ranks.tolist() == [3, 2, 1]

    def test_dominant_alternative_first(self):
        dm = matrix([[1, 1], [5, 5], [3, 2]])
        assert topsis(minmax_normalize(dm), equal_weights(2)).ranks[1] == 1

    def test_mirrored_profiles_tie(self):
        result = topsis(minmax_normalize(matrix([[1, 0], [0, 1]])), equal_weights(2))
        assert result.scores == pytest.approx([0.5, 0.5])
        assert result.ranks.tolist() == [1, 2]

    def test_identical_rows_score_half(self):
        result = topsis(minmax_normalize(matrix([[3, 3], [3, 3]])), equal_weights(2))
        assert result.scores.tolist() == [0.5, 0.5]

    def test_vector_variant_keeps_dominance(self):
        dm = matrix([[1, 9], [5, 2], [3, 5]], ["benefit", "cost"])
        result = topsis(minmax_normalize(dm), equal_weights(2), normalization="vector")
        assert result.ranks[1] == 1

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError, match="3 weights for 2 criteria"):
            topsis(minmax_normalize(golden()), equal_weights(3))


class TestPromethee:
    def test_golden(self):
        norm = minmax_normalize(golden())
        assert promethee2(norm, equal_weights(2)).scores == pytest.approx([0.0, 0.0, 0.0])
        weighted = promethee2(norm, WeightVector(np.array([0.7, 0.3])))
        assert weighted.scores == pytest.approx([-0.4, 0.0, 0.4])
        assert weighted.ranks.tolist() == [3, 2, 1]
        assert weighted.diagnostics["phi_plus"] == pytest.approx([0.3, 0.5, 0.7])

    def test_complete_outranking(self):
        result = promethee2(minmax_normalize(matrix([[2, 2], [1, 1]])), equal_weights(2))
        assert result.scores == pytest.approx([1.0, -1.0])

    def test_identical_alternatives(self):
        result = promethee2(minmax_normalize(matrix([[2, 2], [2, 2], [2, 2]])), equal_weights(2))
        assert np.all(result.scores == 0.0)

    def test_linear_threshold(self):
        norm = minmax_normalize(matrix([[2.0], [1.0]]))
        result = promethee2(norm, equal_weights(1), preference="linear", thresholds=2.0)
        assert result.scores == pytest.approx([0.5, -0.5])

    @pytest.mark.parametrize("thresholds", [0.0, -1.0, [1.0, 0.0]])
    def test_non_positive_threshold(self, thresholds):
        norm = minmax_normalize(golden())
        with pytest.raises(ConfigError, match="> 0"):
            promethee2(norm, equal_weights(2), preference="linear", thresholds=thresholds)

    def test_linear_needs_thresholds(self):
        with pytest.raises(ConfigError, match="thresholds"):
            promethee2(minmax_normalize(golden()), equal_weights(2), preference="linear")


class TestVikor:
    def test_golden_equal_weights(self):
        result = vikor(golden(), equal_weights(2))
        assert result.diagnostics["S"] == pytest.approx([0.5, 0.5 * 0.5 + 0.5 * 2.0 / 3.0, 0.5])
        assert result.scores == pytest.approx([0.5, 0.5, 0.5])
        assert result.ranks.tolist() == [1, 2, 3]

    def test_golden_weighted(self):
        result = vikor(golden(), WeightVector(np.array([0.7, 0.3])))
        assert result.diagnostics["S"] == pytest.approx([0.7, 0.55, 0.3])
        assert result.diagnostics["R"] == pytest.approx([0.7, 0.35, 0.3])
        assert result.scores == pytest.approx([1.0, 0.375, 0.0])
        assert result.ranks.tolist() == [3, 2, 1]
        assert result.diagnostics["acceptable_advantage"] is False
        assert result.diagnostics["acceptable_stability"] is True

    def test_dominant_alternative(self):
        result = vikor(matrix([[5, 5], [1, 2], [2, 1]]), equal_weights(2))
        assert result.diagnostics["S"][0] == 0.0
        assert result.diagnostics["R"][0] == 0.0
        assert result.scores[0] == 0.0
        assert result.ranks[0] == 1

    def test_two_alternatives(self):
        result = vikor(matrix([[1, 1], [2, 2]]), equal_weights(2))
        assert result.scores == pytest.approx([1.0, 0.0])

    def test_mirrored_pair_ties_at_zero(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            k = int(rng.integers(1, 5))
            low = rng.uniform(0.0, 100.0, size=2 * k)
            high = low + rng.uniform(1e-3, 100.0, size=2 * k)
            rows = np.array([np.r_[high[:k], low[k:]], np.r_[low[:k], high[k:]]])
            dm = matrix(rows * rng.uniform(0.5, 5.0, size=2 * k) + rng.uniform(-50.0, 50.0, size=2 * k))
            for w in (equal_weights(2 * k), hybrid_weights(minmax_normalize(dm))):
                result = vikor(dm, w)
                assert result.scores.tolist() == [0.0, 0.0]
                assert result.ranks.tolist() == [1, 2]

    def test_rounding_noise_is_not_a_spread(self):
        rows = np.array([[0.1 + 0.2, 1.0], [0.3, 1.0 + 1e-15]])
        result = vikor(matrix(rows), equal_weights(2))
        assert result.scores.tolist() == [0.0, 0.0]

    def test_identical_alternatives(self):
        result = vikor(matrix([[1, 1], [1, 1], [1, 1]]), equal_weights(2))
        assert result.scores.tolist() == [0.0, 0.0, 0.0]
        assert result.ranks.tolist() == [1, 2, 3]

    def test_cost_orientation(self):
        result = vikor(matrix([[10.0], [20.0]], ["cost"]), equal_weights(1))
        assert result.ranks.tolist() == [1, 2]

    @pytest.mark.parametrize("v", [-0.1, 1.5])
    def test_v_range(self, v):
        with pytest.raises(ConfigError, match="v must lie"):
            vikor(golden(), equal_weights(2), v=v)


class TestAggregate:
    def rankings(self, m=9):
        alternatives = tuple(str(i) for i in range(m))
        base = np.arange(1, m + 1)
        swapped = base.copy()
        swapped[[0, 1]] = swapped[[1, 0]]
        return [
            MethodRanking(TOPSIS, alternatives, -base.astype(float), base),
            MethodRanking(PROMETHEE2, alternatives, -base.astype(float), base),
            MethodRanking(VIKOR, alternatives, swapped.astype(float), swapped),
        ]

    def test_average_scores(self):
        result = aggregate(self.rankings())
        assert round(result.aggregate_score[0], 2) == 8.67
        assert result.aggregate_score[8] == 1.0
        assert result.aggregate_score[4] == 5.0
        assert result.order[0] == "0"

    def test_alternative_mismatch(self):
        rankings = self.rankings()
        rankings[2] = MethodRanking(VIKOR, tuple("abcdefghi"), rankings[2].scores, rankings[2].ranks)
        with pytest.raises(ConfigError, match="VIKOR"):
            aggregate(rankings)

    def test_rank_from_scores_is_stable(self):
        assert rank_from_scores([0.3, 0.7, 0.3]).tolist() == [2, 1, 3]
        assert rank_from_scores([0.3, 0.7, 0.3], descending=False).tolist() == [1, 3, 2]

    def test_spearman(self):
        assert spearman(["a", "b", "c"], ["a", "b", "c"]) == 1.0
        assert spearman(["a", "b", "c"], ["c", "b", "a"]) == -1.0
        with pytest.raises(ConfigError):
            spearman(["a", "b"], ["a", "c"])


class TestSettings:
    def test_defaults(self):
        settings = McdmSettings()
        assert (settings.preference, settings.v, settings.topsis_normalization) == ("usual", 0.5, "minmax")

    @pytest.mark.parametrize(
        "kwargs", [dict(v=1.5), dict(preference="gaussian"), dict(topsis_normalization="l1")]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            McdmSettings(**kwargs)


class TestPublishedMatrix:
    def test_structure(self, published_matrix):
        ranking, weights = rank_study(published_matrix)
        m = len(published_matrix.alternatives)
        assert weights.hybrid.sum() == pytest.approx(1.0, abs=1e-12)
        assert weights.entropy.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(ranking.aggregate_score >= 1.0) and np.all(ranking.aggregate_score <= m)
        for method in ranking.rankings:
            assert sorted(method.ranks.tolist()) == list(range(1, m + 1))

    def test_promethee_extremes(self, published_matrix):
        ranking, _ = rank_study(published_matrix)
        flows = ranking.method(PROMETHEE2)
        assert abs(flows.scores.sum()) < 1e-12
        order = [flows.alternatives[i] for i in np.argsort(flows.ranks)]
        assert set(order[:2]) == {"1.2", "1.3"}
        assert order[-1] == "3.3"
        assert order[-2] == "3.1"

    def test_default_ranking(self, published_matrix):
        ranking, _ = rank_study(published_matrix)
        assert ranking.order == ["1.2", "1.3", "2.3", "2.2", "1.1", "2.1", "3.2", "3.1", "3.3"]
        score = dict(zip(ranking.alternatives, ranking.aggregate_score))
        assert round(score["1.2"], 2) == 8.33
        assert round(score["3.1"], 2) == 2.00
        assert score["3.3"] == min(score.values())

    def test_agreement_with_published_order(self, published_matrix):
        ranking, _ = rank_study(published_matrix)
        published = PUBLISHED_ORDER.split(",")
        assert spearman(ranking.order, published) == pytest.approx(1.0 - 6.0 * 32 / (9 * 80))
        assert round(spearman(ranking.order, published), 3) == 0.733

    def test_linear_family_runs(self, published_matrix):
        ranking, _ = rank_study(published_matrix, McdmSettings(preference="linear", thresholds=0.5))
        assert abs(ranking.method(PROMETHEE2).scores.sum()) < 1e-12

    def test_output_files(self, published_matrix, tmp_path):
        ranking, weights = rank_study(published_matrix)
        write_rankings(ranking, tmp_path / "rankings.csv", {"tool_version": "x"})
        write_weights(weights, tmp_path / "weights.csv")
        rankings = load_data(tmp_path / "rankings.csv", dtype={"alternative": str})
        assert list(rankings.columns) == [
            "alternative", "topsis_score", "topsis_rank", "promethee2_score", "promethee2_rank",
            "vikor_score", "vikor_rank", "aggregate_score", "position",
        ]
        assert rankings["position"].tolist() == list(range(1, 10))
        assert rankings["alternative"].tolist() == ranking.order
        table = load_data(tmp_path / "weights.csv")
        assert table["criterion"].tolist() == published_matrix.criteria_names
        assert table["hybrid"].sum() == pytest.approx(1.0)


class TestProperties:
    """Invariants checked over seeded random decision matrices."""

    N_CASES = 120

    def cases(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(self.N_CASES):
            yield rng, random_matrix(rng)

    def test_weights_sum_to_one(self):
        for _, dm in self.cases(1):
            norm = minmax_normalize(dm)
            assert abs(entropy_weights(norm).weights.sum() - 1.0) <= 1e-12
            hybrid = hybrid_weights(norm).weights
            assert abs(hybrid.sum() - 1.0) <= 1e-12
            assert np.all(hybrid > 0.0)

    def test_flow_balance(self):
        for _, dm in self.cases(2):
            norm = minmax_normalize(dm)
            phi = promethee2(norm, hybrid_weights(norm)).scores
            assert abs(phi.sum()) <= 1e-12
            assert np.all(phi >= -1.0 - 1e-12) and np.all(phi <= 1.0 + 1e-12)

    def test_dominance_consistency(self):
        for rng, dm in self.cases(3):
            m, n = dm.shape
            better, worse = rng.choice(m, size=2, replace=False)
            values = dm.values.copy()
            values[worse] = values[better]
            k = int(rng.integers(n))
            delta = rng.uniform(1.0, 10.0)
            values[worse, k] += -delta if dm.is_benefit[k] else delta
            dominated = DecisionMatrix(dm.alternatives, dm.criteria, values)
            for name, result in run_all(dominated).items():
                assert result.ranks[better] < result.ranks[worse], name

    def test_positive_affine_invariance(self):
        for rng, dm in self.cases(4):
            n = dm.shape[1]
            alpha = rng.uniform(0.5, 5.0, size=n)
            beta = rng.uniform(-50.0, 50.0, size=n)
            scaled = DecisionMatrix(dm.alternatives, dm.criteria, dm.values * alpha + beta)
            before, after = run_all(dm), run_all(scaled)
            for name in before:
                assert after[name].scores == pytest.approx(before[name].scores, abs=1e-9), name
                if well_separated(before[name].scores):
                    assert after[name].ranks.tolist() == before[name].ranks.tolist(), name

    def test_permutation_equivariance(self):
        for rng, dm in self.cases(5):
            perm = rng.permutation(dm.shape[0])
            permuted = DecisionMatrix(
                tuple(dm.alternatives[i] for i in perm), dm.criteria, dm.values[perm]
            )
            before, after = run_all(dm), run_all(permuted)
            for name in before:
                assert after[name].scores == pytest.approx(before[name].scores[perm], abs=1e-9), name
                if well_separated(before[name].scores):
                    assert after[name].ranks.tolist() == before[name].ranks[perm].tolist(), name

    def test_zero_weight_criterion_is_ignored(self):
        rng = np.random.default_rng(6)
        for _ in range(self.N_CASES):
            dm = random_matrix(rng, n=int(rng.integers(2, 16)))
            m, n = dm.shape
            raw = rng.uniform(0.1, 1.0, size=n)
            k = int(rng.integers(n))
            raw[k] = 0.0
            w = WeightVector(raw / raw.sum())
            values = dm.values.copy()
            values[:, k] = rng.uniform(0.0, 100.0, size=m)
            changed = DecisionMatrix(dm.alternatives, dm.criteria, values)
            n1, n2 = minmax_normalize(dm), minmax_normalize(changed)
            assert topsis(n1, w).ranks.tolist() == topsis(n2, w).ranks.tolist()
            assert promethee2(n1, w).ranks.tolist() == promethee2(n2, w).ranks.tolist()
            assert vikor(dm, w).ranks.tolist() == vikor(changed, w).ranks.tolist()
