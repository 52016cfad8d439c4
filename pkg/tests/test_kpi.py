import numpy as np
import pytest

from conftest import PUBLISHED_MATRIX, make_config, make_dataset
from core.dispatch import HourRecord, SimulationTrace, simulate
from core.errors import ConfigError, DataValidationError
from core.kpi import (
    DEFAULT_ORIENTATIONS,
    KPI_LABELS,
    KPI_NAMES,
    KpiReport,
    build_decision_matrix,
    check_consistency,
    compute_kpis,
    read_decision_matrix,
    read_kpis,
    substitute_undefined,
    write_decision_matrix,
    write_kpis,
)
from core.site_model import make_experiment


def table3_report(experiment_id="1.1", **overrides):
    """Grid-only 10 MW column of the published results, as printed."""
    values = dict(
        experiment_id=experiment_id,
        produced_h2=868.0,
        grid_consumption=49865.0,
        grid_cost=76.0,
        h2_cost=87.0,
        electricity_sold=278536.0,
        sale_revenue=103.0,
        co2_total=5170.0,
        co2_per_kg=6.0,
        electrolyzer_flh=4987.0,
        storage_size=100.0,
        storage_utilization=0.16,
        n_trucks=2,
        truck_utilization=0.56,
    )
    values.update(overrides)
    return KpiReport(**values)


def zero_trace(hours=8760):
    records = [HourRecord(h, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0) for h in range(hours)]
    return SimulationTrace("0.2", records)


class TestDefinitions:
    def test_thirteen_criteria(self):
        assert len(KPI_NAMES) == 13
        assert set(KPI_LABELS) == set(KPI_NAMES)
        assert set(DEFAULT_ORIENTATIONS) == set(KPI_NAMES)

    def test_default_orientations(self):
        benefit = {name for name, o in DEFAULT_ORIENTATIONS.items() if o == "benefit"}
        assert benefit == {
            "produced_h2", "electricity_sold", "sale_revenue",
            "electrolyzer_flh", "storage_utilization", "truck_utilization",
        }


class TestPublishedTable:
    def test_cost_per_kg_from_totals(self):
        assert 76e6 / 868e3 == pytest.approx(87.0, abs=1.0)

    def test_full_load_hours_from_consumption(self):
        assert 49865.0 / 10.0 == pytest.approx(4987.0, abs=1.0)

    def test_rounded_report_is_nearly_consistent(self):
        # the printed table rounds to whole units, so only a loose tolerance holds
        assert check_consistency(table3_report(), 8784, tol=0.15) == []

    def test_inconsistent_report_is_flagged(self):
        problems = check_consistency(table3_report(co2_total=9000.0, h2_cost=76e6 / 868e3), 8784)
        assert problems == ["co2_per_kg x produced_h2 != co2_total"]

    def test_utilization_bounds(self):
        problems = check_consistency(table3_report(truck_utilization=1.3), 8784)
        assert "truck_utilization outside [0, 1]" in problems

    def test_full_load_hours_bound_follows_year_length(self):
        report = table3_report(electrolyzer_flh=8770.0)
        assert "electrolyzer_flh exceeds hours in year" in check_consistency(report, 8760, tol=0.15)
        assert check_consistency(report, 8784, tol=0.15) == []


class TestComputeKpis:
    def test_simulated_report(self):
        d = make_dataset(spot=100.0, co2=200.0)
        config = make_config("S1", daily_demand=480.0, scheduling="flat", storage=50.0, n_trucks=2,
                             truck_capacity=100.0, base_variable_cost=5.0)
        trace = simulate(config, d)
        report = compute_kpis(trace, config)

        produced_kg = 365 * 480.0
        grid_mwh = 365 * 24 * 1.0
        assert report.produced_h2 == pytest.approx(produced_kg / 1000.0, rel=1e-5)
        assert report.grid_consumption == pytest.approx(grid_mwh, rel=1e-5)
        assert report.grid_cost == pytest.approx(grid_mwh * 100.0 / 1e6, rel=1e-5)
        assert report.h2_cost == pytest.approx(grid_mwh * 100.0 / produced_kg + 5.0, rel=1e-5)
        assert report.co2_total == pytest.approx(grid_mwh * 0.2, rel=1e-5)
        assert report.co2_per_kg == pytest.approx(grid_mwh * 200.0 / produced_kg, rel=1e-5)
        assert report.electrolyzer_flh == pytest.approx(grid_mwh / 10.0, rel=1e-5)
        assert report.storage_size == 50.0
        assert report.n_trucks == 2
        assert 0.0 <= report.storage_utilization <= 1.0
        assert 0.0 < report.truck_utilization <= 1.0
        assert check_consistency(report, 8760, base_variable_cost=5.0) == []

    def test_all_zero_trace(self):
        config = make_config("S2", experiment_id="0.2")
        report = compute_kpis(zero_trace(), config)
        assert report.produced_h2 == 0.0
        assert report.grid_cost == 0.0
        assert report.h2_cost is None
        assert report.co2_per_kg is None
        assert report.undefined == ["h2_cost", "co2_per_kg"]

    def test_consistent_on_synthetic_year(self, synthetic_year):
        for strategy in ("S1", "S2", "S3"):
            config = make_experiment(1, strategy)
            report = compute_kpis(simulate(config, synthetic_year), config)
            assert check_consistency(report, synthetic_year.n_hours) == []

    def test_kpis_file_round_trip(self, tmp_path):
        report = compute_kpis(zero_trace(), make_config("S2", experiment_id="0.2"))
        write_kpis(report, tmp_path / "kpis_0.2.csv")
        assert read_kpis(tmp_path / "kpis_0.2.csv") == report


class TestDecisionMatrix:
    def test_substitute_then_build(self):
        reports = substitute_undefined([table3_report(), compute_kpis(zero_trace(), make_config("S2", experiment_id="1.2"))])
        matrix = build_decision_matrix(reports)
        assert matrix.shape == (2, 13)
        assert matrix.alternatives == ("1.1", "1.2")
        assert matrix.values[1, KPI_NAMES.index("h2_cost")] == 0.0

    def test_undefined_entries_rejected(self):
        reports = [table3_report(), compute_kpis(zero_trace(), make_config("S2", experiment_id="1.2"))]
        with pytest.raises(ConfigError, match="1.2"):
            build_decision_matrix(reports)

    def test_needs_two_reports(self):
        with pytest.raises(ConfigError, match="at least 2"):
            build_decision_matrix([table3_report()])

    def test_identical_reports(self):
        matrix = build_decision_matrix([table3_report("a"), table3_report("b")])
        assert np.array_equal(matrix.values[0], matrix.values[1])

    def test_orientation_override_is_metadata(self):
        reports = [table3_report("a"), table3_report("b", produced_h2=500.0)]
        default = build_decision_matrix(reports)
        flipped = build_decision_matrix(reports, {"produced_h2": "cost"})
        assert dict(flipped.criteria)["produced_h2"] == "cost"
        assert np.array_equal(default.values, flipped.values)

    def test_bad_orientation(self):
        with pytest.raises(ConfigError):
            build_decision_matrix([table3_report("a"), table3_report("b")], {"produced_h2": "sideways"})

    def test_unknown_criterion(self):
        with pytest.raises(ConfigError, match="unknown criteria"):
            build_decision_matrix([table3_report("a"), table3_report("b")], {"profit": "benefit"})

    def test_write_then_read(self, tmp_path):
        matrix = build_decision_matrix([table3_report("1.1"), table3_report("1.3", grid_consumption=20203.0)])
        path = write_decision_matrix(matrix, tmp_path / "decision_matrix.csv", {"tool_version": "x"})
        loaded = read_decision_matrix(path)
        assert loaded.alternatives == matrix.alternatives
        assert loaded.criteria == matrix.criteria
        assert np.array_equal(loaded.values, matrix.values)


class TestPublishedFixture:
    def test_reproduces_tables(self, published_matrix):
        assert published_matrix.shape == (9, 13)
        assert published_matrix.alternatives == ("1.1", "1.2", "1.3", "2.1", "2.2", "2.3", "3.1", "3.2", "3.3")
        assert published_matrix.criteria_names == list(KPI_NAMES)
        frame = published_matrix.to_frame()
        assert frame.loc["1.1", "grid_consumption"] == 49865.0
        assert frame.loc["2.3", "co2_total"] == 14668.0
        assert frame.loc["3.2", "electricity_sold"] == 109497.0
        assert frame.loc["3.3", "n_trucks"] == 11.0

    def test_orientations_match_defaults(self, published_matrix):
        assert dict(published_matrix.criteria) == DEFAULT_ORIENTATIONS

    def test_bad_number_names_row(self, tmp_path):
        text = open(PUBLISHED_MATRIX, encoding="utf-8").read().replace("1.2,502,", "1.2,five hundred,")
        path = tmp_path / "broken.csv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(DataValidationError, match=r"row 3.*produced_h2"):
            read_decision_matrix(path)

    def test_missing_orientation_row(self, tmp_path):
        lines = open(PUBLISHED_MATRIX, encoding="utf-8").read().splitlines()
        path = tmp_path / "no_orientation.csv"
        path.write_text("\n".join(line for line in lines if not line.startswith("orientation")) + "\n",
                        encoding="utf-8")
        with pytest.raises(DataValidationError, match="orientation"):
            read_decision_matrix(path)
