import numpy as np
import pytest

from dpmvs.bench.simulation import CASE_IDS, CENSOR_AT, FAMILIES, generate_case, normalize_case_id
from dpmvs.common.errors import DataValidationError
from dpmvs.utils.stats_kernels import RngStream

pytestmark = pytest.mark.unit


@pytest.mark.parametrize("case_id,shape,p1", [("1a", (150, 10), 2), ("1b", (150, 10), 2), ("2a", (300, 30), 4)])
def test_shapes_and_truth(case_id, shape, p1):
    ds, truth = generate_case(case_id, RngStream(1))
    assert ds.y.shape == shape
    assert truth.gamma_true.sum() == p1 and truth.gamma_true[:p1].all()
    assert truth.phi_true.shape == (shape[0],)
    assert set(np.unique(truth.phi_true)) <= {0, 1, 2}
    assert ds.observed.all()


def test_same_stream_same_data():
    a, truth_a = generate_case("1d", RngStream(5, 9))
    b, truth_b = generate_case("1d", RngStream(5, 9))
    np.testing.assert_array_equal(a.observed, b.observed)
    np.testing.assert_array_equal(a.y[a.observed], b.y[b.observed])
    np.testing.assert_array_equal(truth_a.phi_true, truth_b.phi_true)


def test_different_streams_differ():
    a, _ = generate_case("1a", RngStream(5, 1))
    b, _ = generate_case("1a", RngStream(5, 2))
    assert not np.array_equal(a.y, b.y)


def test_informative_means_per_cluster():
    family = FAMILIES["1"]
    ds, truth = generate_case("1a", RngStream(11))
    for m, mean in enumerate(family.means):
        rows = truth.phi_true == m
        se = 1.0 / np.sqrt(rows.sum())
        np.testing.assert_allclose(ds.y[rows, :2].mean(axis=0), mean, atol=4 * se)


def test_mixing_proportions():
    _, truth = generate_case("2a", RngStream(12))
    np.testing.assert_allclose(np.bincount(truth.phi_true) / 300, [0.5, 0.25, 0.25], atol=0.1)


class TestDiscretizedCases:
    def test_case_1c_schema(self):
        ds, truth = generate_case("1c", RngStream(3))
        kinds = {column.name: column for column in ds.schema}
        assert kinds["y1"].kind == "ordinal" and kinds["y6"].kind == "ordinal"
        assert kinds["y2"].lower == -CENSOR_AT and kinds["y9"].lower == -CENSOR_AT
        assert kinds["y3"].upper == CENSOR_AT and kinds["y10"].upper == CENSOR_AT
        assert kinds["y4"].kind == "continuous" and kinds["y4"].lower is None

    def test_rounded_values_are_bounded_integers(self):
        ds, _ = generate_case("1c", RngStream(3))
        values = ds.y[:, 0]
        np.testing.assert_array_equal(values, np.round(values))
        assert np.abs(values).max() <= 4

    def test_censoring_rates_match_the_data(self):
        ds, truth = generate_case("1c", RngStream(4))
        at_bound = float(np.mean(ds.y[:, 1] == -CENSOR_AT))
        assert truth.censoring_rates["y2"] == pytest.approx(at_bound)
        assert 0.0 < at_bound < 0.5
        assert np.all(ds.censor[ds.y[:, 1] == -CENSOR_AT, 1] == -1)
        assert truth.mean_censoring_rate is not None

    def test_case_2c_rounded_and_censored_column(self):
        ds, _ = generate_case("2c", RngStream(6))
        column = ds.schema[10]
        assert column.kind == "ordinal"
        assert ds.y[:, 10].min() >= -CENSOR_AT
        assert column.levels[0] == pytest.approx(-CENSOR_AT) or ds.y[:, 10].min() > -CENSOR_AT

    def test_case_1d_missingness_on_even_columns(self):
        ds, _ = generate_case("1d", RngStream(7))
        missing = ~ds.observed
        assert not missing[:, 0::2].any()
        rates = missing[:, 1::2].mean(axis=0)
        assert np.all((rates > 0.15) & (rates < 0.45))

    def test_uncensored_variants_have_no_rates(self):
        _, truth = generate_case("1b", RngStream(8))
        assert truth.censoring_rates == {} and truth.mean_censoring_rate is None


@pytest.mark.parametrize("spelling", ["1a", "1(a)", "Case 1(a)", "CASE 1A"])
def test_case_id_spellings(spelling):
    assert normalize_case_id(spelling) == "1a"


def test_unknown_case():
    with pytest.raises(DataValidationError, match="3a"):
        normalize_case_id("3a")


def test_every_case_generates():
    for case_id in CASE_IDS:
        ds, truth = generate_case(case_id, RngStream(2))
        assert ds.n == truth.phi_true.shape[0]
