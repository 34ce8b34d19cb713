import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trademl.errors import SchemaError
from trademl.hs2 import chapter_name, sector
from trademl.ingest import (
    TradeRecord,
    build_country_vectors,
    build_transactions,
    country_totals,
    flatten_transactions,
    load_feature_csv,
    load_trade_csv,
    standardize,
    write_feature_csv,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_row_maps_to_record(tmp_path):
    p = write(tmp_path, "t.csv", "reporter,partner,year,hs_chapter,value\nUSA,MEX,2017,10,120000.5\n")
    records, diags = load_trade_csv(p)
    assert records == [TradeRecord("USA", "MEX", 2017, 10, 120000.5)]
    assert diags == []


def test_chapter_out_of_range_rejected(tmp_path):
    p = write(tmp_path, "t.csv", "reporter,partner,year,hs_chapter,value\nUSA,MEX,2017,97,1\n")
    records, diags = load_trade_csv(p)
    assert records == []
    assert diags[0].line == 2 and "97" in diags[0].message


def test_malformed_row_keeps_the_rest(tmp_path):
    text = ("reporter,partner,year,hs_chapter,value\n"
            "USA,MEX,2017,10,5\n"
            "USA,MEX,notayear,10,5\n"
            "CAN,MEX,2017,12,7\n")
    records, diags = load_trade_csv(write(tmp_path, "t.csv", text))
    assert len(records) == 2
    assert [d.line for d in diags] == [3]


@pytest.mark.parametrize("row", ["USA,USA,2017,10,5", "USA,MEX,2017,10,-1", "USA,MEX,2017,0,5"])
def test_invalid_rows(tmp_path, row):
    p = write(tmp_path, "t.csv", "reporter,partner,year,hs_chapter,value\n" + row + "\n")
    records, diags = load_trade_csv(p)
    assert not records and len(diags) == 1


def test_missing_column(tmp_path):
    p = write(tmp_path, "t.csv", "reporter,partner,year,value\nUSA,MEX,2017,5\n")
    with pytest.raises(SchemaError, match="hs_chapter"):
        load_trade_csv(p)


def test_schema_mapping(tmp_path):
    p = write(tmp_path, "t.csv", "# exported\nrep,par,yr,hs,usd\nUSA,MEX,2017,10,5\n")
    schema = {"reporter": "rep", "partner": "par", "year": "yr", "hs_chapter": "hs", "value": "usd"}
    records, _ = load_trade_csv(p, schema)
    assert records[0].value == 5.0


def test_duplicate_records_aggregate():
    recs = [TradeRecord("USA", "MEX", 2017, 10, 5), TradeRecord("USA", "MEX", 2017, 10, 7)]
    tx = build_transactions(recs)
    assert len(tx) == 1 and tx[0].items == frozenset({10})


def test_zero_value_excluded():
    assert build_transactions([TradeRecord("USA", "MEX", 2017, 10, 0)], 0.0) == []


def test_transactions_are_directed_and_per_year():
    recs = [TradeRecord("A", "B", 2000, 1, 1), TradeRecord("B", "A", 2000, 1, 1),
            TradeRecord("A", "B", 2001, 2, 1), TradeRecord("A", "B", 2000, 3, 1)]
    tx = build_transactions(recs)
    assert [t.id for t in tx] == ["A|B|2000", "A|B|2001", "B|A|2000"]
    assert tx[0].items == frozenset({1, 3})


records_strategy = st.lists(
    st.builds(TradeRecord, st.sampled_from("ABCD"), st.sampled_from("EFG"), st.integers(2000, 2003),
              st.integers(1, 96), st.floats(0.5, 1e6)),
    max_size=40,
)


@given(records_strategy)
@settings(max_examples=60, deadline=None)
def test_build_transactions_idempotent(records):
    tx = build_transactions(records)
    assert build_transactions(flatten_transactions(tx)) == tx


def test_country_totals_count_both_roles():
    totals = country_totals([TradeRecord("A", "B", 2000, 1, 10), TradeRecord("C", "A", 2000, 1, 5)])
    assert totals == {"A": 15.0, "B": 10.0, "C": 5.0}


def test_two_country_standardization():
    recs = [TradeRecord("A", "X", 2000, 1, 10), TradeRecord("B", "X", 2000, 1, 30)]
    vec = {v.country: v.features for v in build_country_vectors(recs, "custom", matrix={"A": [10], "B": [30]})}
    assert vec["A"][0] == pytest.approx(-1.0) and vec["B"][0] == pytest.approx(1.0)
    assert {v.country for v in build_country_vectors(recs)} == {"A", "B", "X"}


def test_zero_variance_dimension_is_zero():
    out = build_country_vectors([], "custom", matrix={"A": [3.0, 1.0], "B": [3.0, 2.0], "C": [3.0, 3.0]})
    assert all(v.features[0] == 0 for v in out)


def test_standardize_matches_oracle():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 2)) * 100
    want = (M - M.mean(axis=0)) / M.std(axis=0)
    np.testing.assert_allclose(standardize(M), want)


def test_single_country_is_an_error():
    with pytest.raises(ValueError):
        build_country_vectors([], "custom", matrix={"A": [1.0]})


def test_feature_csv_roundtrip(tmp_path):
    keys = [("A", "B", 2000, "sugar"), ("C", "D", 2001, "sugar")]
    X = np.array([[1.5, 2.0], [3.0, 4.25]])
    write_feature_csv(tmp_path / "f.csv", keys, ["GDP_o", "Distance"], X, [10.0, 20.0])
    table = load_feature_csv(tmp_path / "f.csv")
    assert table.keys == keys
    np.testing.assert_array_equal(table.X, X)
    np.testing.assert_array_equal(table.y, [10.0, 20.0])


def test_feature_csv_imputes_and_encodes(tmp_path):
    text = ("origin,destination,year,commodity,GDP_o,Region,target\n"
            "A,B,2000,c,1,north,1\nA,B,2001,c,,south,2\nA,B,2002,c,5,north,3\n")
    table = load_feature_csv(write(tmp_path, "f.csv", text))
    assert table.X[1, 0] == 3.0 and table.imputed["GDP_o"] == 1
    assert table.encodings["Region"] == {"north": 0, "south": 1}


def test_feature_csv_names_missing_column(tmp_path):
    text = "origin,destination,year,commodity,GDP_o,target\nA,B,2000,c,1,1\n"
    with pytest.raises(SchemaError, match="Distance"):
        load_feature_csv(write(tmp_path, "f.csv", text), feature_names=["GDP_o", "Distance"])


def test_target_optional_for_scoring(tmp_path):
    text = "origin,destination,year,commodity,GDP_o\nA,B,2000,c,1\n"
    table = load_feature_csv(write(tmp_path, "f.csv", text), require_target=False)
    assert np.isnan(table.y).all()


def test_chapter_names():
    assert chapter_name(19).startswith("Preparations of cereals")
    assert chapter_name(250) == "HS-250"
    assert sector(10) != sector(84)
