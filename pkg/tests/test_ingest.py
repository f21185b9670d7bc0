import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restopred import ingest
from restopred.errors import IngestError


def write(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return path


OUTAGE_HEADER = ",".join(ingest.OUTAGE_FIELDS)


def outage_line(start="2021-01-01 10:00:00", end="2021-01-01 12:00:00", cust="5",
                repair="30.0", rest="120.0", cause="7", equip="3", loc="L1", ckt="C1"):
    return f"{start},{end},{cust},{repair},{rest},{cause},{equip},{loc},{ckt}"


class TestParseOutageCsv:
    def test_well_formed_rows(self, tmp_path):
        path = write(tmp_path, "o.csv", f"{OUTAGE_HEADER}\n"
                     + outage_line() + "\n"
                     + outage_line(start="2021-01-02 00:00:00", end="2021-01-02 01:00:00") + "\n"
                     + outage_line(start="2021-01-03 00:00:00", end="2021-01-03 02:00:00") + "\n")
        result = ingest.parse_outage_csv(path)
        assert len(result.rows) == 3
        assert result.diagnostics == []
        assert result.rows[0].customers_interrupted == 5
        # timestamps parse to epoch seconds, UTC by default
        assert result.rows[0].end_time - result.rows[0].start_time == 7200

    def test_empty_field_passes_through_as_missing(self, tmp_path):
        path = write(tmp_path, "o.csv", f"{OUTAGE_HEADER}\n" + outage_line(cust="") + "\n")
        result = ingest.parse_outage_csv(path)
        assert len(result.rows) == 1
        assert result.rows[0].customers_interrupted is None
        assert result.rows[0].missing_fields() == ["customers_interrupted"]

    def test_malformed_timestamp_skips_row_with_diagnostic(self, tmp_path):
        path = write(tmp_path, "o.csv", f"{OUTAGE_HEADER}\n"
                     + outage_line(end="not-a-time") + "\n" + outage_line() + "\n")
        result = ingest.parse_outage_csv(path)
        assert len(result.rows) == 1
        assert len(result.diagnostics) == 1
        assert result.diagnostics[0].line == 2
        assert result.diagnostics[0].field == "end_time"

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError):
            ingest.parse_outage_csv(tmp_path / "nope.csv")

    def test_header_missing_mapped_column(self, tmp_path):
        path = write(tmp_path, "o.csv", "start_time,end_time\n")
        with pytest.raises(IngestError, match="header missing"):
            ingest.parse_outage_csv(path)

    def test_schema_mapping_and_timezone(self, tmp_path):
        header = OUTAGE_HEADER.replace("start_time", "BEGIN").replace("end_time", "FINISH")
        path = write(tmp_path, "o.csv", f"{header}\n" + outage_line() + "\n")
        schema = dict(ingest.DEFAULT_SCHEMA, start_time="BEGIN", end_time="FINISH",
                      timezone="America/New_York")
        result = ingest.parse_outage_csv(path, schema)
        assert len(result.rows) == 1
        # 10:00 Eastern in January is 15:00 UTC
        utc = ingest.parse_timestamp("2021-01-01 15:00:00", ingest._resolve_tz("UTC"))
        assert result.rows[0].start_time == utc

    def test_row_order_preserved(self, tmp_path):
        lines = [outage_line(cust=str(i)) for i in range(6)]
        path = write(tmp_path, "o.csv", f"{OUTAGE_HEADER}\n" + "\n".join(lines) + "\n")
        result = ingest.parse_outage_csv(path)
        assert [r.customers_interrupted for r in result.rows] == list(range(6))


def raw(start=0, end=3600, rest=30.0, cust=5, **kw):
    fields = dict(
        start_time=start, end_time=end, customers_interrupted=cust,
        repair_time_min=10.0, restoration_time_min=rest,
        cause_key=1, equipment_cause_key=1, location_id="L", circuit_id="C",
    )
    fields.update(kw)
    return ingest.RawOutageRow(**fields)


class TestClean:
    def test_restoration_exceeding_span_rejected_as_logic(self):
        kept, rejected = ingest.clean([raw(start=0, end=3600, rest=120.0)])
        assert kept == []
        assert rejected[0].reason == "logic"

    def test_consistent_row_retained_unchanged(self):
        row = raw()
        kept, rejected = ingest.clean([row])
        assert kept == [row]
        assert rejected == []

    def test_gross_restoration_rejected(self):
        row = raw(start=0, end=10**9, rest=1e6)
        kept, rejected = ingest.clean([row], ceiling_min=1e4)
        assert kept == []
        assert rejected[0].reason == "gross"

    def test_missing_field_rejected(self):
        kept, rejected = ingest.clean([raw(cause_key=None)])
        assert kept == []
        assert rejected[0].reason == "missing"

    def test_end_not_after_start_is_logic(self):
        kept, rejected = ingest.clean([raw(start=100, end=100, rest=0.0)])
        assert rejected[0].reason == "logic"

    def test_restoration_equal_to_span_is_kept(self):
        kept, _ = ingest.clean([raw(start=0, end=3600, rest=60.0)])
        assert len(kept) == 1

    def test_line_numbers_flow_into_log(self):
        _, rejected = ingest.clean([raw(rest=999.0)], line_numbers=[41])
        assert rejected[0].line == 41

    def test_idempotent(self):
        rows = [raw(), raw(rest=120.0), raw(cust=None), raw(start=0, end=60, rest=2.0)]
        kept1, _ = ingest.clean(rows)
        kept2, rejected2 = ingest.clean(kept1)
        assert kept2 == kept1
        assert rejected2 == []

    @given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(1, 10**5),
                              st.floats(0, 5000), st.booleans())))
    @settings(max_examples=50, deadline=None)
    def test_every_row_accounted_for(self, rows_spec):
        rows = [
            raw(start=s, end=s + d, rest=r, cust=None if miss else 5)
            for s, d, r, miss in rows_spec
        ]
        kept, rejected = ingest.clean(rows)
        assert len(kept) + len(rejected) == len(rows)


def wx(hour=0, temp=1.0, precip=0.0, wind=2.0, condition="normal"):
    return ingest.WeatherRow(hour_start=hour, temp=temp, precip=precip,
                             wind=wind, condition=condition)


class TestJoinWeather:
    def test_truncates_start_to_hour(self):
        records, errors = ingest.join_weather(
            [raw(start=14 * 3600 + 37 * 60, end=16 * 3600)], [wx(hour=14 * 3600, temp=9.5)]
        )
        assert errors == []
        assert records[0].weather_temp == 9.5

    def test_same_hour_shares_weather(self):
        rows = [raw(start=100, end=4000), raw(start=3000, end=7000)]
        records, _ = ingest.join_weather(rows, [wx(hour=0), wx(hour=3600)])
        assert records[0].weather_temp == records[1].weather_temp == 1.0

    def test_uncovered_hour_excluded_with_error(self):
        records, errors = ingest.join_weather([raw(start=50, end=100)], [wx(hour=7200)])
        assert records == []
        assert errors[0][0] == 0

    def test_outage_fields_unchanged(self):
        row = raw(start=10, end=7200, cust=17)
        records, _ = ingest.join_weather([row], [wx(hour=0)])
        rec = records[0]
        for field in ingest.OUTAGE_FIELDS:
            assert getattr(rec, field) == getattr(row, field)


class TestCleanedCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        rows = [raw(start=5, end=7000, rest=13.37), raw(start=4000, end=9000, rest=80.0)]
        records, _ = ingest.join_weather(rows, [wx(hour=0), wx(hour=3600, precip=0.25)])
        path = tmp_path / "cleaned.csv"
        ingest.write_cleaned_csv(records, path)
        back = ingest.read_cleaned_csv(path)
        assert back == records

    def test_rejections_csv(self, tmp_path):
        _, rejected = ingest.clean([raw(rest=1e9), raw(cust=None)])
        path = tmp_path / "rej.csv"
        ingest.write_rejections_csv(rejected, path)
        text = path.read_text().splitlines()
        assert text[0] == "line,reason"
        assert len(text) == 3


class TestWeatherCsv:
    def test_duplicate_hour_rejected(self, tmp_path):
        path = write(tmp_path, "w.csv",
                     "hour_start,temp,precip,wind,condition\n"
                     "2021-01-01 05:00:00,1.0,0.0,2.0,normal\n"
                     "2021-01-01 05:30:00,2.0,0.0,2.0,normal\n")
        with pytest.raises(IngestError, match="duplicate"):
            ingest.parse_weather_csv(path)

    def test_unknown_condition_rejected(self, tmp_path):
        path = write(tmp_path, "w.csv",
                     "hour_start,temp,precip,wind,condition\n"
                     "2021-01-01 05:00:00,1.0,0.0,2.0,breezy\n")
        with pytest.raises(IngestError, match="condition"):
            ingest.parse_weather_csv(path)
