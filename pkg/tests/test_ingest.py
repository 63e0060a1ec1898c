import json

import pytest
from hypothesis import given, strategies as st

from course_sdg.errors import MalformedPageError, NetworkError
from course_sdg.ingest import (
    ApiConfig, IngestLog, LocalCatalogTransport, RawCourse, fetch_courses,
    parse_catalog_page, read_raw_store, write_raw_store,
)

from conftest import wire_record


def cfg(url, **kw):
    kw.setdefault("page_size", 3)
    kw.setdefault("backoff_base", 0.001)
    return ApiConfig(url, **kw)


def test_two_pages_in_page_order(catalog_server):
    pages = [[wire_record(i) for i in (5, 1, 3)], [wire_record(i) for i in (9, 2, 7)]]
    srv = catalog_server(pages)
    got = fetch_courses(cfg(srv.url), (2021, 2023))
    assert [c.id for c in got] == ["C0005", "C0001", "C0003", "C0009", "C0002", "C0007"]


def test_token_paging(catalog_server):
    pages = [[wire_record(1), wire_record(2)], [wire_record(3)], [wire_record(4)]]
    srv = catalog_server(pages, tokens=True)
    log = IngestLog()
    got = fetch_courses(cfg(srv.url), (2021, 2023), log=log)
    assert [c.id for c in got] == ["C0001", "C0002", "C0003", "C0004"]
    assert [p.records for p in log.pages] == [2, 1, 1]
    assert [q.get("page_token") for q, _ in srv.requests] == [None, "p1", "p2"]


def test_empty_catalog(catalog_server):
    srv = catalog_server([])
    assert fetch_courses(cfg(srv.url), (2021, 2023)) == []


def test_retry_after_two_server_errors(catalog_server):
    srv = catalog_server([[wire_record(1)]], failures={0: 2})
    log = IngestLog()
    got = fetch_courses(cfg(srv.url, max_retries=3), (2021, 2023), log=log)
    assert [c.id for c in got] == ["C0001"]
    assert log.pages[0].attempts == 3
    assert log.total_attempts == 3


def test_retries_exhausted(catalog_server):
    srv = catalog_server([[wire_record(1)]], failures={0: 5})
    with pytest.raises(NetworkError):
        fetch_courses(cfg(srv.url, max_retries=2), (2021, 2023))
    assert len(srv.requests) == 3


def test_client_error_not_retried(catalog_server):
    srv = catalog_server([], status=401)
    with pytest.raises(NetworkError):
        fetch_courses(cfg(srv.url, max_retries=3), (2021, 2023))
    assert len(srv.requests) == 1


def test_auth_header_sent(catalog_server):
    srv = catalog_server([[wire_record(1)]])
    fetch_courses(cfg(srv.url, auth_token="s3cret"), (2021, 2023))
    assert srv.requests[0][1] == "Bearer s3cret"


def test_concurrent_offset_paging_keeps_order(catalog_server):
    ids = list(range(1, 24))
    pages = [[wire_record(i) for i in ids[k:k + 3]] for k in range(0, len(ids), 3)]
    srv = catalog_server(pages, failures={2: 1, 4: 2})
    log = IngestLog()
    got = fetch_courses(cfg(srv.url, max_in_flight=4), (2021, 2023), log=log)
    assert [c.id for c in got] == [f"C{i:04d}" for i in ids]
    assert log.total_records == len(got)
    assert [p.index for p in log.pages] == list(range(len(pages)))


def test_year_filter_applied_client_side(catalog_server):
    srv = catalog_server([[wire_record(1, year=2019), wire_record(2, year=2022)]])
    got = fetch_courses(cfg(srv.url), (2021, 2023))
    assert [c.id for c in got] == ["C0002"]


def test_malformed_page_reports_index(catalog_server):
    srv = catalog_server([[wire_record(i) for i in (1, 2, 3)], [{"name": "no id"}]])
    with pytest.raises(MalformedPageError) as err:
        fetch_courses(cfg(srv.url, max_in_flight=1), (2021, 2023))
    assert err.value.page_index == 1


def test_parse_missing_objective_is_absent():
    body = json.dumps({"courses": [{"id": "A", "name": "n", "description": "d", "year": 2022}]})
    (rec,), token = parse_catalog_page(body.encode())
    assert rec.objective is None
    assert rec.description == "d"
    assert token is None


def test_parse_empty_string_stays_empty():
    body = json.dumps({"courses": [{"id": "A", "name": "n", "description": "", "objective": None,
                                    "year": 2022}]})
    (rec,), _ = parse_catalog_page(body.encode())
    assert rec.description == ""
    assert rec.objective is None


def test_parse_token_verbatim():
    body = json.dumps({"courses": [], "next_page_token": "abc==/+ 1"})
    assert parse_catalog_page(body.encode()) == ([], "abc==/+ 1")


@pytest.mark.parametrize("payload", [b'{"courses": [{"id": "A"', b"\xff\xfe", b"[]", b'{"x": 1}'])
def test_parse_malformed(payload):
    with pytest.raises(MalformedPageError):
        parse_catalog_page(payload)


def test_api_config_validation():
    with pytest.raises(ValueError):
        ApiConfig("http://x", page_size=0)
    with pytest.raises(ValueError):
        ApiConfig("http://x", max_retries=2, backoff_base=0)
    ApiConfig("http://x", max_retries=0, backoff_base=0)


def test_rawcourse_invariants():
    with pytest.raises(ValueError):
        RawCourse("", "n", "d", "o", 2022, "x")
    with pytest.raises(ValueError):
        RawCourse("a", "n", "d", "o", 22, "x")


opt_text = st.one_of(st.none(), st.text(max_size=40))
raw_courses = st.builds(
    RawCourse,
    id=st.text(min_size=1, max_size=8),
    name=st.text(max_size=20),
    description=opt_text,
    objective=opt_text,
    year=st.integers(1000, 9999),
    degree=st.text(max_size=10),
    source_language_hint=opt_text,
)


@given(st.lists(raw_courses, max_size=8, unique_by=lambda c: c.id))
def test_raw_store_round_trip(tmp_path_factory, courses):
    path = tmp_path_factory.mktemp("raw") / "raw.jsonl"
    write_raw_store(path, courses)
    back = read_raw_store(path)
    assert sorted(back, key=lambda c: (c.year, c.id)) == back
    assert set(back) == set(courses)


def test_rerun_is_byte_identical(catalog_server, tmp_path):
    pages = [[wire_record(i) for i in (4, 2, 8)], [wire_record(1, year=2021)]]
    srv = catalog_server(pages)
    for name in ("a.jsonl", "b.jsonl"):
        write_raw_store(tmp_path / name, fetch_courses(cfg(srv.url), (2021, 2023)))
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_local_catalog_transport(tmp_path):
    path = tmp_path / "cat.jsonl"
    path.write_text("\n".join(json.dumps(wire_record(i)) for i in range(7)) + "\n")
    got = fetch_courses(ApiConfig(path.as_uri(), page_size=3), (2021, 2023),
                        transport=LocalCatalogTransport(path))
    assert len(got) == 7
    with pytest.raises(FileNotFoundError):
        LocalCatalogTransport(tmp_path / "missing.jsonl")
