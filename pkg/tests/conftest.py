import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from course_sdg.ingest import RawCourse
from course_sdg.labelgen import LabeledCourse, encode_labels
from course_sdg.preprocess import CleanCourse, render_combined_text


class CatalogServer:
    """Tiny catalog API.

    ``pages`` is a list of record lists. With ``tokens=True`` pages chain by
    ``next_page_token``; otherwise they are served by offset/limit.
    ``failures`` maps a page index to how many 500s to return first.
    """

    def __init__(self, pages, tokens=False, failures=None, status=None):
        self.pages = pages
        self.tokens = tokens
        self.failures = dict(failures or {})
        self.status = status
        self.requests = []
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_GET(self):
                q = {k: v[0] for k, v in parse_qs(urlparse(self.path).query).items()}
                with server.lock:
                    server.requests.append((q, self.headers.get("Authorization")))
                code, body = server.respond(q)
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, args=(0.02,), daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/courses"

    def respond(self, q):
        if self.status is not None:
            return self.status, b"{}"
        if self.tokens:
            index = int(q["page_token"][1:]) if "page_token" in q else 0
        else:
            index = int(q.get("offset", 0)) // int(q["limit"])
        with self.lock:
            if self.failures.get(index, 0) > 0:
                self.failures[index] -= 1
                return 500, b'{"error": "boom"}'
        records = self.pages[index] if index < len(self.pages) else []
        doc = {"courses": records}
        if self.tokens and index + 1 < len(self.pages):
            doc["next_page_token"] = f"p{index + 1}"
        return 200, json.dumps(doc).encode()

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def catalog_server():
    servers = []

    def make(pages, **kw):
        s = CatalogServer(pages, **kw).__enter__()
        servers.append(s)
        return s

    yield make
    for s in servers:
        s.__exit__()


def wire_record(i, year=2022, **kw):
    rec = {
        "id": f"C{i:04d}", "name": f"Course {i}", "description": "d" * 300,
        "objective": "o" * 300, "year": year, "degree": "Nursing", "language": "en",
    }
    rec.update(kw)
    return rec


ENGLISH_FILLER = (
    "The student learns how to apply the theory in practice and can work with other people "
    "in the team. "
)


def english_text(n):
    """English text of exactly ``n`` characters."""
    return (ENGLISH_FILLER * (n // len(ENGLISH_FILLER) + 1))[:n]


_DEFAULT = object()


def raw(cid="C1", name="Nursing Basics", description=_DEFAULT, objective=_DEFAULT, year=2022,
        degree="Nursing"):
    return RawCourse(
        cid, name,
        english_text(400) if description is _DEFAULT else description,
        english_text(200) if objective is _DEFAULT else objective,
        year, degree,
    )


def clean_course(cid="C1", name="Clinical Practice", description="Clinical Practice in nursing environment.",
                 objective="Students can apply clinical competence.", year=2022, degree="Nursing"):
    return CleanCourse(cid, name, description, objective, year, degree,
                       render_combined_text(name, description, objective))


def labeled(cid, goals, text=None):
    c = clean_course(cid=cid) if text is None else clean_course(cid=cid, description=text)
    return LabeledCourse(c, encode_labels(goals), "oracle")


@pytest.fixture(scope="session")
def synthetic_labeled():
    """The shipped synthetic catalog, cleaned and oracle-labelled (500 courses)."""
    from course_sdg.jsonl import read_jsonl
    from course_sdg.labelgen import KeywordOracle, generate_labels
    from course_sdg.pipeline import synthetic_catalog_path
    from course_sdg.preprocess import clean

    recs = [RawCourse.from_dict({**d, "source_language_hint": d.get("language")})
            for d in read_jsonl(synthetic_catalog_path())]
    courses, _ = clean(recs)
    return generate_labels(courses, KeywordOracle(), max_in_flight=1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
