"""Catalog ingestion over a paginated REST API.

Wire format of the catalog endpoint (a stand-in: the real university API
schema is not public, so this is the contract the mock server and the local
file transport both speak):

    GET <base_url>?year_min=2021&year_max=2023&limit=50&offset=0
    GET <base_url>?year_min=2021&year_max=2023&limit=50&page_token=abc

    200 OK
    {"courses": [{"id": "...", "name": "...", "description": "...",
                  "objective": "...", "year": 2022, "degree": "...",
                  "language": "en"}, ...],
     "next_page_token": "abc"}          # optional

If the first page carries a ``next_page_token`` the client follows tokens
sequentially. Otherwise it falls back to offset/limit paging and stops at the
first page holding fewer than ``limit`` records; offset pages may be fetched
several at a time but are always reassembled in page order.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional
from urllib.parse import unquote, urlparse

from .errors import MalformedPageError, NetworkError
from .jsonl import dumps, read_jsonl

logger = logging.getLogger(__name__)

TOKEN_ENV = "SDG_API_TOKEN"


@dataclass(frozen=True)
class RawCourse:
    id: str
    name: str
    description: Optional[str]
    objective: Optional[str]
    year: int
    degree: str
    source_language_hint: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("course id must be non-empty")
        if not (1000 <= self.year <= 9999):
            raise ValueError(f"year must have four digits, got {self.year}")

    def to_dict(self):
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "objective": self.objective,
            "year": self.year,
            "degree": self.degree,
            "source_language_hint": self.source_language_hint,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=str(d["id"]),
            name=d.get("name") or "",
            description=d.get("description"),
            objective=d.get("objective"),
            year=int(d["year"]),
            degree=d.get("degree") or "",
            source_language_hint=d.get("source_language_hint"),
        )


@dataclass(frozen=True)
class ApiConfig:
    base_url: str
    page_size: int = 100
    max_retries: int = 3
    backoff_base: float = 0.5
    auth_token: Optional[str] = field(default=None, repr=False)
    max_in_flight: int = 4
    timeout: float = 30.0

    def __post_init__(self):
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_retries > 0 and self.backoff_base <= 0:
            raise ValueError("backoff_base must be > 0 when retries are enabled")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass
class PageLog:
    index: int
    attempts: int
    records: int


@dataclass
class IngestLog:
    pages: list = field(default_factory=list)

    @property
    def total_attempts(self):
        return sum(p.attempts for p in self.pages)

    @property
    def total_records(self):
        return sum(p.records for p in self.pages)

    def render(self):
        lines = [f"page={p.index} attempts={p.attempts} records={p.records}" for p in self.pages]
        lines.append(
            f"pages={len(self.pages)} attempts={self.total_attempts} records={self.total_records}"
        )
        return "\n".join(lines) + "\n"


class TransientHTTPError(Exception):
    def __init__(self, status):
        self.status = status
        super().__init__(f"HTTP {status}")


# A transport takes (url, params, headers) and returns (status, body bytes).
Transport = Callable[[str, dict, dict], "tuple[int, bytes]"]


def http_transport(timeout=30.0):
    import requests

    session = requests.Session()

    def get(url, params, headers):
        try:
            resp = session.get(url, params=params, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            raise ConnectionError(str(exc)) from exc
        return resp.status_code, resp.content

    return get


class LocalCatalogTransport:
    """Serve a JSONL catalog file with the same paging protocol as the API.

    Used for ``file://`` base URLs so that offline runs exercise the very same
    page parsing and pagination code as live ones.
    """

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(f"catalog file not found: {self.path}")
        self._records = read_jsonl(self.path)

    def __call__(self, url, params, headers):
        lo = int(params.get("year_min", 0))
        hi = int(params.get("year_max", 9999))
        rows = [r for r in self._records if lo <= int(r["year"]) <= hi]
        offset = int(params.get("offset", 0))
        limit = int(params["limit"])
        body = {"courses": rows[offset:offset + limit]}
        return 200, json.dumps(body).encode("utf-8")


def transport_for(config: ApiConfig):
    parsed = urlparse(config.base_url)
    if parsed.scheme == "file":
        return LocalCatalogTransport(unquote(parsed.path))
    if parsed.scheme in ("http", "https"):
        return http_transport(config.timeout)
    raise ValueError(f"unsupported catalog url scheme: {config.base_url!r}")


def _opt_text(value):
    # absent stays absent; an empty string is kept as an empty string
    if value is None:
        return None
    return str(value)


def parse_catalog_page(payload: bytes, page_index=None):
    """Decode one catalog page into ``(records, next_page_token)``."""
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedPageError(f"undecodable payload: {exc}", page_index) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("courses"), list):
        raise MalformedPageError("payload lacks a 'courses' list", page_index)

    records = []
    for i, item in enumerate(doc["courses"]):
        if not isinstance(item, dict):
            raise MalformedPageError(f"record {i} is not an object", page_index)
        try:
            records.append(RawCourse(
                id=str(item["id"]),
                name=str(item.get("name") or ""),
                description=_opt_text(item.get("description")),
                objective=_opt_text(item.get("objective")),
                year=int(item["year"]),
                degree=str(item.get("degree") or ""),
                source_language_hint=_opt_text(item.get("language")),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPageError(f"record {i}: {exc!r}", page_index) from None

    token = doc.get("next_page_token")
    if token is not None:
        token = str(token)
    return records, token


def _get_with_retry(transport, config, params, page_index):
    headers = {"Accept": "application/json"}
    if config.auth_token:
        headers["Authorization"] = f"Bearer {config.auth_token}"

    attempts = 0
    while True:
        attempts += 1
        try:
            status, body = transport(config.base_url, dict(params), headers)
            if status >= 500 or status == 429:
                raise TransientHTTPError(status)
            if status >= 400:
                raise NetworkError(f"page {page_index}: HTTP {status} (not retried)")
            return body, attempts
        except (TransientHTTPError, ConnectionError, TimeoutError, OSError) as exc:
            logger.warning("page %d attempt %d failed: %s", page_index, attempts, exc)
            if attempts > config.max_retries:
                raise NetworkError(
                    f"page {page_index}: giving up after {attempts} attempts ({exc})"
                ) from exc
            time.sleep(config.backoff_base * 2 ** (attempts - 1))


def fetch_courses(config: ApiConfig, years, transport=None, log: IngestLog | None = None):
    """Fetch every course whose year lies in the inclusive ``years`` range.

    Records come back in page order, then record order within a page.
    """
    year_min, year_max = years
    if year_min > year_max:
        raise ValueError(f"empty year range {year_min}..{year_max}")
    if transport is None:
        transport = transport_for(config)
    if log is None:
        log = IngestLog()

    base = {"year_min": year_min, "year_max": year_max, "limit": config.page_size}

    def fetch_page(index, extra):
        body, attempts = _get_with_retry(transport, config, {**base, **extra}, index)
        records, token = parse_catalog_page(body, index)
        return records, token, attempts

    def keep(records):
        return [r for r in records if year_min <= r.year <= year_max]

    out = []
    records, token, attempts = fetch_page(0, {"offset": 0})
    kept = keep(records)
    out.extend(kept)
    log.pages.append(PageLog(0, attempts, len(kept)))

    if token is not None:
        index = 0
        while token is not None:
            index += 1
            records, token, attempts = fetch_page(index, {"page_token": token})
            kept = keep(records)
            out.extend(kept)
            log.pages.append(PageLog(index, attempts, len(kept)))
        return out

    if len(records) < config.page_size:
        return out

    # offset paging: fetch windows of pages concurrently, consume in order
    next_index = 1
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        while True:
            window = range(next_index, next_index + config.max_in_flight)
            futures = [
                pool.submit(fetch_page, i, {"offset": i * config.page_size}) for i in window
            ]
            for i, fut in zip(window, futures):
                records, _, attempts = fut.result()
                kept = keep(records)
                out.extend(kept)
                log.pages.append(PageLog(i, attempts, len(kept)))
                if len(records) < config.page_size:
                    for rest in futures:
                        rest.cancel()
                    return out
            next_index += config.max_in_flight


def write_raw_store(path, courses):
    """Persist records as JSONL sorted by (year, id)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(courses, key=lambda c: (c.year, c.id))
    seen = set()
    for c in ordered:
        if c.id in seen:
            raise ValueError(f"duplicate course id in ingest output: {c.id}")
        seen.add(c.id)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in ordered:
            fh.write(dumps(c.to_dict()) + "\n")


def read_raw_store(path):
    return [RawCourse.from_dict(d) for d in read_jsonl(path)]
