"""Cleaning rules that turn raw catalog records into clean English courses."""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources

from .errors import MissingFieldError

ENGLISH = "english"
FINNISH = "finnish"
UNKNOWN = "unknown"

_WORD = re.compile(r"[^\W\d_]+")
_SPACE = re.compile(r"\s+")


@lru_cache(maxsize=None)
def stopwords(language):
    name = {"english": "stopwords_en.txt", "finnish": "stopwords_fi.txt"}[language]
    text = resources.files("course_sdg").joinpath("data", name).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def detect_language(text):
    """Return ``"english"``, ``"finnish"`` or ``"unknown"`` by stopword hits.

    Ties (including zero hits on both sides) are ``"unknown"``.
    """
    en, fi = stopwords(ENGLISH), stopwords(FINNISH)
    en_hits = fi_hits = 0
    for word in _WORD.findall(text.lower()):
        en_hits += word in en
        fi_hits += word in fi
    if en_hits > fi_hits:
        return ENGLISH
    if fi_hits > en_hits:
        return FINNISH
    return UNKNOWN


@dataclass(frozen=True)
class FilterConfig:
    year_min: int = 2021
    year_max: int = 2023
    min_combined_chars: int = 500
    max_combined_chars: int = 2000
    required_language: str = ENGLISH

    def __post_init__(self):
        if self.year_min > self.year_max:
            raise ValueError("year_min must be <= year_max")
        if not (0 < self.min_combined_chars <= self.max_combined_chars):
            raise ValueError("need 0 < min_combined_chars <= max_combined_chars")


def render_combined_text(name, description, objective):
    return f"{name}, the student learns: {description} {objective}"


@dataclass(frozen=True)
class CleanCourse:
    id: str
    name: str
    description: str
    objective: str
    year: int
    degree: str
    combined_text: str

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=str(d["id"]),
            name=d["name"],
            description=d["description"],
            objective=d["objective"],
            year=int(d["year"]),
            degree=d.get("degree", ""),
            combined_text=d.get("combined_text")
            or render_combined_text(d["name"], d["description"], d["objective"]),
        )


DROP_RULES = ("missing_fields", "year", "length", "language", "duplicate")


@dataclass
class FilterStats:
    input: int = 0
    retained: int = 0
    dropped: dict = field(default_factory=lambda: {r: 0 for r in DROP_RULES})

    def check(self):
        assert self.retained + sum(self.dropped.values()) == self.input, self

    def to_dict(self):
        return {"input": self.input, "retained": self.retained, "dropped": dict(self.dropped)}


def _present(value):
    return value is not None and value != ""


def combined_length(course):
    """Characters in description plus objective; the name is not counted."""
    if not _present(course.description) or not _present(course.objective):
        raise MissingFieldError(f"course {course.id}: description or objective missing")
    # str length is a count of Unicode code points
    return len(course.description) + len(course.objective)


def _norm_ws(text):
    return _SPACE.sub(" ", text).strip()


def dedup_key(course):
    """Stable content hash, independent of year and id."""
    parts = (
        course.name.lower(),
        _norm_ws(course.description or ""),
        _norm_ws(course.objective or ""),
    )
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()


def clean(raw, config: FilterConfig | None = None):
    """Filter ``raw`` courses and return ``(clean_courses, stats)``.

    Rules run in a fixed order and each dropped course is charged to the first
    rule it fails: missing fields, year, length band, language, duplicate.
    Among duplicates the latest year wins (first seen on equal years).
    """
    config = config or FilterConfig()
    stats = FilterStats(input=len(raw))

    survivors = []
    for course in raw:
        if not _present(course.description) or not _present(course.objective):
            stats.dropped["missing_fields"] += 1
            continue
        if not (config.year_min <= course.year <= config.year_max):
            stats.dropped["year"] += 1
            continue
        n = combined_length(course)
        if not (config.min_combined_chars <= n <= config.max_combined_chars):
            stats.dropped["length"] += 1
            continue
        text = render_combined_text(course.name, course.description, course.objective)
        if detect_language(text) != config.required_language:
            stats.dropped["language"] += 1
            continue
        survivors.append((course, text))

    best = {}
    for pos, (course, text) in enumerate(survivors):
        key = dedup_key(course)
        if key not in best or course.year > best[key][1].year:
            best[key] = (pos, course, text)
    stats.dropped["duplicate"] = len(survivors) - len(best)

    out = [
        CleanCourse(c.id, c.name, c.description, c.objective, c.year, c.degree, text)
        for _, c, text in best.values()
    ]
    out.sort(key=lambda c: (c.degree, c.name, c.id))
    stats.retained = len(out)
    stats.check()
    return out, stats


def degree_distribution(courses, top_n=15):
    if top_n < 1:
        raise ValueError("top_n must be positive")
    counts = Counter(c.degree for c in courses)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_n]
