"""Weak SDG labels: prompt rendering, response parsing, backends, corrections."""
from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol

from .errors import BackendError, EmptyLabelError, InvalidLabelError, UnknownCourseError
from .jsonl import read_jsonl
from .preprocess import CleanCourse

logger = logging.getLogger(__name__)

N_GOALS = 17
EXCLUDED_GOAL = 4  # Quality Education: applies to nearly every course
VALID_GOALS = tuple(g for g in range(1, N_GOALS + 1) if g != EXCLUDED_GOAL)
DEFAULT_MAX_LABELS = 5

GENERATED = "generated"
CORRECTED = "corrected"
ORACLE = "oracle"

PROMPT_TEMPLATE = (
    "Your goal is to identify UN SDG Goals relevant to students. "
    "Given a {course name}, the student learns: {course content} and {course objective}. "
    "Answer the question: What are the top few most relevant sustainable development goals "
    "to this course? Your task is to return only the numbers of the top few goals separated "
    "by commas. Also, never use the goal number 4."
)
_PLACEHOLDER = re.compile(r"\{course (?:name|content|objective)\}")
_INTEGER = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class LlmParams:
    temperature: float = 0.2
    token_limit: int = 500
    model_name: str = "text-bison-32k"

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 1.0):
            raise ValueError("temperature must lie in [0, 1]")
        if self.token_limit < 1:
            raise ValueError("token_limit must be positive")


def render_prompt(course):
    """Fill the labelling prompt for one course. Substitution is literal.

    ``course`` must have a non-empty name (guaranteed for CleanCourse).
    """
    values = {
        "{course name}": course.name,
        "{course content}": course.description,
        "{course objective}": course.objective,
    }
    # single pass, so braces inside course text are never re-expanded
    return _PLACEHOLDER.sub(lambda m: values[m.group(0)], PROMPT_TEMPLATE)


def validate_label_set(labels):
    """Return ``labels`` as a sorted tuple, raising on any invariant breach."""
    labels = list(labels)
    if not labels:
        raise InvalidLabelError("label set must not be empty")
    for g in labels:
        if isinstance(g, bool) or not isinstance(g, int):
            raise InvalidLabelError(f"goal {g!r} is not an integer")
        if g == EXCLUDED_GOAL:
            raise InvalidLabelError("goal 4 is never a valid label")
        if not 1 <= g <= N_GOALS:
            raise InvalidLabelError(f"goal {g} outside 1..{N_GOALS}")
    if len(set(labels)) != len(labels):
        raise InvalidLabelError(f"duplicate goals in {labels}")
    return tuple(sorted(labels))


def parse_sdg_response(text, max_labels=DEFAULT_MAX_LABELS):
    """Extract goal numbers from free model output.

    Every maximal run of digits is a candidate; out-of-range numbers and goal
    4 are discarded, and the first ``max_labels`` distinct survivors (in order
    of mention) are returned sorted.
    """
    seen = []
    for tok in _INTEGER.findall(text):
        g = int(tok)
        if 1 <= g <= N_GOALS and g != EXCLUDED_GOAL and g not in seen:
            seen.append(g)
    if not seen:
        raise EmptyLabelError(f"no valid goal in response {text[:80]!r}")
    return tuple(sorted(seen[:max_labels]))


def encode_labels(labels):
    vec = [0] * N_GOALS
    for g in labels:
        if isinstance(g, bool) or not isinstance(g, int) or not 1 <= g <= N_GOALS:
            raise InvalidLabelError(f"goal {g!r} outside 1..{N_GOALS}")
        if g == EXCLUDED_GOAL:
            raise InvalidLabelError("goal 4 is never a valid label")
        vec[g - 1] = 1
    return tuple(vec)


def decode_labels(vector):
    """Inverse of encode_labels. An all-zero vector decodes to ``()``."""
    if len(vector) != N_GOALS:
        raise InvalidLabelError(f"label vector must have {N_GOALS} slots, got {len(vector)}")
    out = []
    for i, bit in enumerate(vector):
        if bit not in (0, 1):
            raise InvalidLabelError(f"slot {i} holds {bit!r}, expected 0 or 1")
        if bit:
            if i == EXCLUDED_GOAL - 1:
                raise InvalidLabelError("goal 4 slot must be zero")
            out.append(i + 1)
    return tuple(out)


@dataclass(frozen=True)
class LabeledCourse:
    course: CleanCourse
    labels: tuple  # 17-slot binary vector
    provenance: str
    raw_response: Optional[str] = None
    correction_source: Optional[str] = None
    needs_review: bool = False
    attempts: int = 0

    @property
    def id(self):
        return self.course.id

    @property
    def label_set(self):
        return decode_labels(self.labels)

    def to_dict(self):
        d = self.course.to_dict()
        d.update(
            labels=list(self.label_set),
            label_vector=list(self.labels),
            provenance=self.provenance,
            raw_response=self.raw_response,
            correction_source=self.correction_source,
            needs_review=self.needs_review,
            attempts=self.attempts,
        )
        return d

    @classmethod
    def from_dict(cls, d):
        if "label_vector" in d:
            vec = tuple(int(b) for b in d["label_vector"])
            decode_labels(vec)
        else:
            vec = encode_labels(d.get("labels", []))
        return cls(
            course=CleanCourse.from_dict(d),
            labels=vec,
            provenance=d.get("provenance", GENERATED),
            raw_response=d.get("raw_response"),
            correction_source=d.get("correction_source"),
            needs_review=bool(d.get("needs_review", False)),
            attempts=int(d.get("attempts", 0)),
        )


class LabelBackend(Protocol):
    provenance: str

    def complete(self, course: CleanCourse, prompt: str, params: LlmParams) -> str:
        ...


@lru_cache(maxsize=None)
def default_keyword_table():
    text = resources.files("course_sdg").joinpath("data", "sdg_keywords.json").read_text("utf-8")
    return {int(g): tuple(terms) for g, terms in json.loads(text).items()}


_WORD = re.compile(r"[^\W\d_]+")


class KeywordOracle:
    """Offline, deterministic stand-in for the LLM.

    A goal is matched when any of its terms appears as a word in the course
    text; goals are ranked by total term occurrences (ties to the lower goal)
    and the top ``max_labels`` are answered as a comma separated list.
    """

    provenance = ORACLE

    def __init__(self, table=None, max_labels=DEFAULT_MAX_LABELS):
        table = default_keyword_table() if table is None else table
        if any(int(g) == EXCLUDED_GOAL for g in table):
            raise ValueError("keyword table must not map any term to goal 4")
        self.table = {int(g): tuple(t.lower() for t in terms) for g, terms in table.items()}
        self.max_labels = max_labels

    def goals_for(self, text):
        counts = {}
        words = _WORD.findall(text.lower())
        for g, terms in self.table.items():
            n = sum(words.count(t) for t in terms)
            if n:
                counts[g] = n
        ranked = sorted(counts, key=lambda g: (-counts[g], g))
        return sorted(ranked[: self.max_labels])

    def complete(self, course, prompt, params):
        goals = self.goals_for(course.combined_text)
        return ", ".join(map(str, goals)) if goals else "none"


def _dig(obj, path):
    for part in path.split("."):
        if isinstance(obj, list):
            obj = obj[int(part)]
        else:
            obj = obj[part]
    return obj


class TransientBackendError(Exception):
    pass


class LiveBackend:
    """HTTP completion backend: one POST per course.

    Request body: ``{"model", "prompt", "temperature", "max_output_tokens"}``.
    The completion text is looked up at ``response_field``, a dotted path
    (list indices allowed), e.g. ``predictions.0.content``.
    """

    provenance = GENERATED

    def __init__(self, endpoint, response_field="text", auth_token=None, timeout=60.0, session=None):
        import requests

        self.endpoint = endpoint
        self.response_field = response_field
        self.auth_token = auth_token
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete(self, course, prompt, params):
        import requests

        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        body = {
            "model": params.model_name,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_output_tokens": params.token_limit,
        }
        try:
            resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransientBackendError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise BackendError(f"backend rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 404:
            raise BackendError(f"backend endpoint not found: {self.endpoint}")
        if resp.status_code >= 400:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        try:
            return str(_dig(resp.json(), self.response_field))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransientBackendError(f"no text at {self.response_field!r}: {exc!r}") from exc


def _label_one(course, backend, params, max_labels, max_attempts, backoff):
    prompt = render_prompt(course)
    responses = []
    for attempt in range(1, max_attempts + 1):
        try:
            text = backend.complete(course, prompt, params)
        except TransientBackendError as exc:
            logger.warning("course %s attempt %d: %s", course.id, attempt, exc)
            responses.append(f"<error: {exc}>")
        else:
            responses.append(text)
            try:
                labels = parse_sdg_response(text, max_labels)
            except EmptyLabelError:
                logger.warning("course %s attempt %d: unparseable response", course.id, attempt)
            else:
                logger.info("course %s labelled after %d attempt(s)", course.id, attempt)
                return LabeledCourse(
                    course, encode_labels(labels), backend.provenance,
                    raw_response=text, attempts=attempt,
                )
        if backoff > 0 and attempt < max_attempts:
            time.sleep(backoff)
    logger.warning("course %s routed to review after %d attempts", course.id, max_attempts)
    return LabeledCourse(
        course, (0,) * N_GOALS, backend.provenance,
        raw_response="\n---\n".join(responses), needs_review=True, attempts=max_attempts,
    )


def generate_labels(
    courses,
    backend,
    params: LlmParams | None = None,
    max_labels=DEFAULT_MAX_LABELS,
    max_attempts=3,
    max_in_flight=4,
    backoff=0.0,
):
    """Label every course; output order always equals input order.

    Each course gets up to ``max_attempts`` requests with a fixed ``backoff``
    pause (seconds) between them. Courses whose responses never parse come
    back with ``needs_review`` set and an all-zero vector. BackendError aborts
    the whole run.
    """
    params = params or LlmParams()
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")

    def work(course):
        return _label_one(course, backend, params, max_labels, max_attempts, backoff)

    if max_in_flight <= 1:
        return [work(c) for c in courses]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(work, courses))


@dataclass(frozen=True)
class Correction:
    course_id: str
    labels: tuple
    source: str


def load_corrections(path):
    out = []
    for lineno, d in enumerate(read_jsonl(path), 1):
        labels = d.get("labels")
        if not isinstance(labels, list):
            raise InvalidLabelError(f"{path}:{lineno}: 'labels' must be a list")
        out.append(Correction(str(d["course_id"]), tuple(labels), d.get("source") or f"{Path(path).name}:{lineno}"))
    return out


def apply_corrections(labeled, corrections):
    """Replace labels for every course named in ``corrections``."""
    by_id = {}
    for corr in corrections:
        try:
            valid = validate_label_set(corr.labels)
        except InvalidLabelError as exc:
            raise InvalidLabelError(f"correction for {corr.course_id}: {exc}") from None
        by_id[corr.course_id] = (valid, corr.source)

    known = {lc.id for lc in labeled}
    unknown = sorted(set(by_id) - known)
    if unknown:
        raise UnknownCourseError(unknown)

    out = []
    for lc in labeled:
        if lc.id in by_id:
            labels, source = by_id[lc.id]
            lc = replace(
                lc, labels=encode_labels(labels), provenance=CORRECTED,
                correction_source=source, needs_review=False,
            )
        out.append(lc)
    return out
