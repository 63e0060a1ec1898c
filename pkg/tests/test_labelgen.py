import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, settings, strategies as st

from course_sdg.errors import BackendError, EmptyLabelError, InvalidLabelError, UnknownCourseError
from course_sdg.labelgen import (
    CORRECTED, ORACLE, Correction, KeywordOracle, LabeledCourse, LiveBackend, LlmParams,
    apply_corrections, decode_labels, encode_labels, generate_labels, load_corrections,
    parse_sdg_response, render_prompt, validate_label_set,
)

from conftest import clean_course

CLINICAL_VECTOR = (0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0)


def digit_runs(text):
    """Character-scan oracle for maximal ASCII digit runs."""
    runs, cur = [], ""
    for ch in text:
        if "0" <= ch <= "9":
            cur += ch
        elif cur:
            runs.append(int(cur))
            cur = ""
    if cur:
        runs.append(int(cur))
    return runs


def test_llm_defaults():
    p = LlmParams()
    assert (p.temperature, p.token_limit) == (0.2, 500)
    with pytest.raises(ValueError):
        LlmParams(temperature=1.5)
    with pytest.raises(ValueError):
        LlmParams(token_limit=0)


def test_render_prompt_clinical_course():
    c = clean_course(name="Clinical Practice")
    prompt = render_prompt(c)
    assert prompt.startswith("Your goal is to identify UN SDG Goals relevant to students. ")
    assert "Given a Clinical Practice, the student learns: Clinical Practice in nursing environment." in prompt
    assert f"learns: {c.description} and {c.objective}. Answer the question:" in prompt
    assert prompt.endswith("Also, never use the goal number 4.")


def test_render_prompt_is_literal():
    c = clean_course(name="Data {Structures} {course content}", description="uses {x}")
    prompt = render_prompt(c)
    assert "Given a Data {Structures} {course content}, the student learns: uses {x} and" in prompt


@pytest.mark.parametrize("text, expected", [
    ("3, 5, 8", (3, 5, 8)),
    (" 8,3,3,4 ", (3, 8)),
    ("The most relevant goals are 7, 9 and 13.", (7, 9, 13)),
])
def test_parse_examples(text, expected):
    assert parse_sdg_response(text) == expected


def test_parse_oracle_agrees_on_prose_example():
    text = "The most relevant goals are 7, 9 and 13."
    runs = [g for g in digit_runs(text) if 1 <= g <= 17 and g != 4]
    assert tuple(sorted(set(runs))) == parse_sdg_response(text)


def test_parse_empty_raises():
    with pytest.raises(EmptyLabelError):
        parse_sdg_response("none apply")
    with pytest.raises(EmptyLabelError):
        parse_sdg_response("4, 18, 0, 400")


def test_parse_cap_keeps_first_mentioned():
    assert parse_sdg_response("17, 16, 15, 14, 13, 1, 2") == (13, 14, 15, 16, 17)
    assert parse_sdg_response("9 1 2", max_labels=2) == (1, 9)
    # maximal runs: "123" is one number, not 1, 2, 3
    with pytest.raises(EmptyLabelError):
        parse_sdg_response("123")


@settings(max_examples=300)
@given(st.one_of(st.text(), st.binary().map(lambda b: b.decode("utf-8", "replace"))))
def test_parse_fuzz(text):
    try:
        out = parse_sdg_response(text)
    except EmptyLabelError:
        assert not [g for g in digit_runs(text) if 1 <= g <= 17 and g != 4]
        return
    assert validate_label_set(out) == out
    expected = []
    for g in digit_runs(text):
        if 1 <= g <= 17 and g != 4 and g not in expected:
            expected.append(g)
    assert out == tuple(sorted(expected[:5]))


def test_encode_decode_examples():
    assert encode_labels((3, 5, 8)) == CLINICAL_VECTOR
    assert encode_labels(()) == (0,) * 17
    everything = tuple(g for g in range(1, 18) if g != 4)
    assert encode_labels(everything) == tuple(0 if i == 3 else 1 for i in range(17))
    assert decode_labels(CLINICAL_VECTOR) == (3, 5, 8)
    assert decode_labels((0,) * 17) == ()


@pytest.mark.parametrize("bad", [(0,), (18,), (4,), (True,), ("3",)])
def test_encode_rejects(bad):
    with pytest.raises(InvalidLabelError):
        encode_labels(bad)


def test_decode_rejects():
    with pytest.raises(InvalidLabelError):
        decode_labels((0,) * 16)
    with pytest.raises(InvalidLabelError):
        decode_labels(tuple(1 if i == 3 else 0 for i in range(17)))
    with pytest.raises(InvalidLabelError):
        decode_labels((2,) + (0,) * 16)


def test_validate_label_set():
    assert validate_label_set([8, 3]) == (3, 8)
    for bad in ([], [4], [3, 3], [0], [18]):
        with pytest.raises(InvalidLabelError):
            validate_label_set(bad)


def test_keyword_oracle_ranking_and_cap():
    table = {1: ["alpha"], 2: ["beta"], 3: ["gamma"], 5: ["delta"]}
    oracle = KeywordOracle(table, max_labels=2)
    # beta 2 hits, alpha and gamma 1 each: the tie goes to goal 1
    assert oracle.goals_for("beta beta gamma alpha") == [1, 2]
    assert oracle.goals_for("delta gamma") == [3, 5]
    assert oracle.goals_for("nothing here") == []
    with pytest.raises(ValueError):
        KeywordOracle({4: ["school"]})


def test_default_table_examples():
    oracle = KeywordOracle()
    assert oracle.goals_for("nursing and health care") == [3]
    assert oracle.goals_for("marine water systems") == [14]


def test_generate_labels_oracle_deterministic():
    courses = [
        clean_course("A", description="Nursing care for patients and health promotion."),
        clean_course("B", name="Solar", description="Solar energy and climate.", objective="Design."),
        clean_course("C", name="Ocean", description="Marine fisheries.", objective="Survey."),
    ]
    first = generate_labels(courses, KeywordOracle())
    second = generate_labels(courses, KeywordOracle())
    assert first == second
    assert [lc.id for lc in first] == ["A", "B", "C"]
    assert all(lc.provenance == ORACLE for lc in first)
    assert first[1].label_set == (7, 13)
    assert first[2].label_set == (14,)


class ScriptedBackend:
    provenance = "generated"

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, course, prompt, params):
        self.calls += 1
        return self.replies.pop(0)


def test_garbage_twice_then_valid():
    backend = ScriptedBackend(["sorry", "I cannot say", "3, 5, 8"])
    (lc,) = generate_labels([clean_course()], backend, max_in_flight=1)
    assert lc.labels == CLINICAL_VECTOR
    assert lc.attempts == 3 and not lc.needs_review
    assert lc.raw_response == "3, 5, 8"


def test_exhausted_attempts_route_to_review():
    backend = ScriptedBackend(["no", "nope", "never"])
    (lc,) = generate_labels([clean_course()], backend, max_attempts=3)
    assert lc.needs_review and lc.labels == (0,) * 17
    assert "nope" in lc.raw_response


def test_retry_pause_is_fixed(monkeypatch):
    pauses = []
    monkeypatch.setattr("course_sdg.labelgen.time.sleep", pauses.append)
    backend = ScriptedBackend(["?", "?", "?", "2"])
    (lc,) = generate_labels([clean_course()], backend, max_attempts=4, backoff=0.25)
    assert lc.label_set == (2,) and pauses == [0.25, 0.25, 0.25]


class SlowEcho:
    provenance = "generated"

    def complete(self, course, prompt, params):
        time.sleep(random.random() * 0.01)
        return course.id.split("-")[1]


def test_order_preserved_under_concurrency():
    courses = [clean_course(f"X-{1 + i % 16}-{i}") for i in range(40)]
    courses = [c for c in courses if not c.id.startswith("X-4-")]
    out = generate_labels(courses, SlowEcho(), max_in_flight=8)
    assert [lc.id for lc in out] == [c.id for c in courses]
    assert [lc.label_set for lc in out] == [(int(c.id.split("-")[1]),) for c in courses]


@pytest.fixture
def llm_server():
    state = {"replies": [], "bodies": [], "status": 200}

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *a):
            pass

        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            state["bodies"].append((body, self.headers.get("Authorization")))
            reply = state["replies"].pop(0) if state["replies"] else "3, 5, 8"
            data = json.dumps({"predictions": [{"content": reply}]}).encode()
            self.send_response(state["status"])
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    t = threading.Thread(target=httpd.serve_forever, args=(0.02,), daemon=True)
    t.start()
    state["url"] = f"http://127.0.0.1:{httpd.server_address[1]}/generate"
    yield state
    httpd.shutdown()
    httpd.server_close()


def test_live_backend_round_trip(llm_server):
    backend = LiveBackend(llm_server["url"], "predictions.0.content", auth_token="tok")
    (lc,) = generate_labels([clean_course()], backend, LlmParams())
    assert lc.labels == CLINICAL_VECTOR
    assert lc.provenance == "generated"
    body, auth = llm_server["bodies"][0]
    assert body["temperature"] == 0.2 and body["max_output_tokens"] == 500
    assert body["prompt"] == render_prompt(clean_course())
    assert auth == "Bearer tok"


def test_live_backend_auth_failure(llm_server):
    llm_server["status"] = 401
    backend = LiveBackend(llm_server["url"], "predictions.0.content")
    with pytest.raises(BackendError):
        generate_labels([clean_course()], backend)


def test_live_backend_bad_field_path_retries(llm_server):
    backend = LiveBackend(llm_server["url"], "choices.0.text")
    (lc,) = generate_labels([clean_course()], backend, max_attempts=2)
    assert lc.needs_review and lc.attempts == 2


def _two():
    return [
        LabeledCourse(clean_course("C1"), encode_labels((1, 2)), ORACLE),
        LabeledCourse(clean_course("C2"), encode_labels((5,)), ORACLE),
    ]


def test_apply_corrections():
    out = apply_corrections(_two(), [Correction("C1", (3, 8), "review:1")])
    assert out[0].labels == tuple(1 if i in (2, 7) else 0 for i in range(17))
    assert out[0].provenance == CORRECTED and out[0].correction_source == "review:1"
    assert out[1] == _two()[1]
    assert apply_corrections(_two(), []) == _two()


def test_apply_corrections_errors():
    with pytest.raises(InvalidLabelError):
        apply_corrections(_two(), [Correction("C1", (3, 4), "x")])
    with pytest.raises(UnknownCourseError) as err:
        apply_corrections(_two(), [Correction("C9", (3,), "x"), Correction("C7", (3,), "x")])
    assert err.value.ids == ["C7", "C9"]


def test_corrections_clear_review_flag(tmp_path):
    path = tmp_path / "fix.jsonl"
    path.write_text('{"course_id": "C2", "labels": [13, 7]}\n')
    pending = [LabeledCourse(clean_course("C2"), (0,) * 17, "generated", needs_review=True)]
    (lc,) = apply_corrections(pending, load_corrections(path))
    assert lc.label_set == (7, 13) and not lc.needs_review
    assert lc.correction_source == "fix.jsonl:1"


def test_labeled_course_round_trip():
    lc = LabeledCourse(clean_course("Q"), CLINICAL_VECTOR, CORRECTED, "3,5,8", "fix:2")
    d = lc.to_dict()
    assert d["labels"] == [3, 5, 8]
    assert LabeledCourse.from_dict(json.loads(json.dumps(d))) == lc
