import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from facexplain import (
    DEFAULT_TEMPLATE,
    EndpointConfig,
    FixtureStore,
    PromptTemplate,
    ValidationError,
    contribution_table,
    generate_text,
    lint_explanation,
    render_prompt,
)
from facexplain.explanation import ContributionTable
from facexplain.llm_report import LlmError, build_report, format_percentage

from .worked_example import make_reference_explanation

GOLDEN = Path(__file__).parent / "golden"


# --- prompt rendering ---------------------------------------------------------


def test_prompt_contains_percentage_and_substituted_table():
    prompt = render_prompt(DEFAULT_TEMPLATE, make_reference_explanation())
    assert "64%" in prompt
    assert "[cosine_similarity_percentage]" not in prompt
    assert "[contributions_table]" not in prompt
    assert "'Lower area around the right eye': -0.0041" in prompt
    assert prompt == (GOLDEN / "reference_prompt.txt").read_text().rstrip("\n")


def test_prompt_toggle_divergence_isolated_to_trailing_instruction():
    full = render_prompt(DEFAULT_TEMPLATE, make_reference_explanation())
    short = render_prompt(PromptTemplate(no_long_explanation=False), make_reference_explanation())
    assert full == short + " No long explanation"
    assert short == (GOLDEN / "reference_prompt_no_trailing_instruction.txt").read_text().rstrip("\n")


def test_prompt_toggle_sign_example_and_percentage_hint():
    no_hint = render_prompt(PromptTemplate(percentage_hint=False), make_reference_explanation())
    assert "(a percentage from 0 to 100%)" not in no_hint
    no_sign = render_prompt(PromptTemplate(sign_example=False), make_reference_explanation())
    assert "(>=0)" not in no_sign and "example: -0.5" not in no_sign


def test_prompt_zero_value_rendered_with_positive_convention():
    table = ContributionTable(negative=(), positive=(("Chin", 0.0),))
    prompt = render_prompt(DEFAULT_TEMPLATE, table=table, s_ab=0.5)
    assert "Positive: 'Chin': 0.0000" in prompt


def test_prompt_empty_table_rejected():
    with pytest.raises(ValidationError, match="empty contribution table"):
        render_prompt(DEFAULT_TEMPLATE, table=ContributionTable((), ()), s_ab=0.5)


def test_prompt_missing_placeholder_rejected():
    class Broken(PromptTemplate):
        def text(self):
            return "no placeholders at all"

    with pytest.raises(ValidationError, match="missing"):
        render_prompt(Broken(), make_reference_explanation())


def test_prompt_rendering_is_pure():
    a = render_prompt(DEFAULT_TEMPLATE, make_reference_explanation())
    b = render_prompt(DEFAULT_TEMPLATE, make_reference_explanation())
    assert a == b


def test_percentage_formatting():
    assert format_percentage(0.64) == "64%"
    assert format_percentage(0.999) == "100%"
    assert format_percentage(0.0) == "0%"


# --- endpoint client ----------------------------------------------------------


class _Echo(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        content = body["messages"][0]["content"]
        out = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture()
def echo_server():
    server = HTTPServer(("127.0.0.1", 0), _Echo)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()


def test_echo_endpoint_roundtrip(echo_server):
    config = EndpointConfig(base_url=echo_server, model="echo")
    assert generate_text("explain this", config) == "explain this"


def test_unreachable_endpoint_errors_after_retries():
    config = EndpointConfig(base_url="http://127.0.0.1:9", model="x", timeout=0.2, retries=1)
    with pytest.raises(LlmError, match="after 2 attempts"):
        generate_text("hi", config)


def test_record_then_replay_byte_identical(echo_server, tmp_path):
    config = EndpointConfig(base_url=echo_server, model="echo")
    store = FixtureStore(tmp_path / "fixtures")
    live = generate_text("a specific prompt", config, fixtures=store, record=True)
    replay = generate_text("a specific prompt", config, offline=True, fixtures=store)
    assert replay == live


def test_offline_mode_never_touches_the_network(tmp_path, monkeypatch):
    store = FixtureStore(tmp_path / "fx")
    store.save("m", "prompt", {"choices": [{"message": {"content": "cached"}}]})

    def deny(*args, **kwargs):
        raise AssertionError("network access attempted in offline mode")

    monkeypatch.setattr(socket, "socket", deny)
    config = EndpointConfig(base_url="http://example.invalid/v1", model="m")
    assert generate_text("prompt", config, offline=True, fixtures=store) == "cached"
    with pytest.raises(Exception):
        generate_text("prompt", config)  # online path must hit the denied socket


def test_offline_without_fixture_is_explicit_error(tmp_path):
    config = EndpointConfig(base_url="http://example.invalid/v1", model="m")
    with pytest.raises(LlmError, match="no recorded fixture"):
        generate_text("prompt", config, offline=True, fixtures=FixtureStore(tmp_path))
    with pytest.raises(LlmError, match="fixture store"):
        generate_text("prompt", config, offline=True)


def test_empty_completion_is_error(tmp_path):
    store = FixtureStore(tmp_path)
    store.save("m", "p", {"choices": [{"message": {"content": ""}}]})
    config = EndpointConfig(base_url="http://example.invalid/v1", model="m")
    with pytest.raises(LlmError, match="empty completion"):
        generate_text("p", config, offline=True, fixtures=store)


# --- lint ---------------------------------------------------------------------


def test_lint_flags_similarity_claim_for_negative_region():
    expl = make_reference_explanation()
    text = (
        "It can be observed that while some areas such as the central area of the "
        "forehead have similarities between the two images, other areas like the "
        "lower area around the right eye show dissimilarities."
    )
    warnings = lint_explanation(text, expl)
    polarity = [w for w in warnings if w.kind == "polarity"]
    assert any(w.region == "Central area of the forehead" for w in polarity)
    assert not any(w.region == "Lower area around the right eye" for w in polarity)


def test_lint_flags_dissimilarity_claim_for_positive_region():
    expl = make_reference_explanation()
    warnings = lint_explanation("The right side of the nose is dissimilar.", expl)
    assert any(w.kind == "polarity" and w.region == "Right side of the nose" for w in warnings)


def test_lint_silent_on_canonical_restatement():
    expl = make_reference_explanation()
    table = contribution_table(expl)
    sentences = []
    for name, value in table.negative:
        sentences.append(f"'{name}' is dissimilar ({value:.4f}).")
    for name, value in table.positive:
        sentences.append(f"'{name}' is similar ({value:.4f}).")
    text = " ".join(sentences) + " The overall cosine similarity is 64%."
    assert lint_explanation(text, expl) == []


def test_lint_flags_invented_geometry():
    expl = make_reference_explanation()
    text = "There are differences in the distance between the left and right eye."
    warnings = lint_explanation(text, expl)
    assert any(w.kind == "invented-quantity" and "distance between" in w.message for w in warnings)


def test_lint_flags_numbers_absent_from_table():
    expl = make_reference_explanation()
    warnings = lint_explanation("The left eye scored 0.7312 in our analysis.", expl)
    assert any(w.kind == "invented-quantity" and "0.7312" in w.message for w in warnings)


def test_lint_never_fails_on_empty_text():
    assert lint_explanation("", make_reference_explanation()) == []


def test_lint_longest_name_wins_substring_collisions():
    expl = make_reference_explanation()
    # 'Right eye' is a substring of 'Lower area around the right eye'; the
    # longer region owns the span, so no warning may fire for 'Right eye'
    text = "'Lower area around the right eye' is dissimilar (-0.0041)."
    assert lint_explanation(text, expl) == []


# --- report bundle --------------------------------------------------------------


def test_report_roundtrip_and_markdown(tmp_path):
    expl = make_reference_explanation()
    prompt = render_prompt(DEFAULT_TEMPLATE, expl)
    report = build_report(
        expl, prompt=prompt, generated_at="2026-01-01T00:00:00Z",
        map_files=("a.png", "b.png"), llm_text="'Right eye' is dissimilar (-0.0039).",
        llm_model="echo",
    )
    assert report.percentage == "64%"
    payload = report.to_dict()
    assert payload["llm_model"] == "echo" and payload["lint"] == []
    md = report.to_markdown()
    assert "64%" in md and "## Explanation (echo)" in md and "![a.png](a.png)" in md


def test_report_lint_section_appears_for_contradictions():
    expl = make_reference_explanation()
    report = build_report(
        expl, prompt="p", generated_at="t",
        llm_text="The central area of the forehead is similar.", llm_model="m",
    )
    assert report.lint and "Consistency warnings" in report.to_markdown()
