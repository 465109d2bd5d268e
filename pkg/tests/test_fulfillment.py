import json
import threading

import pytest

from firmbot.dialog import Engine
from firmbot.errors import SinkUnavailable
from firmbot.fulfillment import (
    Fulfillment,
    LeadRecord,
    SinkConfig,
    render_email_body,
)


def lead(session="s1", service="CR", answers=None):
    if answers is None:
        answers = [("name", "Jon"), ("phone", "07423333333"), ("email", "jon@xyz.com")]
    return LeadRecord(
        session_id=session,
        service=service,
        answers=answers,
        created_at="2021-06-01T10:00:00+00:00",
    )


class TestLeadSinks:
    def test_file_sink_appends_one_json_line_per_lead(self, tmp_path):
        path = tmp_path / "leads.jsonl"
        sink = Fulfillment(SinkConfig(lead_sink="file", lead_path=path))
        sink.submit_lead(lead())
        sink.submit_lead(lead(session="s2"))
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first["session_id"] == "s1"
        assert first["service"] == "CR"
        assert [a["value"] for a in first["answers"]] == ["Jon", "07423333333", "jon@xyz.com"]
        assert first["created_at"] == "2021-06-01T10:00:00+00:00"

    def test_receipts_are_monotonic_even_for_identical_submits(self, tmp_path):
        sink = Fulfillment(SinkConfig(lead_sink="file", lead_path=tmp_path / "l.jsonl"))
        r1 = sink.submit_lead(lead())
        r2 = sink.submit_lead(lead())
        assert r1.sink_id == r2.sink_id == "file"
        assert r2.sequence == r1.sequence + 1

    def test_lead_without_answers_rejected(self, tmp_path):
        sink = Fulfillment(SinkConfig(lead_sink="file", lead_path=tmp_path / "l.jsonl"))
        with pytest.raises(ValueError):
            sink.submit_lead(lead(answers=[]))

    def test_file_sink_requires_path(self):
        with pytest.raises(ValueError):
            SinkConfig(lead_sink="file")

    def test_email_stub_writes_eml_with_slot_per_line(self, tmp_path):
        sink = Fulfillment(SinkConfig(lead_sink="smtp_stub", eml_dir=tmp_path / "outbox"))
        receipt = sink.submit_lead(lead())
        files = list((tmp_path / "outbox").glob("*.eml"))
        assert len(files) == 1
        content = files[0].read_text()
        assert "Subject: New enquiry: CR" in content
        for line in ["name: Jon", "phone: 07423333333", "email: jon@xyz.com"]:
            assert line in content
        assert receipt.sink_id == "smtp_stub"

    def test_body_lists_answers_in_elicitation_order(self):
        body = render_email_body(lead())
        name_pos = body.index("name: Jon")
        phone_pos = body.index("phone: 07423333333")
        email_pos = body.index("email: jon@xyz.com")
        assert name_pos < phone_pos < email_pos

    def test_unwritable_path_raises_sink_unavailable(self, tmp_path):
        missing_dir = tmp_path / "nope" / "leads.jsonl"
        sink = Fulfillment(SinkConfig(lead_sink="file", lead_path=missing_dir))
        with pytest.raises(SinkUnavailable):
            sink.submit_lead(lead())


class TestEngineRetryQueue:
    def test_engine_completes_conversation_and_queues_lead(self, manifest, responses, models, tmp_path):
        path = tmp_path / "missing" / "leads.jsonl"
        engine = Engine(
            manifest,
            responses,
            fulfillment=Fulfillment(SinkConfig(lead_sink="file", lead_path=path)),
            models=models,
        )
        state = engine.start_session()
        for text in ["I want someone to review my contract.", "Jon", "07423333333", "housing"]:
            _, response = engine.handle_turn(state, text)
        assert "Thanks for that." in response.messages[0]
        assert engine.pending_lead_count == 1
        path.parent.mkdir()
        assert engine.retry_pending_leads() == 0
        assert len(path.read_text().splitlines()) == 1


class TestTranscripts:
    def test_two_lines_per_exchange_in_turn_order(self, tmp_path, manifest, responses, models):
        path = tmp_path / "transcript.jsonl"
        engine = Engine(
            manifest,
            responses,
            fulfillment=Fulfillment(SinkConfig(lead_sink="stdout", transcript_path=path)),
            models=models,
        )
        state = engine.start_session()
        engine.handle_turn(state, "hello")
        engine.handle_turn(state, "Can I bring my partner to the appointment?")
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(lines) == 4
        assert [line["role"] for line in lines] == ["user", "bot", "user", "bot"]
        assert lines[0]["text"] == "hello"
        assert lines[1]["message_count"] == 1
        assert all(line["session"] == state.session_id for line in lines)

    def test_empty_user_text_logged_verbatim(self, tmp_path, manifest, responses, models):
        path = tmp_path / "transcript.jsonl"
        engine = Engine(
            manifest, responses,
            fulfillment=Fulfillment(SinkConfig(lead_sink="stdout", transcript_path=path)),
            models=models,
        )
        engine.handle_turn(engine.start_session(), "")
        first = json.loads(path.read_text().splitlines()[0])
        assert first["text"] == ""

    def test_interleaved_sessions_keep_per_session_order(self, tmp_path, manifest, responses, models):
        path = tmp_path / "transcript.jsonl"
        engine = Engine(
            manifest, responses,
            fulfillment=Fulfillment(SinkConfig(lead_sink="stdout", transcript_path=path)),
            models=models,
        )
        script = ["hello", "what are your prices", "NDA_prep", "goodbye"]

        def run_one():
            state = engine.start_session()
            for text in script:
                engine.handle_turn(state, text)
            return state.session_id

        threads = []
        results = []
        for _ in range(4):
            thread = threading.Thread(target=lambda: results.append(run_one()))
            threads.append(thread)
            thread.start()
        for thread in threads:
            thread.join()
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(lines) == 4 * 2 * len(script)
        for session_id in results:
            mine = [line for line in lines if line["session"] == session_id]
            assert [line["role"] for line in mine] == ["user", "bot"] * len(script)
            user_texts = [line["text"] for line in mine if line["role"] == "user"]
            assert user_texts == script
