import csv

import pytest

from firmbot.errors import FormatError, UnknownLabel
from firmbot.ingest import (
    CurationItem,
    extract_enquiries,
    load_curation,
    parse_enquiry,
    save_curation,
    split_by_baseline,
    write_split_outputs,
)

ENQUIRY = """\
Name: David Clark
Subject: drafting employment policies
Service: CR
Email: xyz279@abcd.com
Phone: +44123456

I own a telecommunication company and need help
with a supplier contract.
"""


class TestParseEnquiry:
    def test_body_extracted_and_metadata_dropped(self, tmp_path):
        path = tmp_path / "e1.txt"
        path.write_text(ENQUIRY, encoding="utf-8")
        record = parse_enquiry(path)
        assert record.service == "CR"
        assert record.message_body == (
            "I own a telecommunication company and need help with a supplier contract."
        )
        assert record.discarded_fields == 4  # Name, Subject, Email, Phone

    def test_missing_body_is_a_format_error(self, tmp_path):
        path = tmp_path / "e2.txt"
        path.write_text("Name: A\nService: CR\n\n   \n", encoding="utf-8")
        with pytest.raises(FormatError, match="body"):
            parse_enquiry(path)

    def test_missing_service_is_a_format_error(self, tmp_path):
        path = tmp_path / "e3.txt"
        path.write_text("Name: A\n\nsome body\n", encoding="utf-8")
        with pytest.raises(FormatError, match="Service"):
            parse_enquiry(path)

    def test_header_like_text_inside_body_is_preserved(self, tmp_path):
        path = tmp_path / "e4.txt"
        path.write_text(
            "Service: Wills\n\nPlease put Name: and Phone: fields on your form.\n",
            encoding="utf-8",
        )
        record = parse_enquiry(path)
        assert "Name: and Phone:" in record.message_body


class TestExtract:
    def test_groups_by_service(self, tmp_path):
        source = tmp_path / "in"
        source.mkdir()
        bodies = [("CR", "first cr"), ("CR", "second cr"), ("CR", "third cr"),
                  ("Wills", "first will"), ("Wills", "second will")]
        for i, (service, body) in enumerate(bodies):
            (source / f"e{i}.txt").write_text(f"Service: {service}\n\n{body}\n", encoding="utf-8")
        out = tmp_path / "out"
        records, errors = extract_enquiries(source, out)
        assert len(records) == 5 and not errors
        assert (out / "CR.txt").read_text().splitlines() == ["first cr", "second cr", "third cr"]
        assert (out / "Wills.txt").read_text().splitlines() == ["first will", "second will"]

    def test_malformed_file_skipped_and_reported(self, tmp_path):
        source = tmp_path / "in"
        source.mkdir()
        (source / "good.txt").write_text("Service: CR\n\nfine\n", encoding="utf-8")
        (source / "bad.txt").write_text("Service: CR\n\n\n", encoding="utf-8")
        out = tmp_path / "out"
        records, errors = extract_enquiries(source, out)
        assert len(records) == 1
        assert len(errors) == 1
        assert "bad.txt" in str(errors[0])

    def test_never_emits_empty_body_lines(self, tmp_path):
        source = tmp_path / "in"
        source.mkdir()
        (source / "a.txt").write_text("Service: CR\n\n  one\n\n  \n", encoding="utf-8")
        out = tmp_path / "out"
        extract_enquiries(source, out)
        assert all((out / "CR.txt").read_text().splitlines())


class TestCurationCsv:
    def test_round_trip(self, tmp_path):
        items = [
            CurationItem("how much is a will", "Cost", "kept", "regression"),
            CurationItem("i will keep an eye on my emails", None, "discarded_relevance", None),
            CurationItem("will validity", None, "discarded_clarity", None),
        ]
        path = tmp_path / "curation.csv"
        save_curation(items, path)
        assert load_curation(path) == items


def synthetic_batch(manifest):
    """Mirror the reported curation arithmetic: 258 collected = 20 discarded
    + 78 recognized (verbatim training rows) + 160 novel ones."""
    standard = [
        (intent.name, utterance)
        for bot in manifest.bots
        for intent in bot.intents
        if intent.kind == "standard"
        for utterance in intent.utterances
    ]
    assert len(standard) >= 78
    items = [CurationItem(utterance, label, "kept") for label, utterance in standard[:78]]
    items += [
        CurationItem(f"zorp mizzle quux number {i}", "Cost", "kept") for i in range(160)
    ]
    discard_verdicts = ["discarded_relevance", "discarded_appropriateness", "discarded_clarity"]
    items += [
        CurationItem(f"noise row {i}", None, discard_verdicts[i % 3]) for i in range(20)
    ]
    return items


class TestSplit:
    def test_conservation_matches_reported_arithmetic(self, manifest, models):
        items = synthetic_batch(manifest)
        assert len(items) == 258
        kept = [i for i in items if i.verdict == "kept"]
        training, regression = split_by_baseline(kept, manifest, models)
        discarded = [i for i in items if i.verdict.startswith("discarded")]
        assert len(discarded) == 20
        assert len(regression) == 78
        assert len(training) == 160
        assert len(items) == len(discarded) + len(regression) + len(training)
        assert all(i.destination == "regression" for i in regression)
        assert all(i.destination == "training" for i in training)

    def test_split_is_idempotent_on_regression_output(self, manifest, models):
        kept = [i for i in synthetic_batch(manifest) if i.verdict == "kept"]
        _, regression = split_by_baseline(kept, manifest, models)
        again = [CurationItem(i.utterance, i.label, "kept") for i in regression]
        training2, regression2 = split_by_baseline(again, manifest, models)
        assert not training2
        assert len(regression2) == len(regression)

    def test_verbatim_training_utterance_goes_to_regression(self, manifest, models):
        item = CurationItem("i want someone to review my contract.", "FF_CR", "kept")
        training, regression = split_by_baseline([item], manifest, models)
        assert regression == [item]
        assert item.destination == "regression"

    def test_unknown_label_rejected(self, manifest, models):
        with pytest.raises(UnknownLabel):
            split_by_baseline([CurationItem("hello", "NopeIntent", "kept")], manifest, models)

    def test_outputs_use_harness_regression_format(self, manifest, models, tmp_path):
        kept = [
            CurationItem("i want someone to review my contract.", "FF_CR", "kept"),
            CurationItem("zorp mizzle", "Cost", "kept"),
        ]
        training, regression = split_by_baseline(kept, manifest, models)
        training_path, regression_path = write_split_outputs(training, regression, manifest, tmp_path)
        with open(regression_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0] == {
            "index": "1",
            "utterance": "i want someone to review my contract.",
            "expected_bot": "child_ff",
            "expected_intent": "FF_CR",
        }
        with open(training_path, newline="") as fh:
            trows = list(csv.DictReader(fh))
        assert trows == [{"utterance": "zorp mizzle", "label": "Cost"}]
