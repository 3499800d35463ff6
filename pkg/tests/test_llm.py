import json
import random

import pytest

from helpers import make_arch, make_stage
from tinynas import llm
from tinynas.estimator import ConstraintSet, GateVerdict, GateViolation
from tinynas.pareto import CandidateRecord, FrontStatistics
from tinynas.space import SearchSpace, sample_architecture, serialize_architecture


def stats(mean_macs, count=5):
    return FrontStatistics(
        count=count,
        accuracy_min=38.68,
        accuracy_max=68.58,
        accuracy_mean=60.50,
        macs_min=70 * 10**6,
        macs_max=340 * 10**6,
        macs_mean=mean_macs,
        params_min=40_000,
        params_max=730_000,
        params_mean=150_000,
    )


BEST = CandidateRecord(
    candidate_id="cand0007",
    arch_hash="f" * 64,
    accuracy=68.58,
    macs=86 * 10**6,
    params=440_000,
    peak_sram_bytes=165 * 1024,
)


class TestGenerationPrompt:
    def test_mentions_image_size_and_mac_budget(self, default_space):
        t = llm.build_generation_prompt(default_space, ConstraintSet())
        text = t.messages[1].content
        assert "160×160" in text
        assert "350M" in text
        assert t.messages[0].role == "system"
        assert "JSON" in t.messages[0].content

    def test_macs_max_substituted(self, default_space):
        limits = ConstraintSet(macs_max=200 * 10**6)
        text = llm.build_generation_prompt(default_space, limits).messages[1].content
        assert "200M" in text

    def test_embeds_exact_search_space_json(self, default_space):
        text = llm.build_generation_prompt(default_space, ConstraintSet()).messages[1].content
        expected = json.dumps(default_space.to_document(), separators=(",", ":"))
        assert expected in text

    def test_deterministic(self, default_space):
        a = llm.build_generation_prompt(default_space, ConstraintSet())
        b = llm.build_generation_prompt(default_space, ConstraintSet())
        assert a == b


class TestRejectionFeedback:
    def test_macs_high_carries_value_and_range(self):
        verdict = GateVerdict(
            accepted=False,
            violations=(
                GateViolation("macs_high", 400 * 10**6, 70 * 10**6, 350 * 10**6),
            ),
        )
        text = llm.build_rejection_feedback(verdict)
        assert "400" in text and "70" in text and "350" in text

    def test_sram_in_kb(self):
        verdict = GateVerdict(
            accepted=False,
            violations=(GateViolation("sram", 350 * 1024, None, 320 * 1024),),
        )
        text = llm.build_rejection_feedback(verdict)
        assert "350" in text and "320" in text and "KB" in text

    def test_every_violation_named(self):
        rng = random.Random(6)
        for _ in range(100):
            violations = []
            if rng.random() < 0.5:
                kind = rng.choice(["macs_low", "macs_high"])
                violations.append(
                    GateViolation(kind, rng.randrange(10**6, 10**9), 70 * 10**6, 350 * 10**6)
                )
            if rng.random() < 0.5 or not violations:
                violations.append(
                    GateViolation("sram", rng.randrange(10**5, 10**6) * 1024, None, 320 * 1024)
                )
            verdict = GateVerdict(accepted=False, violations=tuple(violations))
            text = llm.build_rejection_feedback(verdict)
            for v in violations:
                if v.kind.startswith("macs"):
                    assert f"{v.current / 1e6:g}M" in text
                    assert f"{v.bound_low / 1e6:g}M" in text
                    assert f"{v.bound_high / 1e6:g}M" in text
                else:
                    assert f"{v.current / 1024:g} KB" in text
                    assert f"{v.bound_high / 1024:g} KB" in text

    def test_accept_is_not_a_rejection(self):
        with pytest.raises(ValueError):
            llm.build_rejection_feedback(GateVerdict(accepted=True))

    def test_duplicate_feedback_asks_for_novelty(self):
        text = llm.build_duplicate_feedback("ab" * 32)
        assert "already explored" in text
        assert "novel" in text


class TestParetoFeedback:
    def test_high_mean_macs_suggests_cost_reduction(self):
        text = llm.build_pareto_feedback(stats(300 * 10**6), BEST, ConstraintSet())
        assert "reduce computational cost" in text

    def test_low_mean_macs_suggests_accuracy(self):
        text = llm.build_pareto_feedback(stats(100 * 10**6), BEST, ConstraintSet())
        assert "improving accuracy while maintaining resource efficiency" in text

    def test_min_max_avg_format(self):
        text = llm.build_pareto_feedback(stats(100 * 10**6), BEST, ConstraintSet())
        assert "[38.68, 68.58] 60.50" in text


class TestExplanationPrompt:
    def test_lists_all_six_categories(self, default_space, rng):
        arch = sample_architecture(default_space, rng)
        text = llm.build_explanation_prompt(arch).messages[1].content
        for heading in llm.EXPLANATION_HEADINGS:
            assert heading in text
        assert len(llm.EXPLANATION_HEADINGS) == 6

    def test_includes_candidate_json_verbatim(self, default_space, rng):
        arch = sample_architecture(default_space, rng)
        text = llm.build_explanation_prompt(arch).messages[1].content
        assert serialize_architecture(arch) in text

    def test_empty_architecture_rejected(self):
        with pytest.raises(ValueError):
            llm.build_explanation_prompt(make_arch())


class TestRequestCompletion:
    def decoding(self):
        return llm.DecodingParams(model_name="test-model")

    def transcript(self):
        return llm.ChatTranscript(
            (llm.ChatMessage("system", "s"), llm.ChatMessage("user", "u"))
        )

    def test_scripted_reply_returned(self):
        transport = llm.MockTransport(["hello"])
        out = llm.request_completion(
            "http://x", self.transcript(), self.decoding(), transport=transport
        )
        assert out == "hello"
        assert transport.calls == 1

    def test_two_failures_then_success(self):
        transport = llm.MockTransport(
            [{"error": "boom"}, {"error": "boom"}, "recovered"]
        )
        out = llm.request_completion(
            "http://x",
            self.transcript(),
            self.decoding(),
            transport=transport,
            retries=3,
            backoff=0.0,
        )
        assert out == "recovered"
        assert transport.calls == 3

    def test_retry_exhausted(self):
        transport = llm.MockTransport([{"error": "down"}] * 5)
        with pytest.raises(llm.RetryExhaustedError):
            llm.request_completion(
                "http://x",
                self.transcript(),
                self.decoding(),
                transport=transport,
                retries=1,
                backoff=0.0,
            )

    def test_default_decoding_parameters(self):
        params = llm.DecodingParams()
        assert params.temperature == 1.5
        assert params.min_p == 0.1

    def test_min_p_can_be_dropped(self):
        captured = {}

        class Spy:
            def send(self, endpoint, body):
                captured.update(body)
                return "ok"

        llm.request_completion(
            "http://x", self.transcript(), self.decoding(), transport=Spy(), send_min_p=False
        )
        assert "min_p" not in captured
        assert captured["temperature"] == 1.5

    def test_invalid_decoding_params(self):
        with pytest.raises(ValueError):
            llm.DecodingParams(temperature=0.0)
        with pytest.raises(ValueError):
            llm.DecodingParams(min_p=1.5)


class TestExtractCandidate:
    def valid_json(self, space, seed=0):
        arch = sample_architecture(space, random.Random(seed))
        return serialize_architecture(arch), arch

    def test_pure_json(self, default_space):
        raw, arch = self.valid_json(default_space)
        proposal = llm.extract_candidate(raw, default_space)
        assert proposal.extracted is not None
        assert proposal.extracted.stages == arch.stages

    def test_fenced_json_with_prose(self, default_space):
        raw, arch = self.valid_json(default_space)
        wrapped = f"Here is the design:\n```json\n{raw}\n```\nEnjoy!"
        proposal = llm.extract_candidate(wrapped, default_space)
        assert proposal.extracted is not None
        assert proposal.extracted.stages == arch.stages

    def test_out_of_space_kernel_reported(self, default_space):
        raw, _ = self.valid_json(default_space)
        doc = json.loads(raw)
        doc["stages"][0]["kernel"] = 9
        proposal = llm.extract_candidate(json.dumps(doc), default_space)
        assert proposal.extracted is None
        assert "kernel" in proposal.extraction_error

    def test_no_json_at_all(self, default_space):
        proposal = llm.extract_candidate("I refuse to answer.", default_space)
        assert proposal.extraction_error is not None

    def test_roundtrip_over_random_configs(self, default_space):
        rng = random.Random(88)
        for _ in range(100):
            arch = sample_architecture(default_space, rng)
            proposal = llm.extract_candidate(
                serialize_architecture(arch), default_space
            )
            assert proposal.extracted is not None
            assert proposal.extracted.stages == arch.stages

    def test_mock_transport_makes_no_network_calls(self, tmp_path, default_space):
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["reply"]), encoding="utf-8")
        transport = llm.MockTransport.from_file(str(script))
        out = llm.request_completion(
            "http://nonexistent.invalid",
            llm.ChatTranscript((llm.ChatMessage("system", "s"),)),
            llm.DecodingParams(),
            transport=transport,
        )
        assert out == "reply"
        # the scripted transport never touched the endpoint, only its cursor
        assert transport.calls == 1
