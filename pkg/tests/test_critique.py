"""
Tests for Critic Backends and the Self-Reflection Loop
"""

import json

import httpx
import numpy as np
import pytest

from config.config import CriticConfig
from core.articulation.skeleton import PoseFrame
from core.articulation.template import toy_avatar
from core.critique import (
    CritiqueRegion,
    CritiqueReport,
    HttpCritic,
    Label,
    PromptRole,
    ScriptedCritic,
    critique_views,
    filter_frames,
    make_critic,
    merge_regions,
    parse_regions,
    reflect_loop,
    regions_by_view,
    select_round,
)
from core.critique.agent import RoundRecord, parse_verdict
from core.critique.critic import extract_json
from core.errors import (
    CriticProtocolError,
    CriticTransportError,
    EmptyTrainingSetError,
    ParseError,
    PreconditionError,
)
from core.render.rasterizer import render
from core.training.reconstruction import Reconstruction
from core.training.trainer import Trainer
from core.training.views import TrainingView

BLURRY = {"regions": [{"box": [0, 0, 6, 6], "label": "blurry", "note": "arm"}]}


@pytest.fixture
def views(small_model, avatar_camera, render_cfg):
    truth = toy_avatar(small_model, seed=42)
    rest = PoseFrame.rest(truth.skeleton.n_joints)
    cloud, _ = truth.pose(rest)
    out = render(cloud, avatar_camera, settings=render_cfg)
    return [TrainingView(out.color, avatar_camera, out.alpha, rest, "front")]


@pytest.fixture
def trainer(small_avatar, views, fast_train_cfg, render_cfg):
    return Trainer(Reconstruction(human=small_avatar.copy()), views, fast_train_cfg, render_cfg)


class RecordingCritic:
    """Remembers the images it was shown and answers from a callable"""

    def __init__(self, answer):
        self.answer = answer
        self.images = []

    def query(self, image, role, view_id, round):
        self.images.append(image)
        return self.answer(role, view_id, round)


class TestParsing:
    """Critic document validation"""

    def test_regions_clipped(self):
        doc = {"regions": [{"box": [-3, 2, 50, 9], "label": "blurry"}]}
        regions = parse_regions(doc, 20, 10)
        assert regions == [CritiqueRegion((0, 2, 20, 9), Label.BLURRY, "")]

    def test_empty_is_full_frame_good(self):
        regions = parse_regions({"regions": []}, 16, 8)
        assert regions == [CritiqueRegion((0, 0, 16, 8), Label.WELL_RECONSTRUCTED)]

    def test_box_outside_dropped(self):
        regions = parse_regions({"regions": [{"box": [30, 30, 40, 40], "label": "other"}]}, 16, 8)
        assert regions[0].label is Label.WELL_RECONSTRUCTED

    @pytest.mark.parametrize(
        "doc",
        [
            {},
            {"regions": "none"},
            {"regions": [{"box": [0, 0, 1], "label": "blurry"}]},
            {"regions": [{"box": [0, 0, 1, 1], "label": "ugly"}]},
            {"regions": [{"box": ["a", 0, 1, 1], "label": "blurry"}]},
        ],
    )
    def test_invalid_documents(self, doc):
        with pytest.raises(CriticProtocolError):
            parse_regions(doc, 8, 8)

    def test_verdict(self):
        assert parse_verdict({"verdict": "discard", "note": "arm misaligned"}) == ("discard", "arm misaligned")
        with pytest.raises(CriticProtocolError):
            parse_verdict({"verdict": "maybe"})

    def test_extract_json_from_prose(self):
        assert extract_json('Sure! {"verdict": "keep"} Hope this helps.') == {"verdict": "keep"}
        with pytest.raises(CriticProtocolError):
            extract_json("no document here")

    def test_report_negatives(self):
        report = CritiqueReport(
            "v",
            [CritiqueRegion((0, 0, 2, 2), Label.WELL_RECONSTRUCTED), CritiqueRegion((1, 1, 3, 3), Label.GROUND_FUSION)],
        )
        assert not report.all_good
        assert [r.label for r in report.negatives] == [Label.GROUND_FUSION]

    def test_report_round_numbering(self):
        """Reflection rounds start at 1; round 0 only carries filter verdicts"""
        assert CritiqueReport("v", [], round=0, verdict="keep").round == 0
        with pytest.raises(PreconditionError):
            CritiqueReport("v", [], round=0)
        with pytest.raises(PreconditionError):
            CritiqueReport("v", [], round=-1, verdict="keep")

    def test_merge_keeps_only_negatives(self):
        reports = [
            CritiqueReport("a", [CritiqueRegion((0, 0, 2, 2), Label.WELL_RECONSTRUCTED)]),
            CritiqueReport("a", [CritiqueRegion((4, 4, 6, 6), Label.BLURRY)]),
            CritiqueReport("b", [CritiqueRegion((1, 1, 2, 2), Label.OTHER)]),
        ]
        assert merge_regions(reports).boxes == [(4, 4, 6, 6), (1, 1, 2, 2)]
        grouped = regions_by_view(reports)
        assert grouped["a"].boxes == [(4, 4, 6, 6)]
        assert grouped["b"].boxes == [(1, 1, 2, 2)]


class TestScriptedCritic:
    """Script-driven test double"""

    def test_first_match_wins(self):
        critic = ScriptedCritic([("2", "*", BLURRY), ("*", "*", {"regions": []}), ("*", "*", BLURRY)])
        image = np.zeros((4, 4, 3))
        assert critic.query(image, PromptRole.LOCALIZE, "x", 1) == {"regions": []}
        assert critic.query(image, PromptRole.LOCALIZE, "x", 2) == BLURRY
        assert critic.calls == [("localize", "x", 1), ("localize", "x", 2)]

    def test_unmatched_is_all_good(self):
        critic = ScriptedCritic()
        image = np.zeros((4, 4, 3))
        assert critic.query(image, PromptRole.FILTER, "x", 0) == {"verdict": "keep"}
        assert critic.query(image, PromptRole.LOCALIZE, "x", 3) == {"regions": []}

    def test_from_file(self, tmp_path):
        path = tmp_path / "critic.txt"
        path.write_text('# comment\n\n1 front {"regions": []}\n* * {"verdict": "discard"}\n')
        critic = ScriptedCritic.from_file(path)
        assert len(critic.entries) == 2
        assert critic.query(np.zeros((2, 2, 3)), PromptRole.FILTER, "front", 0)["verdict"] == "discard"

    @pytest.mark.parametrize("line", ["1 front", "x front {}", "1 front {not json"])
    def test_bad_lines(self, tmp_path, line):
        path = tmp_path / "critic.txt"
        path.write_text("\n" + line + "\n")
        with pytest.raises(ParseError) as exc:
            ScriptedCritic.from_file(path)
        assert exc.value.line == 2

    def test_make_critic_default(self):
        assert isinstance(make_critic(CriticConfig()), ScriptedCritic)


class TestHttpCritic:
    """Multipart wire protocol over a mock transport"""

    def test_round_trip(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            body = request.content
            seen["has_png"] = b"\x89PNG" in body
            seen["role"] = b'name="role"\r\n\r\nlocalize' in body
            return httpx.Response(200, text=json.dumps(BLURRY))

        critic = HttpCritic("http://critic.test/q", retries=0, transport=httpx.MockTransport(handler))
        assert critic.query(np.zeros((4, 4, 3)), PromptRole.LOCALIZE, "front", 1) == BLURRY
        assert seen == {"has_png": True, "role": True}
        critic.close()

    def test_server_error_is_transport(self):
        critic = HttpCritic(
            "http://critic.test/q", retries=0, transport=httpx.MockTransport(lambda r: httpx.Response(503))
        )
        with pytest.raises(CriticTransportError):
            critic.query(np.zeros((4, 4, 3)), PromptRole.LOCALIZE, "v", 1)

    def test_client_error_is_protocol(self):
        critic = HttpCritic(
            "http://critic.test/q", retries=2, transport=httpx.MockTransport(lambda r: httpx.Response(400, text="bad"))
        )
        with pytest.raises(CriticProtocolError):
            critic.query(np.zeros((4, 4, 3)), PromptRole.LOCALIZE, "v", 1)

    def test_connection_refused(self):
        def handler(request):
            raise httpx.ConnectError("refused", request=request)

        critic = HttpCritic("http://critic.test/q", retries=0, transport=httpx.MockTransport(handler))
        with pytest.raises(CriticTransportError):
            critic.query(np.zeros((4, 4, 3)), PromptRole.FILTER, "v", 0)


class TestCritiqueViews:
    def test_order_preserved_with_workers(self):
        critic = ScriptedCritic([("*", "b", BLURRY)])
        images = [np.zeros((8, 8, 3))] * 3
        reports = critique_views(critic, images, view_ids=["a", "b", "c"], max_workers=3)
        assert [r.view_id for r in reports] == ["a", "b", "c"]
        assert [len(r.negatives) for r in reports] == [0, 1, 0]

    def test_filter_frames(self):
        critic = RecordingCritic(
            lambda role, view_id, round: {"verdict": "discard" if view_id == "f1" else "keep", "note": ""}
        )
        frames = [(np.zeros((4, 5, 3)), np.ones((4, 5, 3)))] * 3
        assert filter_frames(critic, frames, ["f0", "f1", "f2"]) == [0, 2]
        assert critic.images[0].shape == (4, 10, 3)

    def test_filter_all_discarded(self):
        critic = ScriptedCritic([("0", "*", {"verdict": "discard"})])
        with pytest.raises(EmptyTrainingSetError):
            filter_frames(critic, [(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))])


class TestReflectLoop:
    """Multi-round self-reflection"""

    def test_all_good_stops_immediately(self, trainer):
        critic = ScriptedCritic()
        result = reflect_loop(trainer, critic)
        assert result.selected_round == 1
        assert len(result.rounds) == 1
        assert trainer.iteration == 0
        assert not result.degraded

    def test_never_good_keeps_earliest(self, trainer, small_avatar):
        """Equal defect counts resolve to the earliest round"""
        critic = ScriptedCritic([("*", "*", BLURRY)])
        result = reflect_loop(trainer, critic)
        assert [r.round for r in result.rounds] == [1, 2]
        assert result.selected_round == 1
        # no retraining after the last round
        assert trainer.iteration == trainer.cfg.critique_round_iterations
        np.testing.assert_array_equal(result.recon.human.canonical.sh, small_avatar.canonical.sh)

    def test_never_good_four_rounds(self, trainer, fast_train_cfg, small_avatar):
        """A critic that never approves runs every round and trains between them only"""
        cfg = fast_train_cfg.model_copy(update={"critique_max_rounds": 4})
        critic = ScriptedCritic([("*", "*", BLURRY)])
        result = reflect_loop(trainer, critic, cfg)

        assert [r.round for r in result.rounds] == [1, 2, 3, 4]
        assert len(critic.calls) == 4 * len(trainer.views)
        assert trainer.iteration == 3 * cfg.critique_round_iterations
        assert result.selected_round == 1
        assert not result.degraded
        np.testing.assert_array_equal(result.recon.human.canonical.sh, small_avatar.canonical.sh)

    def test_four_round_argmin(self, trainer, fast_train_cfg):
        """Fewest defects wins; the earlier of two equal rounds is kept"""
        cfg = fast_train_cfg.model_copy(update={"critique_max_rounds": 4})
        counts = {1: 3, 2: 1, 3: 1, 4: 2}
        critic = RecordingCritic(lambda role, view_id, round: {"regions": BLURRY["regions"] * counts[round]})
        result = reflect_loop(trainer, critic, cfg)

        assert [r.negatives for r in result.rounds] == [counts[i] * len(trainer.views) for i in range(1, 5)]
        assert result.selected_round == 2
        assert result.recon is result.rounds[1].recon

    def test_improvement_selected(self, trainer):
        two = {"regions": BLURRY["regions"] * 2}
        critic = ScriptedCritic([("1", "*", two), ("2", "*", BLURRY)])
        result = reflect_loop(trainer, critic)
        assert result.selected_round == 2
        assert [r.negatives for r in result.rounds] == [2, 1]
        assert result.rounds[0].train_report is not None

    def test_all_good_later_round(self, trainer, fast_train_cfg):
        cfg = fast_train_cfg.model_copy(update={"critique_max_rounds": 4})
        critic = ScriptedCritic([("1", "*", BLURRY), ("2", "*", BLURRY)])
        result = reflect_loop(trainer, critic, cfg)
        assert result.selected_round == 3
        assert len(result.rounds) == 3

    def test_unreachable_critic_degrades(self, trainer, small_avatar):
        def answer(role, view_id, round):
            raise CriticTransportError("down")

        result = reflect_loop(trainer, RecordingCritic(answer))
        assert result.degraded
        assert result.selected_round == 0
        np.testing.assert_array_equal(result.recon.human.canonical.positions, small_avatar.canonical.positions)

    def test_failure_mid_loop_keeps_best(self, trainer, fast_train_cfg):
        def answer(role, view_id, round):
            if round == 1:
                return BLURRY
            raise CriticTransportError("down")

        cfg = fast_train_cfg.model_copy(update={"critique_max_rounds": 3})
        result = reflect_loop(trainer, RecordingCritic(answer), cfg)
        assert result.degraded
        assert result.selected_round == 1

    def test_select_round_tie_break(self, small_avatar):
        recon = Reconstruction(human=small_avatar)
        bad = [CritiqueReport("v", [CritiqueRegion((0, 0, 1, 1), Label.BLURRY)])]
        rounds = [RoundRecord(1, bad, recon), RoundRecord(2, [], recon), RoundRecord(3, [], recon)]
        assert select_round(rounds).round == 2
