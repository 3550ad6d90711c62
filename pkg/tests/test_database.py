"""
Unit Tests for the Run Ledger
"""

import pytest

from core.critique.agent import RoundRecord
from core.critique.critic import CritiqueRegion, CritiqueReport, Label
from core.data.database import CritiqueRegionRecord, CritiqueRound, Metric, Run, RunLedger
from core.training.reconstruction import Reconstruction


@pytest.fixture
def rounds(small_avatar):
    recon = Reconstruction(human=small_avatar)
    first = [
        CritiqueReport("front", [CritiqueRegion((0, 0, 4, 4), Label.BLURRY, "left hand")], round=1),
        CritiqueReport("side", [CritiqueRegion((0, 0, 8, 8), Label.WELL_RECONSTRUCTED)], round=1),
    ]
    second = [
        CritiqueReport("front", [CritiqueRegion((0, 0, 8, 8), Label.WELL_RECONSTRUCTED)], round=2),
        CritiqueReport("side", [CritiqueRegion((0, 0, 8, 8), Label.WELL_RECONSTRUCTED)], round=2),
    ]
    return [RoundRecord(1, first, recon), RoundRecord(2, second, recon)]


class TestRunLedger:
    """Test suite for the run ledger"""

    def test_run_created(self, db_session):
        """Starting a ledger commits a running Run row"""
        ledger = RunLedger(db_session, "reconstruct", seed=3, config_hash="f00d", arguments={"out": "x.hgsc"})

        run = db_session.query(Run).one()
        assert run.id == ledger.run.id
        assert run.status == "running"
        assert run.started_at is not None
        assert run.arguments == {"out": "x.hgsc"}

    def test_finish(self, db_session):
        ledger = RunLedger(db_session, "enhance", seed=0, config_hash="f00d")
        ledger.finish("failed")

        run = db_session.query(Run).one()
        assert run.status == "failed"
        assert run.finished_at is not None

    def test_record_rounds(self, db_session, rounds):
        """Every report becomes a row; the selected round is flagged"""
        ledger = RunLedger(db_session, "reconstruct", seed=0, config_hash="f00d")
        ledger.record_rounds(rounds, selected_round=2)

        rows = db_session.query(CritiqueRound).order_by(CritiqueRound.round, CritiqueRound.view_id).all()
        assert [(r.round, r.view_id, r.negative_count) for r in rows] == [
            (1, "front", 1),
            (1, "side", 0),
            (2, "front", 0),
            (2, "side", 0),
        ]
        assert [r.selected for r in rows] == [False, False, True, True]

        blurry = db_session.query(CritiqueRegionRecord).filter_by(label="blurry").one()
        assert (blurry.x0, blurry.y0, blurry.x1, blurry.y1) == (0, 0, 4, 4)
        assert blurry.note == "left hand"
        assert blurry.critique_round.view_id == "front"

    def test_record_metrics_skips_non_numeric(self, db_session):
        ledger = RunLedger(db_session, "evaluate", seed=0, config_hash="f00d")
        ledger.record_metrics({"psnr": 24.5, "ssim": 0.91, "note": "text", "flag": True}, view_id="front")

        metrics = {m.name: m for m in db_session.query(Metric).all()}
        assert set(metrics) == {"psnr", "ssim"}
        assert metrics["psnr"].value == pytest.approx(24.5)
        assert metrics["psnr"].view_id == "front"

    def test_cascade_delete(self, db_session, rounds):
        """Deleting a run removes its rounds, regions and metrics"""
        ledger = RunLedger(db_session, "reconstruct", seed=0, config_hash="f00d")
        ledger.record_rounds(rounds, selected_round=1)
        ledger.record_metrics({"psnr": 20.0})

        db_session.delete(ledger.run)
        db_session.commit()

        assert db_session.query(CritiqueRound).count() == 0
        assert db_session.query(CritiqueRegionRecord).count() == 0
        assert db_session.query(Metric).count() == 0
