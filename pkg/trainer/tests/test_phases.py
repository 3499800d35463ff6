import pytest

from trainer_helpers import SMOKE_ARCH
from tinynas_trainer.kd import alpha_sequence
from tinynas_trainer.phases import (
    PHASE_DEFAULTS,
    PhaseSpec,
    lr_for_epoch,
    run_phase,
    train_candidate,
)

SMOKE_DATASET = {
    "kind": "synthetic",
    "num_classes": 10,
    "train_size": 1500,
    "test_size": 400,
    "resolution": 32,
}


def smoke_request(phase="mini", epochs=5, seed=0, **hparams_extra):
    hparams = {"epochs": epochs, "dataset": SMOKE_DATASET}
    hparams.update(hparams_extra)
    return {
        "id": "cand0001",
        "arch": SMOKE_ARCH,
        "phase": phase,
        "seed": seed,
        "hparams": hparams,
    }


class TestPhaseSpec:
    def test_mini_defaults(self):
        spec = PhaseSpec.from_hparams("mini")
        assert spec.epochs == 30
        assert spec.batch_size == 128
        assert spec.lr_schedule["initial_lr"] == 0.5
        assert spec.lr_schedule["warmup_epochs"] == 10
        assert spec.optimizer == {"momentum": 0.9, "nesterov": True, "weight_decay": 1e-4}
        assert spec.augmentation["mixup_alpha"] == 0.0
        assert spec.kd is None

    def test_full_defaults(self):
        spec = PhaseSpec.from_hparams("full")
        assert spec.epochs == 120
        assert spec.lr_schedule["kind"] == "warmup_cosine"
        assert spec.lr_schedule["warmup_epochs"] == 20
        assert spec.augmentation["mixup_alpha"] == 0.2

    def test_kd_defaults(self):
        spec = PhaseSpec.from_hparams("kd")
        assert spec.epochs == 50
        assert spec.kd["temperature"] == 10.0
        assert (spec.kd["alpha0"], spec.kd["alpha_final"]) == (0.4, 0.8)
        assert spec.augmentation == {"autoaugment": False, "mixup_alpha": 0.0}

    def test_hparams_override(self):
        spec = PhaseSpec.from_hparams("mini", {"epochs": 5, "batch_size": 32})
        assert spec.epochs == 5
        assert spec.batch_size == 32

    def test_unknown_phase(self):
        with pytest.raises(ValueError):
            PhaseSpec.from_hparams("giant")


class TestLrSchedules:
    def test_step_warmup_and_decay(self):
        schedule = PHASE_DEFAULTS["mini"]["lr_schedule"]
        assert lr_for_epoch(schedule, 5, 30) == pytest.approx(0.25)
        assert lr_for_epoch(schedule, 10, 30) == pytest.approx(0.5)
        assert lr_for_epoch(schedule, 11, 30) == pytest.approx(0.5)
        assert lr_for_epoch(schedule, 21, 30) == pytest.approx(0.05)
        assert lr_for_epoch(schedule, 30, 30) == pytest.approx(0.05)

    def test_warmup_cosine(self):
        schedule = PHASE_DEFAULTS["full"]["lr_schedule"]
        assert lr_for_epoch(schedule, 1, 120) == pytest.approx(0.5 / 20)
        assert lr_for_epoch(schedule, 20, 120) == pytest.approx(0.5)
        assert lr_for_epoch(schedule, 70, 120) == pytest.approx(0.25)
        assert lr_for_epoch(schedule, 120, 120) == pytest.approx(0.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            lr_for_epoch({"kind": "sawtooth"}, 1, 10)


class TestDeskScaleRuns:
    def test_mini_smoke_beats_chance(self):
        response = run_phase(smoke_request())
        assert response["status"] == "ok"
        assert response["test_accuracy"] > 10.0
        assert response["wall_seconds"] > 0.0

    def test_mini_deterministic_under_fixed_seed(self):
        first = run_phase(smoke_request(epochs=2, seed=7))
        second = run_phase(smoke_request(epochs=2, seed=7))
        assert first["status"] == second["status"] == "ok"
        assert abs(first["test_accuracy"] - second["test_accuracy"]) < 1.0

    def test_kd_self_distillation_runs(self):
        spec = PhaseSpec.from_hparams(
            "kd",
            {
                "epochs": 2,
                "dataset": dict(SMOKE_DATASET, train_size=300, test_size=100),
                "kd": {"teacher": "self", "temperature": 10.0,
                       "alpha0": 0.4, "alpha_final": 0.8},
            },
        )
        outcome = train_candidate(SMOKE_ARCH, spec, seed=0)
        assert outcome.epochs_run == 2
        # the logged alpha trajectory follows the shared recurrence exactly
        assert outcome.alpha_trajectory == alpha_sequence(0.4, 0.8, 2)

    def test_lr_trajectory_logged(self):
        spec = PhaseSpec.from_hparams(
            "mini", {"epochs": 3, "dataset": dict(SMOKE_DATASET, train_size=200, test_size=50)}
        )
        outcome = train_candidate(SMOKE_ARCH, spec, seed=0)
        schedule = PHASE_DEFAULTS["mini"]["lr_schedule"]
        assert outcome.lr_trajectory == [lr_for_epoch(schedule, e, 3) for e in (1, 2, 3)]


class TestFailureReporting:
    def test_unknown_teacher_fails(self):
        response = run_phase(
            smoke_request(
                phase="kd",
                epochs=1,
                kd={"teacher": "resnet9000", "temperature": 10.0,
                    "alpha0": 0.4, "alpha_final": 0.8},
            )
        )
        assert response["status"] == "failed"
        assert "teacher" in response["reason"].lower()

    def test_invalid_architecture_fails(self):
        request = smoke_request()
        request["arch"] = {"stages": [{"out_channels": 16}]}
        response = run_phase(request)
        assert response["status"] == "failed"

    def test_missing_dataset_fails(self):
        request = smoke_request()
        request["hparams"]["dataset"] = {"kind": "cifar100", "root": "/nonexistent"}
        response = run_phase(request)
        assert response["status"] == "failed"

    def test_missing_fields_fail(self):
        response = run_phase({"id": "x"})
        assert response["status"] == "failed"
        assert response["id"] == "x"
