import pytest
import torch
from click.testing import CliRunner

from tinynas_trainer import cli
from tinynas_trainer.kd import (
    alpha_sequence,
    alpha_step,
    combined_loss,
    kd_loss,
    softened_probs,
)


def f64(values):
    return torch.tensor(values, dtype=torch.float64)


class TestVectorParity:
    def test_softened_probs(self, kd_vectors):
        tol = kd_vectors["tolerance"]
        for case in kd_vectors["softened_probs"]:
            got = softened_probs(f64(case["logits"]), case["temperature"])
            for g, e in zip(got.tolist(), case["expected"]):
                assert abs(g - e) <= tol

    def test_kd_loss(self, kd_vectors):
        tol = kd_vectors["tolerance"]
        for case in kd_vectors["kd_loss"]:
            got = kd_loss(f64(case["teacher"]), f64(case["student"]), case["temperature"])
            assert abs(got.item() - case["expected"]) <= tol

    def test_combined_loss(self, kd_vectors):
        tol = kd_vectors["tolerance"]
        for case in kd_vectors["combined_loss"]:
            got = combined_loss(
                torch.tensor(case["ce"], dtype=torch.float64),
                torch.tensor(case["kd"], dtype=torch.float64),
                case["alpha"],
            )
            assert abs(got.item() - case["expected"]) <= tol

    def test_alpha_schedule_exact(self, kd_vectors):
        for case in kd_vectors["alpha_schedule"]:
            got = alpha_sequence(case["alpha0"], case["alpha_final"], case["num_epochs"])
            assert got == case["expected"]

    def test_check_vectors_command(self, tmp_path, kd_vectors):
        import json

        path = tmp_path / "vectors.json"
        path.write_text(json.dumps(kd_vectors), encoding="utf-8")
        out = CliRunner().invoke(cli.main, ["check-vectors", "--vectors", str(path)])
        assert out.exit_code == 0
        assert "all vectors match" in out.output


class TestKernels:
    def test_self_distillation_is_zero(self):
        z = f64([3.0, -1.0, 0.5])
        for t in (1.0, 2.0, 10.0):
            assert kd_loss(z, z.clone(), t).item() == 0.0

    def test_batched_per_sample(self):
        teacher = torch.randn(8, 10, dtype=torch.float64)
        student = teacher + 0.1 * torch.randn(8, 10, dtype=torch.float64)
        losses = kd_loss(teacher, student, 4.0)
        assert losses.shape == (8,)
        assert (losses >= 0).all()
        single = kd_loss(teacher[0], student[0], 4.0)
        assert torch.allclose(losses[0], single)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kd_loss(torch.zeros(3), torch.zeros(4), 1.0)

    def test_alpha_step_lands_exactly(self):
        assert alpha_step(0.1234, 0.8, 50, 50) == 0.8

    def test_alpha_out_of_range_epoch(self):
        with pytest.raises(ValueError):
            alpha_step(0.4, 0.8, 0, 50)

    def test_combined_loss_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            combined_loss(torch.tensor(1.0), torch.tensor(1.0), 1.2)

    def test_kd_loss_differentiable(self):
        student = torch.randn(4, 6, requires_grad=True)
        teacher = torch.randn(4, 6)
        kd_loss(teacher, student, 10.0).mean().backward()
        assert student.grad is not None
        assert torch.isfinite(student.grad).all()
