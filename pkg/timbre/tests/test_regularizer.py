import math

import numpy as np
import pytest
import torch

from timbre.regularizer import (
    ClassBatch,
    class_representatives,
    distance_correlation,
    latent_neighbor_dist,
    reg_loss,
    target_neighbor_dist,
)
from timbre.tests import small_target


def points(*rows):
    return torch.tensor(rows, dtype=torch.float64)


class TestNeighborDistributions(object):
    def test_latent_rows(self):
        p = latent_neighbor_dist(points([0.0], [1.0], [2.0]))
        assert torch.allclose(p.sum(dim=1), torch.ones(3, dtype=torch.float64))
        assert torch.all(torch.diagonal(p) == 0)
        expected = math.exp(-1) / (math.exp(-1) + math.exp(-4))
        assert p[0, 1].item() == pytest.approx(expected)

    def test_coincident_points_give_uniform_rows(self):
        p = latent_neighbor_dist(torch.zeros(4, 2, dtype=torch.float64))
        off_diagonal = p[~torch.eye(4, dtype=torch.bool)]
        assert torch.allclose(off_diagonal, torch.full_like(off_diagonal, 1.0 / 3.0))

    def test_target_is_normalized_over_the_matrix(self):
        q = target_neighbor_dist(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]]))
        assert q.sum().item() == pytest.approx(1.0)
        assert torch.all(torch.diagonal(q) == 0)
        assert torch.allclose(q, q.T)
        # Student-t kernel: 1 / (1 + d^2).
        assert (q[0, 1] / q[0, 2]).item() == pytest.approx((1 / 2) / (1 / 10))

    def test_target_symmetric_norm(self):
        q = target_neighbor_dist(np.array([[0.0], [1.0], [5.0]]), symmetric_norm=True)
        assert torch.allclose(q.sum(dim=1), torch.ones(3, dtype=torch.float64))

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            latent_neighbor_dist(points([0.0]))
        with pytest.raises(ValueError):
            target_neighbor_dist(np.zeros((1, 3)))


class TestRegLoss(object):
    target = np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def test_positive(self):
        z = points([0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [3.0, 3.0])
        assert reg_loss(z, self.target).item() > 0
        assert reg_loss(z, self.target, symmetric_norm=True).item() >= 0

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            reg_loss(points([0.0], [1.0], [2.0]), self.target)

    def test_gradient(self):
        z = points([0.3, -0.1], [1.2, 0.4], [-0.5, 0.9], [0.0, -1.0]).requires_grad_(True)
        assert torch.autograd.gradcheck(lambda x: reg_loss(x, self.target), (z,))
        assert torch.autograd.gradcheck(
            lambda x: reg_loss(x, self.target, symmetric_norm=True), (z,)
        )

    def test_target_gets_no_gradient(self):
        z = points([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]).requires_grad_(True)
        t = torch.tensor(self.target, requires_grad=True)
        reg_loss(z, t).backward()
        assert t.grad is None
        assert z.grad is not None

    def test_coincident_points_have_finite_gradient(self):
        z = torch.zeros(4, 2, dtype=torch.float64, requires_grad=True)
        reg_loss(z, self.target).backward()
        assert torch.all(torch.isfinite(z.grad))

    def test_descent_aligns_latent_with_target(self):
        z = points([0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [3.0, 3.0]).requires_grad_(True)
        initial = reg_loss(z, self.target).item()
        optimizer = torch.optim.Adam([z], lr=0.05)
        for _ in range(300):
            optimizer.zero_grad()
            loss = reg_loss(z, self.target)
            loss.backward()
            optimizer.step()
        assert loss.item() < initial
        # Class 1 is the nearest neighbor of class 0 in the target.
        z = z.detach()
        assert torch.dist(z[0], z[1]) < torch.dist(z[0], z[2])


class TestClassRepresentatives(object):
    def test_means(self):
        latents = points([0.0, 0.0], [2.0, 2.0], [4.0, 0.0], [1.0, 1.0])
        z, classes = class_representatives(latents, ["B", "B", "A", None])
        assert classes == ["A", "B"]
        assert torch.equal(z, points([4.0, 0.0], [1.0, 1.0]))

    def test_explicit_classes(self):
        latents = points([0.0], [1.0], [2.0])
        z, classes = class_representatives(latents, ["A", "B", "C"], ["C", "X", "A"])
        assert classes == ["C", "A"]
        assert torch.equal(z, points([2.0], [0.0]))

    def test_nothing_present(self):
        z, classes = class_representatives(points([0.0, 1.0]), [None])
        assert classes == []
        assert z.shape == (0, 2)

    def test_label_count(self):
        with pytest.raises(ValueError):
            class_representatives(points([0.0], [1.0]), ["A"])


class TestClassBatch(object):
    def test_from_batch(self):
        latents = points([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [2.0, 0.0])
        batch = ClassBatch.from_batch(latents, ["A", "C", "D", "Kazoo", "C"], small_target())
        assert batch.classes == ["A", "C", "D"]
        assert len(batch) == 3
        assert batch.usable
        assert torch.equal(batch.z[1], torch.tensor([1.5, 0.0], dtype=torch.float64))
        np.testing.assert_array_equal(batch.targets[1], [1.0, 0.0, 0.0])
        assert torch.isfinite(batch.loss())

    def test_too_few_classes(self):
        batch = ClassBatch.from_batch(points([0.0, 0.0], [1.0, 0.0]), ["A", "B"], small_target())
        assert not batch.usable


class TestDistanceCorrelation(object):
    def test_scaled_copy(self):
        t = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
        assert distance_correlation(3.0 * t + 1.0, t) == pytest.approx(1.0)
        assert distance_correlation(torch.from_numpy(t), t) == pytest.approx(1.0)

    def test_undefined(self):
        assert math.isnan(distance_correlation(np.zeros((2, 2)), np.ones((2, 2))))
        assert math.isnan(distance_correlation(np.zeros((4, 2)), np.eye(4, 2)))


class TestHandComputed(object):
    def test_two_points(self):
        z = points([0.0, 0.0], [3.0, 4.0])
        expected = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=torch.float64)
        assert torch.allclose(latent_neighbor_dist(z), expected)
        q = target_neighbor_dist(np.array([[0.0], [2.0]]))
        assert torch.allclose(q, 0.5 * expected)
        # Each row puts all its mass where the target puts half.
        assert reg_loss(z, np.array([[0.0], [2.0]])).item() == pytest.approx(
            2 * math.log(2.0), abs=1e-9
        )

    def test_three_points(self):
        z = points([0.0], [1.0], [3.0])
        e1, e4, e9 = math.exp(-1.0), math.exp(-4.0), math.exp(-9.0)
        expected = torch.tensor(
            [
                [0.0, e1 / (e1 + e9), e9 / (e1 + e9)],
                [e1 / (e1 + e4), 0.0, e4 / (e1 + e4)],
                [e9 / (e9 + e4), e4 / (e9 + e4), 0.0],
            ],
            dtype=torch.float64,
        )
        assert torch.allclose(latent_neighbor_dist(z), expected, atol=1e-15)

        triangle = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])
        q = target_neighbor_dist(triangle)
        off_diagonal = q[~torch.eye(3, dtype=torch.bool)]
        assert torch.allclose(off_diagonal, torch.full_like(off_diagonal, 1.0 / 6.0))

        p = expected[~torch.eye(3, dtype=torch.bool)]
        by_hand = float((p * torch.log(p * 6.0)).sum())
        assert reg_loss(z, triangle).item() == pytest.approx(by_hand, abs=1e-9)


class TestRigidMotion(object):
    @pytest.mark.parametrize("symmetric_norm", [False, True])
    def test_invariant_under_rotation_and_translation(self, symmetric_norm):
        rng = np.random.default_rng(11)
        z = rng.standard_normal((6, 3))
        t = rng.standard_normal((6, 3))
        rotation, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        moved_z = z @ rotation + np.array([2.0, -1.0, 0.5])
        moved_t = t @ rotation.T - np.array([0.3, 4.0, 1.0])
        before = reg_loss(torch.from_numpy(z), t, symmetric_norm).item()
        after = reg_loss(torch.from_numpy(moved_z), moved_t, symmetric_norm).item()
        assert after == pytest.approx(before, abs=1e-9)
