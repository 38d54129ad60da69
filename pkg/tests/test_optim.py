import numpy as np
import pytest

from app.optim import AdamState, adam_step
from core.errors import ContractError
from core.tensor import Tensor


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True, dtype=np.float64)
        w.grad = np.array([0.5, -4.0, 0.0])
        adam_step({"w": w}, AdamState(), lr=0.01)
        # bias-corrected first step is lr * sign(g) for non-zero gradients
        np.testing.assert_allclose(w.numpy(), [0.99, -1.99, 3.0], atol=1e-6)
        assert w.grad is None

    def test_matches_reference_over_steps(self, rng):
        w = Tensor(rng.standard_normal(4), requires_grad=True, dtype=np.float64)
        expected = w.numpy().copy()
        m = np.zeros(4)
        v = np.zeros(4)
        state = AdamState()
        for step in range(1, 6):
            grad = rng.standard_normal(4)
            w.grad = grad.copy()
            adam_step([("w", w)], state, lr=1e-3)
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad**2
            m_hat = m / (1 - 0.9**step)
            v_hat = v / (1 - 0.999**step)
            expected -= 1e-3 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(w.numpy(), expected, rtol=1e-12)
        assert state.step == 5

    def test_minimises_quadratic(self):
        w = Tensor(np.array([3.0, -2.0]), requires_grad=True, dtype=np.float64)
        state = AdamState()
        for _ in range(500):
            (w * w).sum().backward()
            adam_step({"w": w}, state, lr=0.05)
        assert np.abs(w.numpy()).max() < 0.05

    def test_missing_gradient(self):
        w = Tensor(np.zeros(2), requires_grad=True)
        with pytest.raises(ContractError):
            adam_step({"w": w}, AdamState(), lr=0.1)

    def test_keeps_parameter_dtype(self):
        w = Tensor(np.zeros(2, dtype=np.float32), requires_grad=True)
        w.grad = np.ones(2, dtype=np.float32)
        adam_step({"w": w}, AdamState(), lr=0.1)
        assert w.dtype == np.float32
