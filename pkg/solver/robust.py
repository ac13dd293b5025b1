from dataclasses import dataclass

import numpy as np

CHI2_2DOF_95 = 5.991


@dataclass(frozen=True)
class HuberLoss:
    """Huber loss on residual norms: quadratic up to `delta`, linear beyond."""
    delta: float = float(np.sqrt(CHI2_2DOF_95))

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")

    def rho(self, norms: np.ndarray) -> np.ndarray:
        norms = np.abs(np.asarray(norms, dtype=float))
        return np.where(norms <= self.delta, 0.5 * norms ** 2, self.delta * (norms - 0.5 * self.delta))

    def cost(self, norms: np.ndarray) -> float:
        return float(np.sum(self.rho(norms)))

    def weights(self, norms: np.ndarray) -> np.ndarray:
        """IRLS weights w(r) = rho'(r) / r."""
        norms = np.abs(np.asarray(norms, dtype=float))
        return np.where(norms <= self.delta, 1.0, self.delta / np.maximum(norms, 1e-300))
