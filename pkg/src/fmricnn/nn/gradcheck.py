from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from .network import Network


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


@dataclass
class BlockReport:
    name: str
    checked: int = 0
    skipped_kinks: int = 0
    max_rel_error: float = 0.0


@dataclass
class GradCheckReport:
    tolerance: float
    blocks: list[BlockReport] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((b.max_rel_error for b in self.blocks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def lines(self) -> list[str]:
        out = [f"{b.name:<16} checked={b.checked:<5} kinks={b.skipped_kinks:<3} max_rel_err={b.max_rel_error:.3e}"
               for b in self.blocks]
        out.append(f"max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:.0e} "
                   f"{'PASS' if self.passed else 'FAIL'}")
        return out


def _same_pattern(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    net: Network,
    images: np.ndarray,
    labels: np.ndarray,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_per_block: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backprop gradients with central differences of the loss.

    Perturbations that flip any ReLU mask or pooling argmax are treated as
    straddling a kink and are skipped (counted in ``skipped_kinks``).
    Parameters are restored bit-exactly afterwards.
    """
    if not step > 0:
        raise UsageError(f"finite-difference step must be > 0, got {step}")
    net.loss_and_grad(images, labels)
    analytic = {name: g.copy() for name, _, g in net.parameters()}
    base_pattern = net.activation_pattern()
    rng = np.random.default_rng(seed)

    report = GradCheckReport(tolerance)
    for name, p, _ in net.parameters():
        block = BlockReport(name)
        flat = p.reshape(-1)
        picks = np.arange(flat.size)
        if max_per_block is not None and flat.size > max_per_block:
            picks = np.sort(rng.choice(flat.size, max_per_block, replace=False))
        a_flat = analytic[name].reshape(-1)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + step
            e_plus = net.loss(images, labels)
            kink = not _same_pattern(net.activation_pattern(), base_pattern)
            flat[i] = orig - step
            e_minus = net.loss(images, labels)
            kink = kink or not _same_pattern(net.activation_pattern(), base_pattern)
            flat[i] = orig
            if kink:
                block.skipped_kinks += 1
                continue
            numeric = (e_plus - e_minus) / (2 * step)
            block.checked += 1
            block.max_rel_error = max(block.max_rel_error, relative_error(a_flat[i], numeric))
        report.blocks.append(block)
    return report
