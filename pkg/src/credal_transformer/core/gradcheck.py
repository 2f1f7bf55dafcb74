"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import TYPE_CHECKING

import numpy as np

from credal_transformer.core.tensor import Tensor, backward, no_grad
from credal_transformer.errors import ContractError

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

MIN_STEP = 1e-7
MAX_STEP = 1e-3
_DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class GradientComparison:
    """Analytic vs numeric gradient at the checked flat indices."""

    indices: NDArray[np.intp]
    analytic: NDArray[np.float64]
    numeric: NDArray[np.float64]

    @property
    def relative_error(self) -> NDArray[np.float64]:
        diff = np.abs(self.analytic - self.numeric)
        return diff / (np.abs(self.analytic) + np.abs(self.numeric) + _DENOMINATOR_FLOOR)

    @property
    def max_relative_error(self) -> float:
        if self.indices.size == 0:
            return 0.0
        return float(self.relative_error.max())


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / (|a| + |n| + 1e-12)."""
    return abs(analytic - numeric) / (abs(analytic) + abs(numeric) + _DENOMINATOR_FLOOR)


def compare_gradients(
    f: Callable[[Tensor], Tensor],
    x: Tensor | NDArray[np.floating],
    h: float = 1e-5,
    indices: Sequence[int] | NDArray[np.intp] | None = None,
) -> GradientComparison:
    """Compare the tape gradient of a scalar function with central differences.

    Args:
        f: Function mapping a tensor shaped like `x` to a scalar tensor
        x: Point of evaluation
        h: Finite-difference step, within [1e-7, 1e-3]
        indices: Flat indices of `x` to check (default: all)

    Returns:
        GradientComparison for the checked components

    Raises:
        ContractError: If `h` is outside its allowed range or `f` is not scalar
    """
    if not MIN_STEP <= h <= MAX_STEP:
        raise ContractError(f"finite-difference step {h} outside [{MIN_STEP}, {MAX_STEP}]")

    base = np.array(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    flat_idx = (
        np.arange(base.size) if indices is None else np.asarray(indices, dtype=np.intp)
    )

    leaf = Tensor(base, requires_grad=True)
    out = f(leaf)
    backward(out)
    grad = np.zeros_like(base) if leaf.grad is None else leaf.grad
    analytic = grad.reshape(-1)[flat_idx].astype(np.float64)

    numeric = np.empty(flat_idx.size, dtype=np.float64)
    perturbed = base.copy()
    flat_perturbed = perturbed.reshape(-1)
    with no_grad():
        for k, i in enumerate(flat_idx):
            original = flat_perturbed[i]
            flat_perturbed[i] = original + h
            f_plus = f(Tensor(perturbed)).item()
            flat_perturbed[i] = original - h
            f_minus = f(Tensor(perturbed)).item()
            flat_perturbed[i] = original
            numeric[k] = (f_plus - f_minus) / (2.0 * h)

    comparison = GradientComparison(indices=flat_idx, analytic=analytic, numeric=numeric)
    logger.debug(
        "Checked %d components, max relative error %.3e",
        flat_idx.size,
        comparison.max_relative_error,
    )
    return comparison


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor | NDArray[np.floating],
    h: float = 1e-5,
    indices: Sequence[int] | NDArray[np.intp] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Example:
        >>> finite_difference_check(lambda t: (t * t).sum(), np.array([1.0, 2.0, 3.0]))
        # < 1e-8
    """
    return compare_gradients(f, x, h, indices).max_relative_error
