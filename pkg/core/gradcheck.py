"""
Central finite-difference verification of analytic gradients.
"""

import logging
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError, NumericError
from core.tensor import Tensor

logger = logging.getLogger(__name__)

MIN_STEP = 1e-7
MAX_STEP = 1e-3

Coordinate = Tuple[str, Tuple[int, ...]]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def _evaluate(f: Callable[[], Tensor]) -> float:
    value = float(f().data.reshape(-1)[0])
    if not np.isfinite(value):
        raise NumericError(f"Non-finite function value {value} during finite differences")
    return value


def sample_coordinates(
    params: Mapping[str, Tensor], n_samples: int, rng: np.random.Generator
) -> List[Coordinate]:
    """Draw ``n_samples`` coordinates spread round-robin across every parameter."""
    names = list(params)
    coordinates = []
    for i in range(n_samples):
        name = names[i % len(names)]
        flat = int(rng.integers(params[name].size))
        coordinates.append((name, np.unravel_index(flat, params[name].shape)))
    return coordinates


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-6,
    coordinates: Optional[Sequence[Coordinate]] = None,
    n_samples: int = 20,
    seed: int = 0,
    analytic: Optional[Dict[str, np.ndarray]] = None,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``f`` recomputes the scalar loss from the current parameter values.
    Analytic gradients come from one ``backward()`` pass unless ``analytic``
    supplies them explicitly.
    """
    if not MIN_STEP <= step <= MAX_STEP:
        raise ConfigurationError(f"Finite-difference step {step} outside [{MIN_STEP}, {MAX_STEP}]")
    if not params:
        raise ConfigurationError("finite_diff_check needs at least one parameter")

    if analytic is None:
        for tensor in params.values():
            tensor.zero_grad()
        loss = f()
        if not np.all(np.isfinite(loss.data)):
            raise NumericError("Non-finite loss before finite differences")
        loss.backward()
        analytic = {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in params.items()
        }

    if coordinates is None:
        coordinates = sample_coordinates(params, n_samples, np.random.default_rng(seed))

    worst = 0.0
    for name, index in _as_list(coordinates):
        tensor = params[name]
        original = tensor.data[index]
        try:
            tensor.data[index] = original + step
            upper = _evaluate(f)
            tensor.data[index] = original - step
            lower = _evaluate(f)
        finally:
            tensor.data[index] = original
        numeric = (upper - lower) / (2.0 * step)
        error = relative_error(float(analytic[name][index]), numeric)
        if error > worst:
            logger.debug(
                f"{name}{tuple(index)}: analytic={analytic[name][index]} numeric={numeric}"
            )
            worst = error
    return worst


def _as_list(coordinates: Iterable[Coordinate]) -> List[Coordinate]:
    return [(name, tuple(int(i) for i in index)) for name, index in coordinates]
