"""
Training-dynamics measurements taken between optimizer steps.
"""
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

Arrays = Mapping[str, np.ndarray]


def _flatten(arrays: Arrays, names: list[str]) -> np.ndarray:
    return np.concatenate([np.asarray(arrays[n], dtype=np.float64).ravel() for n in names])


def cosine(a: Arrays | None, b: Arrays | None) -> float:
    """Cosine of the flattened maps over their shared names; 0 when either side is zero or missing."""
    if not a or not b:
        return 0.0
    names = sorted(set(a) & set(b))
    if not names:
        return 0.0
    va, vb = _flatten(a, names), _flatten(b, names)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(va @ vb / (na * nb))


def tensor_norms(arrays: Arrays) -> dict[str, float]:
    return {name: float(np.linalg.norm(np.asarray(v, dtype=np.float64))) for name, v in arrays.items()}


@dataclass(frozen=True)
class GradDiagnostics:
    grad_norms: dict[str, float]
    grad_cosine: float
    update_cosine: float
    distance_from_init: float
    extra: dict[str, float] = field(default_factory=dict)

    def head_ratio(self, head_prefix: str = "head.") -> float:
        """Largest head-layer grad norm over the median of every other tensor's."""
        head = [v for k, v in self.grad_norms.items() if k.startswith(head_prefix)]
        rest = [v for k, v in self.grad_norms.items() if not k.startswith(head_prefix)]
        if not head or not rest:
            return 0.0
        median = float(np.median(rest))
        return float("inf") if median == 0.0 else max(head) / median

    def as_metrics(self) -> dict[str, float]:
        out = {f"grad_norm/{name}": v for name, v in self.grad_norms.items()}
        out["grad_cosine"] = self.grad_cosine
        out["update_cosine"] = self.update_cosine
        out["distance_from_init"] = self.distance_from_init
        out.update(self.extra)
        return out


def grad_diagnostics(
    prev_grads: Arrays | None,
    grads: Arrays,
    prev_update: Arrays | None,
    update: Arrays | None,
    params: Arrays | None = None,
    init_params: Arrays | None = None,
) -> GradDiagnostics:
    distance = 0.0
    if params is not None and init_params is not None:
        names = sorted(params)
        distance = float(np.linalg.norm(_flatten(params, names) - _flatten(init_params, names)))
    return GradDiagnostics(
        grad_norms=tensor_norms(grads),
        grad_cosine=cosine(prev_grads, grads),
        update_cosine=cosine(prev_update, update),
        distance_from_init=distance,
    )
