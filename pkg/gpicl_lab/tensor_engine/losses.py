import numpy as np

from gpicl_lab.tensor_engine.tensor import Tensor


def cross_entropy_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """
    Mean over masked positions of -log softmax(logits)[target].

    logits: [B, T, C]; targets: class indices [B, T]; mask: 0/1 [B, T].
    An all-zero mask raises EmptyBatchError.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if mask is None:
        mask = np.ones(targets.shape, dtype=np.float64)
    return logits.graph.op("cross_entropy", logits, targets=targets, mask=np.asarray(mask))
