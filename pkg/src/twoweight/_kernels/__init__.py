"""Tree-scan kernels with backend selection.

The compiled Cython core is used when available; otherwise the numpy
level-sliced fallback. Both produce bit-identical results (same accumulation
order), so the choice only affects speed. ``BACKEND`` records which one loaded.

Batched variants (row-stacked inputs) are always numpy: vectorizing across rows
already amortizes the per-call overhead the compiled core exists to remove.
"""

try:
    from ._core import down_max, down_sum, up_sum

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - exercised when the ext is not built
    from ._fallback import down_max, down_sum, up_sum

    BACKEND = "fallback"

from ._fallback import down_sum_batch, up_sum_batch

__all__ = [
    "BACKEND",
    "down_max",
    "down_sum",
    "down_sum_batch",
    "up_sum",
    "up_sum_batch",
]
