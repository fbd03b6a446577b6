"""Backend selection for the hot per-pixel kernels.

The compiled extension (``otdisp._kernels._ext``) accelerates the Dirac and
mixture Wasserstein loss batches and SAD cost-volume construction. It is
optional: when it cannot be imported, or when the environment variable
``OTDISP_NO_EXT`` is set to a non-empty value, the vectorized NumPy
implementations in :mod:`otdisp._kernels.fallback` are used instead. Both
paths implement identical semantics; ``benchmarks/bench_kernels.py``
compares their throughput.

The KL and smooth-L1 kernels are NumPy-only: they are elementwise reductions
that NumPy already fuses well.
"""

from __future__ import annotations

import os

from . import fallback
from .fallback import SIGN_TOL, kl_loss_batch, smooth_l1_mean_batch

__all__ = [
    "BACKEND",
    "HAVE_EXT",
    "SIGN_TOL",
    "dirac_loss_batch",
    "mm_w1_loss_batch",
    "kl_loss_batch",
    "smooth_l1_mean_batch",
    "sad_cost_volume",
]

def _load_ext():
    if os.environ.get("OTDISP_NO_EXT"):
        return None
    try:
        import otdisp._kernels._ext as ext
    except ImportError:
        return None
    return ext


_ext = _load_ext()
HAVE_EXT = _ext is not None
BACKEND = "ext" if HAVE_EXT else "fallback"

if HAVE_EXT:
    dirac_loss_batch = _ext.dirac_loss_batch
    mm_w1_loss_batch = _ext.mm_w1_loss_batch
    sad_cost_volume = _ext.sad_cost_volume
else:
    dirac_loss_batch = fallback.dirac_loss_batch
    mm_w1_loss_batch = fallback.mm_w1_loss_batch
    sad_cost_volume = fallback.sad_cost_volume
