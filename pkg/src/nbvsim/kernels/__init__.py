"""Backend dispatch for the hot ray kernels.

The env var NBVSIM_KERNELS selects the implementation:

  auto  (default) numba if importable, else pure numpy
  numba           require numba, fail loudly if unavailable
  numpy           force the pure-numpy fallback

Both backends produce bit-identical outputs; numba is roughly an order
of magnitude faster on the traversal-heavy kernels (see
benchmarks/bench_kernels.py).
"""

import os

from . import numpy_impl

_choice = os.environ.get("NBVSIM_KERNELS", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"NBVSIM_KERNELS must be auto, numba or numpy, got {_choice!r}"
    )

_impl = None
if _choice in ("auto", "numba"):
    try:
        from . import numba_impl
    except ImportError:
        if _choice == "numba":
            raise RuntimeError(
                "NBVSIM_KERNELS=numba but numba is not importable"
            )
    else:
        _impl = numba_impl

if _impl is None:
    _impl = numpy_impl

BACKEND = "numpy" if _impl is numpy_impl else "numba"

render_depth = _impl.render_depth
hit_miss_counts = _impl.hit_miss_counts
trace_unknown_bits = _impl.trace_unknown_bits
count_unknown_voxels = _impl.count_unknown_voxels


def get_backend(name):
    """Return a specific backend module ("numba" or "numpy")."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl
        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")
