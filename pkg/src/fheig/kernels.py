"""Kernel backend selection.

The compiled Cython core is preferred; the pure-numpy fallback is used
when the extension is absent or FHE_NO_EXT=1 is set.  Both expose the
same three functions and agree to rounding error (the benchmark in
``benchmarks/bench_kernels.py`` compares their speed).
"""

from __future__ import annotations

import os

if os.environ.get("FHE_NO_EXT") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

backend_name: str = _impl.BACKEND
pairwise_energy = _impl.pairwise_energy
pairwise_gradient = _impl.pairwise_gradient
picone_matrix = _impl.picone_matrix

__all__ = ["backend_name", "pairwise_energy", "pairwise_gradient", "picone_matrix"]
