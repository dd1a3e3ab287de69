"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The numba path is used when numba imports cleanly; set GGC_DISABLE_NUMBA=1
to force the numpy fallback. `BACKEND` records which path is active.
`benchmarks/bench_kernels.py` compares the two.
"""

import os

_DISABLED = os.environ.get("GGC_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

if not _DISABLED:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _numpy as _impl

        BACKEND = "numpy"
else:
    from . import _numpy as _impl

    BACKEND = "numpy"

h_gate = _impl.h_gate
rx_gate = _impl.rx_gate
rx_deriv_gate = _impl.rx_deriv_gate
rzz_gate = _impl.rzz_gate
rzz_deriv_gate = _impl.rzz_deriv_gate
z_expectation = _impl.z_expectation
edge_scatter = _impl.edge_scatter

__all__ = [
    "BACKEND",
    "h_gate",
    "rx_gate",
    "rx_deriv_gate",
    "rzz_gate",
    "rzz_deriv_gate",
    "z_expectation",
    "edge_scatter",
]
