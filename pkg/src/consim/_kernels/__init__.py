"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The Cython extension is built by setup.py when a compiler is available;
otherwise the numpy implementation is selected at import time. Both compute
identical fixed-point trajectories bit for bit (see tests/test_kernels.py
and benchmarks/kernel_benchmark.py).
"""

from . import avg_py

try:
    from . import _avg_cy as _impl

    BACKEND = "cython"
except ImportError:  # extension not built
    _impl = avg_py
    BACKEND = "python"

run_rounds = _impl.run_rounds

__all__ = ["run_rounds", "BACKEND", "avg_py"]
