"""Test-session setup.

BLAS thread pools must be pinned before numpy first loads: the engine
runs whole clusters as threads in one process, and multi-threaded
kernels under 2p worker threads make every timing-sensitive test flaky.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
