"""Shared helpers for running in-process rank groups inside tests."""

import threading

import numpy as np

from gradpipe.transport import InProcTransport


def run_ranks(p, fn, latency_s=0.0, byte_time_s=0.0, timeout_s=10.0):
    """Run fn(rank, endpoint) on p threads; re-raise the first failure."""
    transport = InProcTransport(p, latency_s, byte_time_s, timeout_s)
    results = [None] * p
    errors = []

    def runner(rank):
        try:
            results[rank] = fn(rank, transport.endpoint(rank))
        except BaseException as err:
            errors.append(err)

    threads = [threading.Thread(target=runner, args=(r,)) for r in range(p)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=120)
    if errors:
        raise errors[0]
    return results


def assert_sum_close(out, want, rtol=1e-6):
    """1e-6 relative with a magnitude-scaled absolute floor for zero crossings."""
    atol = rtol * max(1.0, float(np.abs(want).max()))
    np.testing.assert_allclose(out, want, rtol=rtol, atol=atol)
