# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-point averaging round kernel (see avg_py for semantics)."""

from libc.stdlib cimport free, malloc


cdef inline long long _rdiv(long long num, long long den) nogil:
    # nearest integer, ties away from zero; exact negation symmetry
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


def run_rounds(long long[::1] x, long long[::1] eu, long long[::1] ev,
               long long[::1] den, long long rounds):
    """Iterate synchronous averaging rounds in place on x; identical
    trajectories to the numpy fallback bit for bit."""
    cdef Py_ssize_t m = eu.shape[0]
    cdef Py_ssize_t e
    cdef long long r
    cdef long long* delta = <long long*> malloc(m * sizeof(long long))
    if delta == NULL and m > 0:
        raise MemoryError()
    try:
        with nogil:
            for r in range(rounds):
                for e in range(m):
                    delta[e] = _rdiv(x[ev[e]] - x[eu[e]], den[e])
                for e in range(m):
                    x[eu[e]] += delta[e]
                    x[ev[e]] -= delta[e]
    finally:
        free(delta)
    return None
