# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernel.

Mirrors ``empnca._core_py.rollout_kernel`` operation for operation; the two
must produce byte-identical arrays.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor

cnp.import_array()

cdef int[4] DR = [-1, 1, 0, 0]
cdef int[4] DC = [0, 0, -1, 1]


cdef inline int _forward(double[:, ::1] w, double[::1] b, double* x, int* bits) noexcept nogil:
    cdef int o, i
    cdef double z, y
    for o in range(5):
        z = b[o]
        for i in range(10):
            z = z + w[o, i] * x[i]
        if o < 4:
            bits[o] = z > 0.0
        else:
            y = floor(256.0 * (1.0 / (1.0 + exp(-z))))
            if y > 255.0:
                y = 255.0
            elif y < 0.0:
                y = 0.0
            return <int>y
    return 0


def rollout_kernel(
    double[:, ::1] weights,
    double[::1] bias,
    unsigned char[:, ::1] alive0,
    unsigned char[:, ::1] signal0,
    int n_steps,
    bint overwrite,
    bint synchronous,
):
    """Run ``n_steps`` raster passes from the given grid.

    Returns ``(alive, signal, actions, sensors)`` with shapes (N+1, M, M) for
    the grids and (N, M, M) for the per-step records, where -1 marks a cell
    that did not execute.
    """
    cdef Py_ssize_t M = alive0.shape[0]
    alive_np = np.zeros((n_steps + 1, M, M), dtype=np.uint8)
    signal_np = np.zeros((n_steps + 1, M, M), dtype=np.uint8)
    actions_np = np.full((n_steps, M, M), -1, dtype=np.int16)
    sensors_np = np.full((n_steps, M, M), -1, dtype=np.int16)
    cdef unsigned char[:, :, ::1] alive = alive_np
    cdef unsigned char[:, :, ::1] signal = signal_np
    cdef short[:, :, ::1] actions = actions_np
    cdef short[:, :, ::1] sensors = sensors_np

    alive[0, :, :] = alive0
    signal[0, :, :] = signal0

    cdef Py_ssize_t n, r, c, d, rr, cc, src
    cdef double x[10]
    cdef int bits[4]
    cdef int a, total, s
    cdef unsigned char al
    cdef unsigned char[:, ::1] ra
    cdef unsigned char[:, ::1] rs

    with nogil:
        for n in range(1, n_steps + 1):
            alive[n, :, :] = alive[n - 1, :, :]
            signal[n, :, :] = signal[n - 1, :, :]
            # reads come from the frame being written (in place) or the previous one
            src = n - 1 if synchronous else n
            for r in range(M):
                for c in range(M):
                    if not alive[src, r, c]:
                        continue
                    total = 0
                    for d in range(4):
                        rr = r + DR[d]
                        cc = c + DC[d]
                        if 0 <= rr < M and 0 <= cc < M:
                            x[d] = <double>alive[src, rr, cc]
                            s = signal[src, rr, cc]
                        else:
                            x[d] = 0.0
                            s = 0
                        x[5 + d] = s / 255.0
                        total = total + s
                    x[4] = 1.0
                    s = signal[src, r, c]
                    x[9] = s / 255.0
                    total = total + s

                    a = _forward(weights, bias, x, bits)
                    actions[n - 1, r, c] = a
                    sensors[n - 1, r, c] = (2 * total + 5) // 10
                    signal[n, r, c] = a
                    for d in range(4):
                        rr = r + DR[d]
                        cc = c + DC[d]
                        if rr < 0 or rr >= M or cc < 0 or cc >= M:
                            continue
                        if bits[d]:
                            alive[n, rr, cc] = 1
                            signal[n, rr, cc] = a
                        elif overwrite:
                            alive[n, rr, cc] = 0
                            signal[n, rr, cc] = 0
            for r in range(M):
                for c in range(M):
                    if not alive[n, r, c]:
                        signal[n, r, c] = 0

    return alive_np, signal_np, actions_np, sensors_np
