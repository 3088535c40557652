"""Compiled selective-scan recurrences.

Inputs are already discretisation-ready: ``delta`` (T, d) step sizes, ``A`` (d, N) with
non-positive entries, ``B``/``C`` (T, N) input-dependent projections, ``D`` (d,) skip
weights. Outputs are written into the caller-allocated ``y`` (T, d) so that memory
accounting sees every large buffer.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def scan_sequential(x, delta, A, B, C, D, y):
    T, d = x.shape
    N = A.shape[1]
    h = np.zeros((d, N))
    for t in range(T):
        for c in range(d):
            dt = delta[t, c]
            xc = x[t, c]
            acc = 0.0
            for n in range(N):
                hn = math.exp(dt * A[c, n]) * h[c, n] + dt * B[t, n] * xc
                h[c, n] = hn
                acc += C[t, n] * hn
            y[t, c] = acc + D[c] * xc
    return h


@njit(cache=True)
def scan_chunked(x, delta, A, B, C, D, Q, y, local_end, chunk_decay, carry_in):
    """Three-pass chunked scan.

    1. every chunk runs the recurrence from a zero state (chunks are independent),
       recording its end state and total decay exp(A * sum(delta));
    2. a short scan over chunks turns those into the state entering each chunk;
    3. each chunk adds the decayed incoming state's contribution C_t . (prod Abar) h_in.

    ``local_end``, ``chunk_decay`` and ``carry_in`` are (n_chunks, d, N) scratch buffers.
    """
    T, d = x.shape
    N = A.shape[1]
    n_chunks = local_end.shape[0]

    for k in range(n_chunks):
        t0 = k * Q
        t1 = min(T, t0 + Q)
        h = np.zeros((d, N))
        cum = np.zeros(d)
        for t in range(t0, t1):
            for c in range(d):
                dt = delta[t, c]
                xc = x[t, c]
                cum[c] += dt
                acc = 0.0
                for n in range(N):
                    hn = math.exp(dt * A[c, n]) * h[c, n] + dt * B[t, n] * xc
                    h[c, n] = hn
                    acc += C[t, n] * hn
                y[t, c] = acc + D[c] * xc
        for c in range(d):
            for n in range(N):
                local_end[k, c, n] = h[c, n]
                chunk_decay[k, c, n] = math.exp(A[c, n] * cum[c])

    state = np.zeros((d, N))
    for k in range(n_chunks):
        for c in range(d):
            for n in range(N):
                carry_in[k, c, n] = state[c, n]
                state[c, n] = chunk_decay[k, c, n] * state[c, n] + local_end[k, c, n]

    for k in range(1, n_chunks):
        t0 = k * Q
        t1 = min(T, t0 + Q)
        r = np.ones((d, N))
        for t in range(t0, t1):
            for c in range(d):
                dt = delta[t, c]
                acc = 0.0
                for n in range(N):
                    r[c, n] *= math.exp(dt * A[c, n])
                    acc += C[t, n] * r[c, n] * carry_in[k, c, n]
                y[t, c] += acc
    return state
