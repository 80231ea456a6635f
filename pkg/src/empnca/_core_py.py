"""Pure-Python rollout kernel, used when the compiled extension is unavailable.

Must stay operation-for-operation identical to ``_core.pyx``.
"""
import math

import numpy as np

_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _forward(w, b, x):
    bits = [False] * 4
    for o in range(4):
        z = b[o]
        for i in range(10):
            z = z + w[o][i] * x[i]
        bits[o] = z > 0.0
    z = b[4]
    for i in range(10):
        z = z + w[4][i] * x[i]
    y = math.floor(256.0 * (1.0 / (1.0 + math.exp(-z))))
    return bits, min(max(y, 0), 255)


def rollout_kernel(weights, bias, alive0, signal0, n_steps, overwrite, synchronous):
    M = alive0.shape[0]
    w = np.asarray(weights, dtype=np.float64).tolist()
    b = np.asarray(bias, dtype=np.float64).tolist()
    alive_frames = [np.asarray(alive0, dtype=np.uint8).tolist()]
    signal_frames = [np.asarray(signal0, dtype=np.uint8).tolist()]
    actions = np.full((n_steps, M, M), -1, dtype=np.int16)
    sensors = np.full((n_steps, M, M), -1, dtype=np.int16)

    for n in range(1, n_steps + 1):
        prev_alive, prev_signal = alive_frames[-1], signal_frames[-1]
        cur_alive = [row[:] for row in prev_alive]
        cur_signal = [row[:] for row in prev_signal]
        if synchronous:
            src_alive, src_signal = prev_alive, prev_signal
        else:
            src_alive, src_signal = cur_alive, cur_signal
        act_n = actions[n - 1]
        sen_n = sensors[n - 1]
        for r in range(M):
            for c in range(M):
                if not src_alive[r][c]:
                    continue
                x = [0.0] * 10
                total = 0
                for d, (dr, dc) in enumerate(_DIRS):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < M and 0 <= cc < M:
                        x[d] = float(src_alive[rr][cc])
                        s = src_signal[rr][cc]
                    else:
                        s = 0
                    x[5 + d] = s / 255.0
                    total += s
                x[4] = 1.0
                s = src_signal[r][c]
                x[9] = s / 255.0
                total += s

                bits, a = _forward(w, b, x)
                act_n[r, c] = a
                sen_n[r, c] = (2 * total + 5) // 10
                cur_signal[r][c] = a
                for d, (dr, dc) in enumerate(_DIRS):
                    rr, cc = r + dr, c + dc
                    if not (0 <= rr < M and 0 <= cc < M):
                        continue
                    if bits[d]:
                        cur_alive[rr][cc] = 1
                        cur_signal[rr][cc] = a
                    elif overwrite:
                        cur_alive[rr][cc] = 0
                        cur_signal[rr][cc] = 0
        for r in range(M):
            for c in range(M):
                if not cur_alive[r][c]:
                    cur_signal[r][c] = 0
        alive_frames.append(cur_alive)
        signal_frames.append(cur_signal)

    alive = np.array(alive_frames, dtype=np.uint8)
    signal = np.array(signal_frames, dtype=np.uint8)
    return alive, signal, actions, sensors
