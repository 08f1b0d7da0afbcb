"""Pure numpy LSTM recurrence kernels (fallback for ``_lstm_ext``).

Shapes: ``T`` time steps, ``B`` sequences, ``H`` hidden units. Gate columns
are ordered ``[input | forget | cell | output]``. Row ``b`` only advances
while ``t < lengths[b]``; afterwards its state is carried unchanged, so the
last slice of ``hs`` holds every sequence's final hidden state.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(xw, u, lengths):
    """Run the recurrence given precomputed input projections.

    ``xw`` is ``[T, B, 4H]`` (input times W plus bias). Returns
    ``(hs, cs, gates)`` where ``hs`` and ``cs`` are ``[T+1, B, H]`` with the
    zero initial state at index 0 and ``gates`` holds post-activation gates.
    """
    T, B, H4 = xw.shape
    H = H4 // 4
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.zeros((T, B, H4))
    lengths = np.asarray(lengths)
    for t in range(T):
        z = xw[t] + hs[t] @ u
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * cs[t] + i * g
        h = o * np.tanh(c)
        live = (t < lengths)[:, None]
        cs[t + 1] = np.where(live, c, cs[t])
        hs[t + 1] = np.where(live, h, hs[t])
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g
        gates[t, :, 3 * H:] = o
        gates[t] *= live
    return hs, cs, gates


def lstm_backward(dh_final, hs, cs, gates, u, lengths):
    """Backpropagate a gradient on the final hidden state.

    Returns ``(dz, du)``: pre-activation gate gradients ``[T, B, 4H]`` and
    the recurrent-weight gradient ``[H, 4H]``.
    """
    T, B, H4 = gates.shape
    H = H4 // 4
    lengths = np.asarray(lengths)
    dz = np.zeros((T, B, H4))
    dh = np.array(dh_final, dtype=np.float64, copy=True)
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        live = (t < lengths)[:, None]
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dct = dc + dh * o * (1.0 - tc * tc)
        step = np.empty((B, H4))
        step[:, :H] = dct * g * i * (1.0 - i)
        step[:, H:2 * H] = dct * cs[t] * f * (1.0 - f)
        step[:, 2 * H:3 * H] = dct * i * (1.0 - g * g)
        step[:, 3 * H:] = dh * tc * o * (1.0 - o)
        step *= live
        dz[t] = step
        dh = np.where(live, step @ u.T, dh)
        dc = np.where(live, dct * f, dc)
    du = hs[:T].reshape(-1, H).T @ dz.reshape(-1, H4)
    return dz, du
