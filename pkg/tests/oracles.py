"""Independent reference implementations used as test oracles.

Written with plain Python loops and lists, straight from the defining
recurrences, so they share no code path with the package.
"""
import math


def delta_oracle(x, theta):
    """s(0) = 0; s(t) = 1 iff |x[t] - x[t-1]| >= theta."""
    out = [0] * len(x)
    for t in range(1, len(x)):
        if abs(x[t] - x[t - 1]) >= theta:
            out[t] = 1
    return out


def multi_delta_oracle(channels, theta_min, delta, n):
    """One delta coder per threshold theta_min + i*delta, i = 0..n-1, per channel."""
    res = []
    for x in channels:
        trains = []
        for i in range(n):
            th = theta_min + i * delta
            trains.append([0] + [1 if abs(x[t] - x[t - 1]) >= th else 0 for t in range(1, len(x))])
        res.append(trains)
    return res


def calibrate_oracle(channels, theta_min, delta, r_max):
    """Grid scan over theta_min + k*delta of the pooled rate."""
    total = sum(len(x) for x in channels)
    k = 0
    while True:
        th = theta_min + k * delta
        if th > 1.0:
            return 1.0 + delta, True
        spikes = sum(sum(delta_oracle(x, th)) for x in channels)
        if spikes / total <= r_max:
            return th, False
        k += 1


def tad_reference(counts, t_s=5, omega=1.0, beta=0.95, u_max=5.0, u_th=1.0, l_min=200, l_max=2000,
                  strict=False):
    """Per-step TAD-LIF: decay on every inactive step, no laziness.

    Returns emitted segments as (onset, length) and discards likewise.
    """
    u = 0.0
    in_action = False
    onset = -1
    count = 0
    emitted, discarded = [], []

    def close():
        if l_min <= count <= l_max:
            emitted.append((onset, count))
        else:
            discarded.append((onset, count))

    for t, x in enumerate(counts):
        active = x > t_s if strict else x >= t_s
        if active:
            u = min(beta * u + omega * x * x, u_max)
        else:
            u = beta * u
        if u > u_th:
            if not in_action:
                in_action = True
                onset = t
                count = 0
            count += 1
        elif in_action:
            close()
            in_action = False
            count = 0
    if in_action:
        close()
    return emitted, discarded


def steps_to_release(u0, beta, u_th):
    """Inactive steps until u first drops to u_th or below."""
    n = 0
    u = u0
    while u > u_th:
        u *= beta
        n += 1
    return n


def lif_reference(currents, beta, u_th):
    """Scalar LIF with subtractive reset: u = beta*u + i - s_prev*u_th; s = u > u_th."""
    u, s = 0.0, 0
    us, ss = [], []
    for i in currents:
        u = beta * u + i - s * u_th
        s = 1 if u > u_th else 0
        us.append(u)
        ss.append(s)
    return us, ss


def snn_forward_reference(w_in, w_out, f, beta, u_th, t_sim, classes, population):
    """Two-layer LIF network driven by a static input, plain loops.

    ``w_in`` is H x hidden, ``w_out`` hidden x (classes*population), nested lists.
    """
    h, hidden = len(w_in), len(w_in[0])
    outs = len(w_out[0])
    cur = [sum(w_in[r][j] * f[r] for r in range(h)) for j in range(hidden)]
    uh, sh = [0.0] * hidden, [0] * hidden
    uo, so = [0.0] * outs, [0] * outs
    sums = [0] * classes
    for _ in range(t_sim):
        for j in range(hidden):
            uh[j] = beta * uh[j] + cur[j] - sh[j] * u_th
        sh = [1 if v > u_th else 0 for v in uh]
        i_out = [sum(w_out[j][o] for j in range(hidden) if sh[j]) for o in range(outs)]
        for o in range(outs):
            uo[o] = beta * uo[o] + i_out[o] - so[o] * u_th
        so = [1 if v > u_th else 0 for v in uo]
        for o in range(outs):
            sums[o // population] += so[o]
    return sums


def fast_sigmoid_grad(x, k):
    return 1.0 / (k * abs(x) + 1.0) ** 2


def ceil_log_release(u0, beta, u_th):
    return math.ceil(math.log(u_th / u0) / math.log(beta))
