"""Independent reference implementations used as test oracles.

Nothing here imports the library's numeric code; everything is written with
plain loops so it can be checked by eye.
"""

import math

import numpy as np

from doorslam.model import Conv2d, Dense, Flatten, MaxPool2d, ReLU, Softmax, cross_entropy, forward, init_weights


def naive_dft_power(x):
    """O(N^2) scalar DFT power for bins 0..N/2, written independently of the library FFT."""
    n = len(x)
    out = []
    for k in range(n // 2 + 1):
        re = im = 0.0
        for i, v in enumerate(x):
            ang = 2.0 * math.pi * ((k * i) % n) / n
            re += v * math.cos(ang)
            im -= v * math.sin(ang)
        out.append(re * re + im * im)
    return np.array(out)


def dft_matrix_power(frames):
    """Same DFT as naive_dft_power, as one explicit cos/sin matrix product per batch of frames."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = frames.shape[-1]
    k = np.arange(n // 2 + 1)[:, None]
    ang = 2.0 * np.pi * ((k * np.arange(n)[None, :]) % n) / n
    re = frames @ np.cos(ang).T
    im = -frames @ np.sin(ang).T
    return re * re + im * im


def max_relative_error(actual, expected):
    """Largest absolute deviation, relative to the largest oracle magnitude."""
    return np.max(np.abs(actual - expected)) / np.max(np.abs(expected))


def naive_forward(spec, weights, x):
    """Nested-loop forward pass for one (C, H, W) input. Returns the probability pair."""
    a = np.array(x, dtype=float)
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2d):
            k = weights.tensors[f"{i}.kernel"]
            b = weights.tensors[f"{i}.bias"]
            p, s = layer.padding, layer.stride
            c_in, h, w = a.shape
            src = np.zeros((c_in, h + 2 * p, w + 2 * p))
            src[:, p : p + h, p : p + w] = a
            ho = (h + 2 * p - layer.kernel_h) // s + 1
            wo = (w + 2 * p - layer.kernel_w) // s + 1
            out = np.zeros((layer.out_channels, ho, wo))
            for o in range(layer.out_channels):
                for r in range(ho):
                    for c in range(wo):
                        acc = b[o]
                        for ci in range(c_in):
                            for u in range(layer.kernel_h):
                                for v in range(layer.kernel_w):
                                    acc += k[o, ci, u, v] * src[ci, r * s + u, c * s + v]
                        out[o, r, c] = acc
            a = out
        elif isinstance(layer, ReLU):
            a = np.array([[[max(0.0, v) for v in row] for row in ch] for ch in a])
        elif isinstance(layer, MaxPool2d):
            c_in, h, w = a.shape
            ph, pw = layer.pool_h, layer.pool_w
            out = np.zeros((c_in, h // ph, w // pw))
            for ch in range(c_in):
                for r in range(h // ph):
                    for c in range(w // pw):
                        out[ch, r, c] = max(a[ch, r * ph + u, c * pw + v] for u in range(ph) for v in range(pw))
            a = out
        elif isinstance(layer, Flatten):
            a = np.array([v for v in a.ravel()])
        elif isinstance(layer, Dense):
            k = weights.tensors[f"{i}.kernel"]
            b = weights.tensors[f"{i}.bias"]
            a = np.array([b[o] + sum(k[o, j] * a[j] for j in range(len(a))) for o in range(layer.out_features)])
        elif isinstance(layer, Softmax):
            m = max(a)
            e = [math.exp(v - m) for v in a]
            a = np.array([v / sum(e) for v in e])
    return a


def random_instance(spec, seed, bias_scale=0.1):
    """Fan-bounded kernels, small random biases, standard-normal input."""
    rng = np.random.default_rng(seed)
    w = init_weights(spec, seed)
    for name in w.tensors:
        if name.endswith(".bias"):
            w.tensors[name] = rng.uniform(-bias_scale, bias_scale, w.tensors[name].shape)
    return w, rng.normal(size=spec.input_shape)


def _logit_margin(spec, w, x):
    p = forward(spec, w, x)[0]
    return math.log(p[1]) - math.log(p[0])


def stencil_is_smooth(spec, w, x, name, idx, h):
    """True when the logit margin is affine in this parameter across [theta - h, theta + h].

    For a single parameter, the network logits are piecewise affine (ReLU and
    max-pool switch between linear pieces), so an affine margin at five evenly
    spaced points means no switch lies inside the finite-difference stencil.
    """
    t = w.tensors[name]
    old = t[idx]
    g = []
    for k in (-2, -1, 0, 1, 2):
        t[idx] = old + k * h / 2
        g.append(_logit_margin(spec, w, x))
    t[idx] = old
    g = np.array(g)
    second = np.abs(g[:-2] - 2 * g[1:-1] + g[2:]).max()
    return second <= 1e-10 * (1.0 + np.abs(g).max())


def central_difference(spec, w, x, label, name, idx, h):
    t = w.tensors[name]
    old = t[idx]
    t[idx] = old + h
    up = cross_entropy(forward(spec, w, x)[0], label)
    t[idx] = old - h
    down = cross_entropy(forward(spec, w, x)[0], label)
    t[idx] = old
    return (up - down) / (2 * h)


def relative_gap(a, b):
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def gradient_check(spec, w, x, label, analytic, h=1e-3):
    """Compare every parameter's analytic gradient to central differences.

    Returns (worst relative gap, list of parameters whose stencil crosses a
    ReLU/max-pool switch). Finite differences are only a valid oracle for the
    smooth stencils, so callers assert that the second list is empty.
    """
    worst, kinked = 0.0, []
    for name, t in w.tensors.items():
        for idx in np.ndindex(t.shape):
            if not stencil_is_smooth(spec, w, x, name, idx, h):
                kinked.append((name, idx))
                continue
            num = central_difference(spec, w, x, label, name, idx, h)
            worst = max(worst, relative_gap(float(analytic[name][idx]), num))
    return worst, kinked


def crc16_ccitt_false_bitwise(data):
    """Bit-at-a-time CRC: poly 0x1021, init 0xFFFF, MSB first, no reflection, no final xor."""
    crc = 0xFFFF
    for byte in data:
        for bit in range(7, -1, -1):
            top = (crc >> 15) & 1
            crc = (crc << 1) & 0xFFFF
            if top ^ ((byte >> bit) & 1):
                crc ^= 0x1021
    return crc


def exhaustive_window_scan(samples, win, hop):
    """Best start on the hop grid by exact per-window energy; earliest start wins ties."""
    best, best_energy = 0, -1.0
    for start in range(0, len(samples) - win + 1, hop):
        energy = math.fsum(v * v for v in samples[start : start + win])
        if energy > best_energy:
            best, best_energy = start, energy
    return best
