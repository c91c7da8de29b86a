"""Slow, independent reference implementations used only by the tests."""

import numpy as np


def mirror(i, n):
    """Half-sample symmetric extension, written as a loop."""
    while i < 0 or i >= n:
        i = -1 - i if i < 0 else 2 * n - 1 - i
    return i


def transpose_conv_1d(x, taps, n_out):
    """Zero-insert ``x`` (x[j] at position 2j), then full convolution with ``taps``.

    Output ``n`` reads the zero-inserted signal at ``n - k + K/2 - 1``.
    """
    x = np.asarray(x, dtype=float)
    k = len(taps)
    lo = -2 * k
    hi = 2 * len(x) + 2 * k
    u = np.zeros(hi - lo)
    for m in range(lo, hi):
        if m % 2 == 0:
            u[m - lo] = x[mirror(m // 2, len(x))]
    full = np.convolve(u, taps)
    return np.array([full[n + k // 2 - 1 - lo] for n in range(n_out)])


def transpose_conv_2d(plane, taps_2d, target_h, target_w):
    """Non-separable zero-insertion transpose convolution with a K x K kernel."""
    plane = np.asarray(plane, dtype=float)
    h, w = plane.shape
    k = taps_2d.shape[0]
    out = np.zeros((target_h, target_w))
    for r in range(target_h):
        for c in range(target_w):
            acc = 0.0
            for a in range(k):
                for b in range(k):
                    mr, mc = r - a + k // 2 - 1, c - b + k // 2 - 1
                    if mr % 2 or mc % 2:
                        continue
                    acc += taps_2d[a, b] * plane[mirror(mr // 2, h), mirror(mc // 2, w)]
            out[r, c] = acc
    return out


def separable_upsample(plane, taps, target_h, target_w):
    plane = np.asarray(plane, dtype=float)
    rows = np.array([transpose_conv_1d(r, taps, target_w) for r in plane])
    return np.array([transpose_conv_1d(c, taps, target_h) for c in rows.T]).T


def conv2d_same(plane, taps):
    """Centred separable filtering via an explicit double loop."""
    plane = np.asarray(plane, dtype=float)
    h, w = plane.shape
    k = len(taps)
    c = k // 2
    out = np.zeros_like(plane)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(k):
                for b in range(k):
                    acc += taps[a] * taps[b] * plane[mirror(i + a - c, h), mirror(j + b - c, w)]
            out[i, j] = acc
    return out


def finite_difference_errors(model, target, lam, mode="noise", noise=None, h=1e-4):
    """Worst relative error between analytic and central-difference gradients, per parameter.

    Differences below an absolute floor of 1e-8 count as agreement.
    """
    from pyrcodec.decoder import backward, loss

    params = model.get_params()
    _, grads = backward(model, target, lam, mode, noise)
    probe = model.copy()
    worst = {}
    for name, value in params.items():
        err = 0.0
        for idx in np.ndindex(value.shape):
            trial = {k: v.copy() for k, v in params.items()}
            trial[name][idx] += h
            probe.set_params(trial)
            j_plus = loss(probe, target, lam, mode, noise).j
            trial[name][idx] -= 2 * h
            probe.set_params(trial)
            j_minus = loss(probe, target, lam, mode, noise).j
            fd = (j_plus - j_minus) / (2 * h)
            an = grads[name][idx]
            if abs(fd - an) > 1e-8:
                err = max(err, abs(fd - an) / max(abs(fd), abs(an)))
        worst[name] = err
    return worst


def perturbed_model(model, rng, latent_scale=2.0, param_scale=0.3):
    """Move a freshly initialized model away from its symmetric starting point."""
    params = model.get_params()
    for name in params:
        if name.startswith("latent"):
            params[name] = rng.normal(scale=latent_scale, size=params[name].shape)
        else:
            params[name] = params[name] + rng.normal(scale=param_scale, size=params[name].shape)
    params[f"b{len(model.synthesis.biases) - 1}"] += 0.5
    out = model.copy()
    out.set_params(params)
    return out


def kink_margin(model, noise):
    """Distance of the forward pass from its non-smooth points.

    Smallest magnitude over hidden ReLU inputs and over the distances of
    the raw outputs to the clamp bounds 0 and 1. Finite differences are
    only meaningful when a step cannot cross one of these.
    """
    from pyrcodec.decoder import surrogate_latents
    from pyrcodec.upsampler import make_graph

    values = surrogate_latents(model.latents, "noise", noise)
    dense = make_graph(model.upsampler, model.height, model.width).forward(values)
    x = dense.reshape(model.levels, -1).T
    margins = []
    for i, (w, b) in enumerate(zip(model.synthesis.weights, model.synthesis.biases)):
        x = x @ w + b
        if i < len(model.synthesis.weights) - 1:
            margins.append(np.min(np.abs(x)))
            x = np.maximum(x, 0.0)
    margins += [np.min(np.abs(x)), np.min(np.abs(x - 1.0))]
    inside = float(np.mean((x > 0) & (x < 1)))
    return float(min(margins)), inside


def smooth_test_point(make_model, rng, margin=2e-3, tries=200):
    """Draw (model, target, noise) until the forward pass is ``margin`` away from every kink.

    At least half of the outputs must also lie inside the clamp range, so the
    check cannot pass just because every gradient is zero.
    """
    for _ in range(tries):
        model = perturbed_model(make_model(), rng)
        target = rng.random((model.height, model.width, 3))
        noise = [rng.uniform(-0.5, 0.5, size=p.shape) for p in model.latents]
        distance, inside = kink_margin(model, noise)
        if distance > margin and inside >= 0.5:
            return model, target, noise
    raise RuntimeError("no smooth test point found")
