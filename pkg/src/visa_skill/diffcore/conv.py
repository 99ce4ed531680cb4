"""3D convolution (valid in time, same-padded in space) via im2col."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, as_tensor, make_result, register_derivative


def conv3d(x, weight, bias) -> Tensor:
    """Channels-last 3D convolution.

    x: (N, D, H, W, Cin); weight: (kt, kh, kw, Cin, Cout); bias: (Cout,).
    Returns (N, D - kt + 1, H, W, Cout).  kh and kw must be odd.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    kt, kh, kw, cin, cout = weight.shape
    n, d, h, w, c = x.shape
    if c != cin:
        raise ValueError(f"conv3d: input has {c} channels, kernel expects {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv3d: spatial kernel extents must be odd")
    if d < kt:
        raise ValueError(f"conv3d: temporal extent {d} shorter than kernel {kt}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw), (0, 0)))
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    # win: (N, Do, H, W, Cin, kt, kh, kw) -> rows ordered like the kernel
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 3, 5, 6, 7, 4))
    do = d - kt + 1
    cols = cols.reshape(n * do * h * w, kt * kh * kw * cin)
    wmat = weight.data.reshape(-1, cout)
    out = (cols @ wmat + bias.data).reshape(n, do, h, w, cout)
    return make_result("conv3d", out, (x, weight, bias), saved=cols)


@register_derivative("conv3d")
def _(out, g):
    x, weight, bias = out.inputs
    cols = out.saved
    kt, kh, kw, cin, cout = weight.shape
    g2 = g.reshape(-1, cout)
    gw = (cols.T @ g2).reshape(weight.shape) if weight.requires_grad else None
    gb = g2.sum(axis=0) if bias.requires_grad else None
    gx = None
    if x.requires_grad:
        n, d, h, w, _ = x.shape
        do = d - kt + 1
        ph, pw = kh // 2, kw // 2
        gcols = (g2 @ weight.data.reshape(-1, cout).T).reshape(n, do, h, w, kt, kh, kw, cin)
        gxp = np.zeros((n, d, h + 2 * ph, w + 2 * pw, cin))
        for a in range(kt):
            for b in range(kh):
                for c in range(kw):
                    gxp[:, a:a + do, b:b + h, c:c + w, :] += gcols[:, :, :, :, a, b, c, :]
        gx = gxp[:, :, ph:ph + h, pw:pw + w, :]
    return gx, gw, gb
