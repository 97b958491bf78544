"""Independent slow reference implementations used as test oracles."""
import math

import numpy as np


def conv2d_loops(x, w, b):
    """Direct quadruple-loop same convolution with zero padding."""
    o_ch, c_ch, k, _ = w.shape
    _, h, wd = x.shape
    p = k // 2
    out = np.zeros((o_ch, h, wd))
    for o in range(o_ch):
        for y in range(h):
            for xx in range(wd):
                s = b[o]
                for c in range(c_ch):
                    for i in range(k):
                        for j in range(k):
                            yy, xj = y + i - p, xx + j - p
                            if 0 <= yy < h and 0 <= xj < wd:
                                s += w[o, c, i, j] * x[c, yy, xj]
                out[o, y, xx] = s
    return out


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def convlstm_scalar(x, h_prev, c_prev, wx, wh, b, wci, wcf, wco):
    """Pixel-by-pixel ConvLSTM step written straight from the gate equations.

    Gate blocks of ``wx``/``wh``/``b`` are ordered i, f, c, o.
    """
    hid = wh.shape[1]
    cin = wx.shape[1]
    k = wx.shape[2]
    p = k // 2
    _, H, W = x.shape

    def conv_at(gate, ch, y, xx):
        s = b[gate * hid + ch]
        for i in range(k):
            for j in range(k):
                yy, xj = y + i - p, xx + j - p
                if not (0 <= yy < H and 0 <= xj < W):
                    continue
                for c in range(cin):
                    s += wx[gate * hid + ch, c, i, j] * x[c, yy, xj]
                for c in range(hid):
                    s += wh[gate * hid + ch, c, i, j] * h_prev[c, yy, xj]
        return s

    h_new = np.zeros((hid, H, W))
    c_new = np.zeros((hid, H, W))
    for ch in range(hid):
        for y in range(H):
            for xx in range(W):
                cp = c_prev[ch, y, xx]
                ig = _sig(conv_at(0, ch, y, xx) + wci[ch, y, xx] * cp)
                fg = _sig(conv_at(1, ch, y, xx) + wcf[ch, y, xx] * cp)
                gg = math.tanh(conv_at(2, ch, y, xx))
                cn = fg * cp + ig * gg
                og = _sig(conv_at(3, ch, y, xx) + wco[ch, y, xx] * cn)
                c_new[ch, y, xx] = cn
                h_new[ch, y, xx] = og * math.tanh(cn)
    return h_new, c_new
