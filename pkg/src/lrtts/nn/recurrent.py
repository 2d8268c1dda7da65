"""Fused recurrent sequence ops: one tape node per layer, BPTT inside.

Keeps graphs small (the per-step loop runs in plain numpy) while remaining
exactly differentiable; finite-difference tests in the suite pin the math.
Masked steps (t >= length) carry state through unchanged, so valid frames
match unbatched computation for both directions.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .tensor import Tensor

__all__ = ["lstm_sequence", "gru_sequence"]


def _masks(lengths, batch: int, t_max: int):
    if lengths is None:
        return None
    lengths = np.asarray(lengths)
    if np.all(lengths == t_max):
        return None
    return (np.arange(t_max)[None, :] < lengths[:, None]).astype(np.float64)


def lstm_sequence(x: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor,
                  lengths=None, reverse: bool = False) -> Tensor:
    """LSTM over (B, T, D) -> (B, T, H); gates ordered i, f, g, o."""
    B, T, D = x.data.shape
    H = w_h.data.shape[0]
    xg = x.data @ w_x.data + b.data          # (B, T, 4H)
    mask = _masks(lengths, B, T)
    steps = range(T - 1, -1, -1) if reverse else range(T)

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = {}
    for t in steps:
        g = xg[:, t] + h @ w_h.data
        i = expit(g[:, :H])
        f = expit(g[:, H:2 * H])
        u = np.tanh(g[:, 2 * H:3 * H])
        o = expit(g[:, 3 * H:])
        c_new = f * c + i * u
        tc = np.tanh(c_new)
        h_new = o * tc
        if mask is not None:
            m = mask[:, t][:, None]
            c_next = c + m * (c_new - c)
            h_next = h + m * (h_new - h)
        else:
            m = None
            c_next, h_next = c_new, h_new
        cache[t] = (i, f, u, o, c, c_new, tc, h, m)
        c, h = c_next, h_next
        hs[:, t] = h

    out = Tensor._make(hs, (x, w_x, w_h, b), None)
    if not out.requires_grad:
        return out

    def backward(grad):
        dxg = np.zeros_like(xg)
        d_wh = np.zeros_like(w_h.data)
        dh_carry = np.zeros((B, H))
        dc_carry = np.zeros((B, H))
        for t in reversed(list(steps)):
            i, f, u, o, c_prev, c_new, tc, h_prev, m = cache[t]
            dh_total = grad[:, t] + dh_carry
            if m is not None:
                dh_new = dh_total * m
                dh_passthrough = dh_total * (1.0 - m)
                dc_new = dc_carry * m
                dc_passthrough = dc_carry * (1.0 - m)
            else:
                dh_new = dh_total
                dh_passthrough = 0.0
                dc_new = dc_carry
                dc_passthrough = 0.0
            do = dh_new * tc
            dc = dc_new + dh_new * o * (1.0 - tc * tc)
            di = dc * u
            df = dc * c_prev
            du = dc * i
            dgates = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                du * (1.0 - u * u),
                do * o * (1.0 - o),
            ], axis=1)
            dxg[:, t] = dgates
            d_wh += h_prev.T @ dgates
            dh_carry = dgates @ w_h.data.T + dh_passthrough
            dc_carry = dc * f + dc_passthrough
        if x.requires_grad:
            x._accum(dxg @ w_x.data.T)
        if w_x.requires_grad:
            w_x._accum(x.data.reshape(B * T, D).T @ dxg.reshape(B * T, 4 * H))
        if w_h.requires_grad:
            w_h._accum(d_wh)
        if b.requires_grad:
            b._accum(dxg.sum(axis=(0, 1)))

    out._backward = backward
    return out


def gru_sequence(x: Tensor, w_x: Tensor, w_h: Tensor, b_x: Tensor, b_h: Tensor,
                 lengths=None) -> Tensor:
    """GRU over (B, T, D) -> (B, T, H); gates ordered r, z, n."""
    B, T, D = x.data.shape
    H = w_h.data.shape[0]
    xg = x.data @ w_x.data + b_x.data
    mask = _masks(lengths, B, T)

    h = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = {}
    for t in range(T):
        hh = h @ w_h.data + b_h.data
        r = expit(xg[:, t, :H] + hh[:, :H])
        z = expit(xg[:, t, H:2 * H] + hh[:, H:2 * H])
        n = np.tanh(xg[:, t, 2 * H:] + r * hh[:, 2 * H:])
        h_new = n + z * (h - n)
        if mask is not None:
            m = mask[:, t][:, None]
            h_next = h + m * (h_new - h)
        else:
            m = None
            h_next = h_new
        cache[t] = (r, z, n, h, hh[:, 2 * H:], m)
        h = h_next
        hs[:, t] = h

    out = Tensor._make(hs, (x, w_x, w_h, b_x, b_h), None)
    if not out.requires_grad:
        return out

    def backward(grad):
        dxg = np.zeros_like(xg)
        d_wh = np.zeros_like(w_h.data)
        db_h = np.zeros(3 * H)
        dh_carry = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            r, z, n, h_prev, hh_n, m = cache[t]
            dh_total = grad[:, t] + dh_carry
            if m is not None:
                dh_new = dh_total * m
                dh_passthrough = dh_total * (1.0 - m)
            else:
                dh_new = dh_total
                dh_passthrough = 0.0
            dn = dh_new * (1.0 - z)
            dz = dh_new * (h_prev - n)
            dh_prev = dh_new * z
            dn_pre = dn * (1.0 - n * n)
            dr = dn_pre * hh_n
            dhh_n = dn_pre * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dhh = np.concatenate([dr_pre, dz_pre, dhh_n], axis=1)
            dxg[:, t, :H] = dr_pre
            dxg[:, t, H:2 * H] = dz_pre
            dxg[:, t, 2 * H:] = dn_pre
            d_wh += h_prev.T @ dhh
            db_h += dhh.sum(axis=0)
            dh_carry = dh_prev + dhh @ w_h.data.T + dh_passthrough
        if x.requires_grad:
            x._accum(dxg @ w_x.data.T)
        if w_x.requires_grad:
            w_x._accum(x.data.reshape(B * T, D).T @ dxg.reshape(B * T, 3 * H))
        if w_h.requires_grad:
            w_h._accum(d_wh)
        if b_x.requires_grad:
            b_x._accum(dxg.sum(axis=(0, 1)))
        if b_h.requires_grad:
            b_h._accum(db_h)

    out._backward = backward
    return out
