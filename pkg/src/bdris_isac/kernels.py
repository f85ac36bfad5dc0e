"""Hot numeric kernels: sum rate, sensing terms, and their conjugate gradients.

Two interchangeable backends compute the same quantities:

* ``numpy``  -- vectorized matrix products (reference path).
* ``numba``  -- explicit loops compiled with ``@njit``.

The active backend is chosen at import time. Set ``BDRIS_ISAC_NUMBA=0`` to
force the numpy path; the numba path is also skipped if numba is missing.
Both backends stay importable through :data:`BACKENDS` for tests and
benchmarks.

Conventions shared by every kernel
----------------------------------
``phi`` is the full M x M scattering matrix. ``g_tx`` (N_T x M), ``d_bu``
(K x N_T), ``r_ue`` (K x M), ``d_tu`` (K,), ``r_tar``/``r_tar_dot`` (M,),
``w`` (N_T x K), ``sigma2_ue`` (K,). Gradients are conjugate Wirtinger
derivatives ``df/d(conj phi)``: for a real ``f`` and direction ``E`` the
directional derivative is ``2 Re tr(G^H E)``. Target-interference
cancellation is never modelled here.
"""
from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------

def _rate_parts_numpy(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue):
    h = d_bu + (g_tx @ (phi @ r_ue.T)).T
    a = h.conj() @ w
    p = a.real ** 2 + a.imag ** 2
    leak = d_tu + r_ue.conj() @ (phi @ r_tar)
    sig = np.diagonal(p).copy()
    # off-diagonal sum taken directly; subtracting sig from the row sum loses digits
    np.fill_diagonal(p, 0.0)
    other = p.sum(axis=1) + p_tar * np.abs(leak) ** 2 + sigma2_ue
    return h, a, leak, sig, other


def rate_numpy(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue):
    _, _, _, sig, other = _rate_parts_numpy(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue)
    return float(np.sum(np.log1p(sig / other)) / LN2)


def rate_gradient_numpy(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue):
    h, a, leak, sig, other = _rate_parts_numpy(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue)
    total = sig + other
    c1 = 1.0 / (LN2 * total)
    c2 = 1.0 / (LN2 * other)
    s_h = w @ (w.conj().T @ h.T)                          # col k: S h_k
    s_h_minus = s_h - w * np.diagonal(a).conj()[np.newaxis, :]
    x = g_tx.conj().T @ (s_h * c1 - s_h_minus * c2)       # M x K
    grad = x @ r_ue.conj()
    y = (p_tar * leak * (c1 - c2)) @ r_ue
    grad += np.outer(y, r_tar.conj())
    return grad


def sensing_numpy(phi, g_rx, r_tar, r_tar_dot):
    gp = g_rx @ phi
    h = gp @ r_tar
    hd = gp @ r_tar_dot
    xi1 = float(np.real(np.vdot(hd, hd)))
    c = complex(np.vdot(hd, h))
    v = float(np.real(np.vdot(h, h)))
    return xi1, c, v


def xi_gradient_numpy(phi, g_rx, r_tar, r_tar_dot):
    gp = g_rx @ phi
    h = gp @ r_tar
    hd = gp @ r_tar_dot
    xi1 = float(np.real(np.vdot(hd, hd)))
    c = complex(np.vdot(hd, h))
    v = float(np.real(np.vdot(h, h)))
    c2 = c.real ** 2 + c.imag ** 2
    gh = g_rx.conj().T @ h
    ghd = g_rx.conj().T @ hd
    # d|c|^2 = conj(c) G^H h r_dot^H + c G^H h_dot r^H
    grad = (np.outer(ghd - (np.conj(c) / v) * gh, r_tar_dot.conj())
            + np.outer((c2 / v ** 2) * gh - (c / v) * ghd, r_tar.conj()))
    return xi1, c, v, grad


# --------------------------------------------------------------------------
# numba backend
# --------------------------------------------------------------------------

def _rate_parts_loops(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue):
    k_ue, n_t = d_bu.shape
    m = phi.shape[0]
    h = np.empty((k_ue, n_t), dtype=np.complex128)
    pr = np.empty(m, dtype=np.complex128)
    for k in range(k_ue):
        for i in range(m):
            s = 0j
            for j in range(m):
                s += phi[i, j] * r_ue[k, j]
            pr[i] = s
        for n in range(n_t):
            s = d_bu[k, n]
            for i in range(m):
                s += g_tx[n, i] * pr[i]
            h[k, n] = s
    pt = np.empty(m, dtype=np.complex128)
    for i in range(m):
        s = 0j
        for j in range(m):
            s += phi[i, j] * r_tar[j]
        pt[i] = s
    a = np.empty((k_ue, k_ue), dtype=np.complex128)
    leak = np.empty(k_ue, dtype=np.complex128)
    sig = np.empty(k_ue)
    other = np.empty(k_ue)
    for k in range(k_ue):
        s = d_tu[k]
        for i in range(m):
            s += r_ue[k, i].conjugate() * pt[i]
        leak[k] = s
        acc = 0.0
        for i in range(k_ue):
            z = 0j
            for n in range(n_t):
                z += h[k, n].conjugate() * w[n, i]
            a[k, i] = z
            pw = z.real * z.real + z.imag * z.imag
            if i == k:
                sig[k] = pw
            else:
                acc += pw
        other[k] = acc + p_tar * (s.real * s.real + s.imag * s.imag) + sigma2_ue[k]
    return h, a, leak, sig, other


def _rate_loops(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue):
    _, _, _, sig, other = _rate_parts(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue)
    total = 0.0
    for k in range(sig.shape[0]):
        total += math.log1p(sig[k] / other[k])
    return total / LN2


def _rate_gradient_loops(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue):
    h, a, leak, sig, other = _rate_parts(phi, g_tx, d_bu, r_ue, d_tu, r_tar, w, p_tar, sigma2_ue)
    k_ue, n_t = d_bu.shape
    m = phi.shape[0]
    grad = np.zeros((m, m), dtype=np.complex128)
    u = np.empty(n_t, dtype=np.complex128)
    y = np.zeros(m, dtype=np.complex128)
    for k in range(k_ue):
        c1 = 1.0 / (LN2 * (sig[k] + other[k]))
        c2 = 1.0 / (LN2 * other[k])
        # u = c1 * S h_k - c2 * S_{-k} h_k = (c1 - c2) S h_k + c2 w_k conj(a_kk)
        for n in range(n_t):
            u[n] = c2 * w[n, k] * a[k, k].conjugate()
        for i in range(k_ue):
            coef = (c1 - c2) * a[k, i].conjugate()
            for n in range(n_t):
                u[n] += coef * w[n, i]
        for p in range(m):
            x = 0j
            for n in range(n_t):
                x += g_tx[n, p].conjugate() * u[n]
            for q in range(m):
                grad[p, q] += x * r_ue[k, q].conjugate()
        coef = p_tar * leak[k] * (c1 - c2)
        for p in range(m):
            y[p] += coef * r_ue[k, p]
    for p in range(m):
        for q in range(m):
            grad[p, q] += y[p] * r_tar[q].conjugate()
    return grad


def _cascade_loops(phi, g_rx, r_tar, r_tar_dot):
    n_r = g_rx.shape[0]
    m = phi.shape[0]
    pt = np.empty(m, dtype=np.complex128)
    ptd = np.empty(m, dtype=np.complex128)
    for i in range(m):
        s = 0j
        sd = 0j
        for j in range(m):
            s += phi[i, j] * r_tar[j]
            sd += phi[i, j] * r_tar_dot[j]
        pt[i] = s
        ptd[i] = sd
    h = np.empty(n_r, dtype=np.complex128)
    hd = np.empty(n_r, dtype=np.complex128)
    for n in range(n_r):
        s = 0j
        sd = 0j
        for i in range(m):
            s += g_rx[n, i] * pt[i]
            sd += g_rx[n, i] * ptd[i]
        h[n] = s
        hd[n] = sd
    xi1 = 0.0
    v = 0.0
    c = 0j
    for n in range(n_r):
        xi1 += hd[n].real * hd[n].real + hd[n].imag * hd[n].imag
        v += h[n].real * h[n].real + h[n].imag * h[n].imag
        c += hd[n].conjugate() * h[n]
    return h, hd, xi1, c, v


def _sensing_loops(phi, g_rx, r_tar, r_tar_dot):
    _, _, xi1, c, v = _cascade(phi, g_rx, r_tar, r_tar_dot)
    return xi1, c, v


def _xi_gradient_loops(phi, g_rx, r_tar, r_tar_dot):
    h, hd, xi1, c, v = _cascade(phi, g_rx, r_tar, r_tar_dot)
    n_r = g_rx.shape[0]
    m = phi.shape[0]
    c2 = c.real * c.real + c.imag * c.imag
    cv = c / v
    ccv = c.conjugate() / v
    c2v = c2 / (v * v)
    grad = np.empty((m, m), dtype=np.complex128)
    for p in range(m):
        gh = 0j
        ghd = 0j
        for n in range(n_r):
            gc = g_rx[n, p].conjugate()
            gh += gc * h[n]
            ghd += gc * hd[n]
        left_dot = ghd - ccv * gh
        left = c2v * gh - cv * ghd
        for q in range(m):
            grad[p, q] = left_dot * r_tar_dot[q].conjugate() + left * r_tar[q].conjugate()
    return xi1, c, v, grad


def _use_numba():
    flag = os.environ.get("BDRIS_ISAC_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None

if _nb is not None:
    _njit = _nb.njit(cache=True, nogil=True)
    _rate_parts = _njit(_rate_parts_loops)
    _cascade = _njit(_cascade_loops)
    numba_backend = SimpleNamespace(
        name="numba",
        rate=_njit(_rate_loops),
        rate_gradient=_njit(_rate_gradient_loops),
        sensing=_njit(_sensing_loops),
        xi_gradient=_njit(_xi_gradient_loops),
    )
else:  # pragma: no cover
    numba_backend = None

numpy_backend = SimpleNamespace(
    name="numpy",
    rate=rate_numpy,
    rate_gradient=rate_gradient_numpy,
    sensing=sensing_numpy,
    xi_gradient=xi_gradient_numpy,
)

BACKENDS = {"numpy": numpy_backend}
if numba_backend is not None:
    BACKENDS["numba"] = numba_backend

active = numba_backend if (numba_backend is not None and _use_numba()) else numpy_backend
