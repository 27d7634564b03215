"""In-place amplitude kernels (little-endian: qubit q is bit q of the index)."""

import numba as nb
import numpy as np

_opts = dict(cache=True, nogil=True, fastmath=False)


@nb.njit(**_opts)
def apply_1q(psi, q, u00, u01, u10, u11):
    n = psi.shape[0]
    m = 1 << q
    for hi in range(0, n, 2 * m):
        for lo in range(m):
            i0 = hi + lo
            i1 = i0 + m
            a = psi[i0]
            b = psi[i1]
            psi[i0] = u00 * a + u01 * b
            psi[i1] = u10 * a + u11 * b


@nb.njit(cache=True, nogil=True, fastmath=True)
def _xrot_view(v, q, c, s):
    # v is the float64 view of the amplitudes: re at 2i, im at 2i + 1
    n = v.shape[0] // 2
    m = 1 << q
    for hi in range(0, n, 2 * m):
        for lo in range(m):
            i0 = 2 * (hi + lo)
            i1 = i0 + 2 * m
            ar = v[i0]
            ai = v[i0 + 1]
            br = v[i1]
            bi = v[i1 + 1]
            v[i0] = c * ar - s * bi
            v[i0 + 1] = c * ai + s * br
            v[i1] = c * br - s * ai
            v[i1 + 1] = c * bi + s * ar


def apply_xrot(psi, q, c, s):
    """exp(i phi X) with c = cos(phi), s = sin(phi)."""
    _xrot_view(psi.view(np.float64), q, c, s)


@nb.njit(**_opts)
def apply_2q(psi, q0, q1, u):
    """4x4 ``u`` in the local basis 2*bit(q0) + bit(q1)."""
    n = psi.shape[0]
    m0 = 1 << q0
    m1 = 1 << q1
    lo_q = min(q0, q1)
    hi_q = max(q0, q1)
    for k in range(n >> 2):
        # insert zero bits at positions lo_q and hi_q
        i = k
        i = ((i >> lo_q) << (lo_q + 1)) | (i & ((1 << lo_q) - 1))
        i = ((i >> hi_q) << (hi_q + 1)) | (i & ((1 << hi_q) - 1))
        i00 = i
        i01 = i | m1
        i10 = i | m0
        i11 = i | m0 | m1
        a0 = psi[i00]
        a1 = psi[i01]
        a2 = psi[i10]
        a3 = psi[i11]
        psi[i00] = u[0, 0] * a0 + u[0, 1] * a1 + u[0, 2] * a2 + u[0, 3] * a3
        psi[i01] = u[1, 0] * a0 + u[1, 1] * a1 + u[1, 2] * a2 + u[1, 3] * a3
        psi[i10] = u[2, 0] * a0 + u[2, 1] * a1 + u[2, 2] * a2 + u[2, 3] * a3
        psi[i11] = u[3, 0] * a0 + u[3, 1] * a1 + u[3, 2] * a2 + u[3, 3] * a3


@nb.njit(**_opts)
def apply_cnot(psi, c, t):
    n = psi.shape[0]
    mc = 1 << c
    mt = 1 << t
    for i in range(n):
        if (i & mc) and not (i & mt):
            j = i | mt
            tmp = psi[i]
            psi[i] = psi[j]
            psi[j] = tmp


@nb.njit(**_opts)
def apply_zz_phase(psi, a, b, phi):
    """exp(i phi Z_a Z_b)."""
    e = complex(np.cos(phi), np.sin(phi))
    f = complex(np.cos(phi), -np.sin(phi))
    for i in range(psi.shape[0]):
        if ((i >> a) ^ (i >> b)) & 1:
            psi[i] *= f
        else:
            psi[i] *= e


@nb.njit(**_opts)
def apply_split_diagonal(psi, low, high, low_bits, high_shift):
    """psi[i] *= low[i & (2^low_bits - 1)] * high[i >> high_shift]."""
    mask = (1 << low_bits) - 1
    for i in range(psi.shape[0]):
        psi[i] *= low[i & mask] * high[i >> high_shift]


@nb.njit(**_opts)
def apply_pauli_string(psi, xmask, zmask):
    """X^x Z^z up to global phase: out[i] = (-1)^{|(i^x)&z|} psi[i^x]."""
    n = psi.shape[0]
    out = np.empty_like(psi)
    for i in range(n):
        j = i ^ xmask
        v = psi[j]
        k = j & zmask
        par = 0
        while k:
            par ^= 1
            k &= k - 1
        out[i] = -v if par else v
    psi[:] = out


@nb.njit(**_opts)
def expect_x(psi, q):
    m = 1 << q
    acc = 0.0
    n = psi.shape[0]
    for hi in range(0, n, 2 * m):
        for lo in range(m):
            i0 = hi + lo
            a = psi[i0]
            b = psi[i0 + m]
            acc += a.real * b.real + a.imag * b.imag
    return 2.0 * acc
