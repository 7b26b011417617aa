# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pose-distance kernels.

Same contract as the pure-numpy backend in ``_kernels_np`` (see its module
docstring for the conventions); this version runs the per-pair 3x3 SVDs in C
via LAPACK's dgesvd, which removes the Python/broadcast overhead that
dominates the nearest-neighbour and gradient passes.
"""

import numpy as np

from libc.math cimport fabs, sqrt
from scipy.linalg.cython_lapack cimport dgesvd

cdef double DET_TOL = 1e-12


cdef void _cross_cov(const double* x, const double* y, int d, double* k) noexcept nogil:
    # k = y @ x^T, all buffers row-major; x and y are (3, d)
    cdef int p, q, t
    cdef double acc
    for p in range(3):
        for q in range(3):
            acc = 0.0
            for t in range(d):
                acc += y[p * d + t] * x[q * d + t]
            k[p * 3 + q] = acc


cdef inline double _det3(const double* k) noexcept nogil:
    return (
        k[0] * (k[4] * k[8] - k[5] * k[7])
        - k[1] * (k[3] * k[8] - k[5] * k[6])
        + k[2] * (k[3] * k[7] - k[4] * k[6])
    )


cdef inline double _sqnorm(const double* x, int n) noexcept nogil:
    cdef int i
    cdef double acc = 0.0
    for i in range(n):
        acc += x[i] * x[i]
    return acc


cdef int _svd3(const double* k_rm, double* u_rm, double* s, double* vt_rm,
               bint want_uv) noexcept nogil:
    # LAPACK is column-major, so the row-major buffer k_rm is read as K^T.
    # From K^T = U' S V'^T it follows K = V' S U'^T, hence U(K) is LAPACK's
    # VT output read back as row-major and Vt(K) is LAPACK's U output.
    cdef double a[9]
    cdef double work[64]
    cdef double dummy[9]
    cdef int m = 3, lda = 3, ldu = 3, ldvt = 3, lwork = 64, info = 0
    cdef char jobn = b'N', joba = b'A'
    cdef int i
    for i in range(9):
        a[i] = k_rm[i]
    if want_uv:
        dgesvd(&joba, &joba, &m, &m, a, &lda, s, vt_rm, &ldu, u_rm, &ldvt,
               work, &lwork, &info)
    else:
        dgesvd(&jobn, &jobn, &m, &m, a, &lda, s, dummy, &ldu, dummy, &ldvt,
               work, &lwork, &info)
    return info


cdef bint _singular_values3(const double* k, double* s) noexcept nogil:
    # Singular values of a 3x3 via cyclic Jacobi on the symmetric K K^T;
    # much cheaper than dgesvd at this size.  Returns False when the spectrum
    # is too spread for the squared form (small singular values lose half
    # their digits through the Gram matrix) and the caller must fall back.
    cdef double a[9]
    cdef int p, q, i, sweep
    cdef double off, scale, apq, app, aqq, theta, t, c, sn, akp, akq
    for p in range(3):
        for q in range(3):
            a[p * 3 + q] = (k[p * 3] * k[q * 3]
                            + k[p * 3 + 1] * k[q * 3 + 1]
                            + k[p * 3 + 2] * k[q * 3 + 2])
    scale = fabs(a[0]) + fabs(a[4]) + fabs(a[8])
    if scale == 0.0:
        s[0] = s[1] = s[2] = 0.0
        return 1
    for sweep in range(12):
        off = fabs(a[1]) + fabs(a[2]) + fabs(a[5])
        if off < 1e-15 * scale:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                apq = a[p * 3 + q]
                if fabs(apq) < 1e-18 * scale:
                    continue
                app = a[p * 3 + p]
                aqq = a[q * 3 + q]
                theta = 0.5 * (aqq - app) / apq
                t = 1.0 / (fabs(theta) + sqrt(1.0 + theta * theta))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(1.0 + t * t)
                sn = t * c
                # rotate rows/columns p and q of the symmetric matrix
                for i in range(3):
                    akp = a[i * 3 + p]
                    akq = a[i * 3 + q]
                    a[i * 3 + p] = c * akp - sn * akq
                    a[i * 3 + q] = sn * akp + c * akq
                for i in range(3):
                    akp = a[p * 3 + i]
                    akq = a[q * 3 + i]
                    a[p * 3 + i] = c * akp - sn * akq
                    a[q * 3 + i] = sn * akp + c * akq
    # eigenvalues on the diagonal; sort descending, clamp fp negatives
    s[0] = a[0] if a[0] > 0.0 else 0.0
    s[1] = a[4] if a[4] > 0.0 else 0.0
    s[2] = a[8] if a[8] > 0.0 else 0.0
    cdef double tmp
    if s[0] < s[1]:
        tmp = s[0]; s[0] = s[1]; s[1] = tmp
    if s[1] < s[2]:
        tmp = s[1]; s[1] = s[2]; s[2] = tmp
    if s[0] < s[1]:
        tmp = s[0]; s[0] = s[1]; s[1] = tmp
    if s[2] <= 1e-6 * s[0]:
        return 0
    s[0] = sqrt(s[0])
    s[1] = sqrt(s[1])
    s[2] = sqrt(s[2])
    return 1


cdef double _sqdist_one(const double* x, const double* y, int d,
                        double nx, double ny) noexcept nogil:
    cdef double k[9]
    cdef double s[3]
    cdef double det, sign, r
    _cross_cov(x, y, d, k)
    det = _det3(k)
    if not _singular_values3(k, s):
        _svd3(k, NULL, s, NULL, 0)
    sign = 1.0 if fabs(det) < DET_TOL else (1.0 if det > 0.0 else -1.0)
    r = nx + ny - 2.0 * (s[0] + s[1] + sign * s[2])
    return r if r > 0.0 else 0.0


cdef bint _align_one(const double* x, const double* y, int d,
                     double* rot, double* r_out) noexcept nogil:
    cdef double k[9]
    cdef double u[9]
    cdef double vt[9]
    cdef double s[3]
    cdef double det, sign, tr, r
    cdef bint degenerate
    cdef int p, q, i
    _cross_cov(x, y, d, k)
    det = _det3(k)
    _svd3(k, u, s, vt, 1)
    degenerate = fabs(det) < DET_TOL
    if degenerate:
        sign = 1.0
        if _det3(u) * _det3(vt) < 0.0:
            # third singular pair is sign-free at rank <= 2; flip u's third
            # column so det(rot) stays +1
            u[2] = -u[2]
            u[5] = -u[5]
            u[8] = -u[8]
    else:
        sign = 1.0 if det > 0.0 else -1.0
    vt[6] *= sign
    vt[7] *= sign
    vt[8] *= sign
    for p in range(3):
        for q in range(3):
            rot[p * 3 + q] = (u[p * 3] * vt[q]
                              + u[p * 3 + 1] * vt[3 + q]
                              + u[p * 3 + 2] * vt[6 + q])
    tr = 0.0
    for i in range(9):
        tr += rot[i] * k[i]
    r = _sqnorm(x, 3 * d) + _sqnorm(y, 3 * d) - 2.0 * tr
    r_out[0] = r if r > 0.0 else 0.0
    return degenerate


def _as_stack(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] != 3:
        raise ValueError(f"expected a (k, 3, d) stack, got shape {a.shape}")
    if not a.flags.writeable:
        a = a.copy()
    return a


def paired_sqdist(a, b):
    """Squared pose distances r(a_i, b_i) for matched stacks (k, 3, d)."""
    cdef double[:, :, ::1] av = _as_stack(a)
    cdef double[:, :, ::1] bv = _as_stack(b)
    if av.shape[0] != bv.shape[0] or av.shape[2] != bv.shape[2]:
        raise ValueError("stacks must share shape")
    cdef Py_ssize_t n = av.shape[0]
    cdef int d = <int> av.shape[2]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _sqdist_one(&av[i, 0, 0], &bv[i, 0, 0], d,
                                 _sqnorm(&av[i, 0, 0], 3 * d),
                                 _sqnorm(&bv[i, 0, 0], 3 * d))
    return out_arr


def pairwise_sqdist(a, b):
    """All squared pose distances between stacks: out[i, j] = r(a_i, b_j)."""
    cdef double[:, :, ::1] av = _as_stack(a)
    cdef double[:, :, ::1] bv = _as_stack(b)
    if av.shape[2] != bv.shape[2]:
        raise ValueError("stacks must share keypoint count")
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0]
    cdef int d = <int> av.shape[2]
    na_arr = np.empty(n, dtype=np.float64)
    nb_arr = np.empty(m, dtype=np.float64)
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[::1] na = na_arr
    cdef double[::1] nb = nb_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            na[i] = _sqnorm(&av[i, 0, 0], 3 * d)
        for j in range(m):
            nb[j] = _sqnorm(&bv[j, 0, 0], 3 * d)
        for i in range(n):
            for j in range(m):
                out[i, j] = _sqdist_one(&av[i, 0, 0], &bv[j, 0, 0], d,
                                        na[i], nb[j])
    return out_arr


def paired_align(a, b):
    """Optimal rotations aligning a_i onto b_i; see the numpy backend."""
    cdef double[:, :, ::1] av = _as_stack(a)
    cdef double[:, :, ::1] bv = _as_stack(b)
    if av.shape[0] != bv.shape[0] or av.shape[2] != bv.shape[2]:
        raise ValueError("stacks must share shape")
    cdef Py_ssize_t n = av.shape[0]
    cdef int d = <int> av.shape[2]
    rot_arr = np.empty((n, 3, 3), dtype=np.float64)
    r_arr = np.empty(n, dtype=np.float64)
    deg_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, :, ::1] rot = rot_arr
    cdef double[::1] rv = r_arr
    cdef unsigned char[::1] dg = deg_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            dg[i] = _align_one(&av[i, 0, 0], &bv[i, 0, 0], d,
                               &rot[i, 0, 0], &rv[i])
    return rot_arr, r_arr, deg_arr.astype(bool)


def paired_grad(a, b):
    """Gradients 2 (a_i - R^T b_i) of r in the first argument."""
    cdef double[:, :, ::1] av = _as_stack(a)
    cdef double[:, :, ::1] bv = _as_stack(b)
    if av.shape[0] != bv.shape[0] or av.shape[2] != bv.shape[2]:
        raise ValueError("stacks must share shape")
    cdef Py_ssize_t n = av.shape[0]
    cdef int d = <int> av.shape[2]
    grad_arr = np.empty((n, 3, av.shape[2]), dtype=np.float64)
    r_arr = np.empty(n, dtype=np.float64)
    deg_arr = np.zeros(n, dtype=np.uint8)
    cdef double[:, :, ::1] gv = grad_arr
    cdef double[::1] rv = r_arr
    cdef unsigned char[::1] dg = deg_arr
    cdef double rot[9]
    cdef double acc
    cdef Py_ssize_t i
    cdef int p, q, t
    with nogil:
        for i in range(n):
            dg[i] = _align_one(&av[i, 0, 0], &bv[i, 0, 0], d, rot, &rv[i])
            for p in range(3):
                for t in range(d):
                    acc = 0.0
                    for q in range(3):
                        acc += rot[q * 3 + p] * bv[i, q, t]
                    gv[i, p, t] = 2.0 * (av[i, p, t] - acc)
    return grad_arr, r_arr, deg_arr.astype(bool)
