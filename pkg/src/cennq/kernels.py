"""Inner loops for the floating and fixed-point CeNN engines.

Every kernel exists twice: a loop version compiled by numba and a
vectorised numpy version.  ``float_run`` / ``fixed_run`` dispatch to one of
them according to :data:`cennq._accel.USE_NUMBA`.

Template coefficient ``t[k + 1, l + 1]`` multiplies the neighbour at
``(i + k, j + l)`` (correlation orientation, as in the cell equation).
Boundary code 0 means zero virtual cells, 1 means replicate the edge.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

BOUNDARY_ZERO = 0
BOUNDARY_REPLICATE = 1


# ---------------------------------------------------------------------------
# floating point
# ---------------------------------------------------------------------------

def _float_run_py(x0, u, a, b, bias, dt, iterations, boundary, tol):
    m, n = x0.shape
    n_sched = a.shape[0]
    x = x0.copy()
    xn = np.empty_like(x)
    y = np.empty_like(x)
    bu = np.empty_like(x)
    steps = 0
    for it in range(iterations):
        s = it % n_sched
        for i in range(m):
            for j in range(n):
                v = x[i, j]
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                y[i, j] = v
        if it == 0 or n_sched > 1:
            for i in range(m):
                for j in range(n):
                    acc = 0.0
                    for k in range(-1, 2):
                        ii = i + k
                        if ii < 0 or ii >= m:
                            if boundary == 0:
                                continue
                            ii = 0 if ii < 0 else m - 1
                        for l in range(-1, 2):
                            jj = j + l
                            if jj < 0 or jj >= n:
                                if boundary == 0:
                                    continue
                                jj = 0 if jj < 0 else n - 1
                            acc += b[s, k + 1, l + 1] * u[ii, jj]
                    bu[i, j] = acc
        delta = 0.0
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for k in range(-1, 2):
                    ii = i + k
                    if ii < 0 or ii >= m:
                        if boundary == 0:
                            continue
                        ii = 0 if ii < 0 else m - 1
                    for l in range(-1, 2):
                        jj = j + l
                        if jj < 0 or jj >= n:
                            if boundary == 0:
                                continue
                            jj = 0 if jj < 0 else n - 1
                        acc += a[s, k + 1, l + 1] * y[ii, jj]
                xv = x[i, j]
                nv = xv + dt[s] * (-xv + bias[s] + acc + bu[i, j])
                xn[i, j] = nv
                d = abs(nv - xv)
                if d > delta:
                    delta = d
        x, xn = xn, x
        steps += 1
        if tol > 0.0 and delta < tol:
            break
    return x, steps


_float_run_nb = njit(_float_run_py)


def _neighbourhood_sum(t, z, boundary):
    mode = "constant" if boundary == BOUNDARY_ZERO else "edge"
    zp = np.pad(z, 1, mode=mode)
    m, n = z.shape
    out = np.zeros_like(z)
    for k in range(3):
        for l in range(3):
            c = t[k, l]
            if c != 0.0:
                out += c * zp[k:k + m, l:l + n]
    return out


def _float_run_np(x0, u, a, b, bias, dt, iterations, boundary, tol):
    n_sched = a.shape[0]
    x = x0.copy()
    bu = None
    steps = 0
    for it in range(iterations):
        s = it % n_sched
        if bu is None or n_sched > 1:
            bu = _neighbourhood_sum(b[s], u, boundary)
        y = np.clip(x, -1.0, 1.0)
        xn = x + dt[s] * (-x + bias[s] + _neighbourhood_sum(a[s], y, boundary) + bu)
        delta = np.max(np.abs(xn - x))
        x = xn
        steps += 1
        if tol > 0.0 and delta < tol:
            break
    return x, steps


def float_run(x0, u, a, b, bias, dt, iterations, boundary=BOUNDARY_ZERO, tol=0.0, use_numba=None):
    """Run ``iterations`` Euler steps and return ``(state, steps_taken)``.

    ``a``/``b`` are ``(T, 3, 3)`` schedules, ``bias``/``dt`` length ``T``;
    iteration ``n`` uses entry ``n % T``.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _float_run_nb if use_numba else _float_run_np
    return fn(
        np.ascontiguousarray(x0, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(bias, dtype=np.float64),
        np.ascontiguousarray(dt, dtype=np.float64),
        int(iterations), int(boundary), float(tol),
    )


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------
# Operands are widened by ``guard`` fractional bits before shifting, so every
# right shift by up to ``guard`` places is exact and the sum is independent of
# evaluation order.  Write-back rounds half up and saturates to ``word_bits``.

def _shift_py(v, sign, exp):
    if sign == 0:
        return 0
    if exp >= 0:
        r = v << exp
    else:
        r = v >> (-exp)
    if sign < 0:
        r = -r
    return r


_shift_nb = njit(_shift_py)


def _make_fixed_run(shift):
    def run(x0, u, a_sign, a_exp, b_sign, b_exp, bias, dt_exp, frac_bits, guard,
            word_bits, iterations, boundary):
        m, n = x0.shape
        one = np.int64(1) << frac_bits
        hi = (np.int64(1) << (word_bits - 1)) - 1
        lo = -(np.int64(1) << (word_bits - 1))
        half = np.int64(1) << (guard - 1) if guard > 0 else np.int64(0)
        x = x0.copy()
        xn = np.empty_like(x)
        y = np.empty_like(x)
        bu = np.zeros_like(x)
        saturated = 0
        for i in range(m):
            for j in range(n):
                acc = np.int64(0)
                for k in range(-1, 2):
                    ii = i + k
                    if ii < 0 or ii >= m:
                        if boundary == 0:
                            continue
                        ii = 0 if ii < 0 else m - 1
                    for l in range(-1, 2):
                        jj = j + l
                        if jj < 0 or jj >= n:
                            if boundary == 0:
                                continue
                            jj = 0 if jj < 0 else n - 1
                        acc += shift(u[ii, jj] << guard, b_sign[k + 1, l + 1], b_exp[k + 1, l + 1])
                bu[i, j] = acc
        for _ in range(iterations):
            for i in range(m):
                for j in range(n):
                    v = x[i, j]
                    if v > one:
                        v = one
                    elif v < -one:
                        v = -one
                    y[i, j] = v
            for i in range(m):
                for j in range(n):
                    xw = x[i, j] << guard
                    acc = -xw + (bias << guard) + bu[i, j]
                    for k in range(-1, 2):
                        ii = i + k
                        if ii < 0 or ii >= m:
                            if boundary == 0:
                                continue
                            ii = 0 if ii < 0 else m - 1
                        for l in range(-1, 2):
                            jj = j + l
                            if jj < 0 or jj >= n:
                                if boundary == 0:
                                    continue
                                jj = 0 if jj < 0 else n - 1
                            acc += shift(y[ii, jj] << guard, a_sign[k + 1, l + 1], a_exp[k + 1, l + 1])
                    nw = xw + shift(acc, 1, dt_exp)
                    r = (nw + half) >> guard
                    if r > hi:
                        r = hi
                        saturated += 1
                    elif r < lo:
                        r = lo
                        saturated += 1
                    xn[i, j] = r
            x, xn = xn, x
        return x, saturated
    return run


_fixed_run_py = _make_fixed_run(_shift_py)
_fixed_run_nb = njit(_make_fixed_run(_shift_nb))


def _shift_array(v, sign, exp):
    if sign == 0:
        return np.zeros_like(v)
    r = np.left_shift(v, exp) if exp >= 0 else np.right_shift(v, -exp)
    return -r if sign < 0 else r


def _fixed_neighbourhood(sign, exp, z, boundary):
    mode = "constant" if boundary == BOUNDARY_ZERO else "edge"
    zp = np.pad(z, 1, mode=mode)
    m, n = z.shape
    out = np.zeros_like(z)
    for k in range(3):
        for l in range(3):
            if sign[k, l] != 0:
                out += _shift_array(zp[k:k + m, l:l + n], int(sign[k, l]), int(exp[k, l]))
    return out


def _fixed_run_np(x0, u, a_sign, a_exp, b_sign, b_exp, bias, dt_exp, frac_bits, guard,
                  word_bits, iterations, boundary):
    one = 1 << frac_bits
    hi = (1 << (word_bits - 1)) - 1
    lo = -(1 << (word_bits - 1))
    half = (1 << (guard - 1)) if guard > 0 else 0
    x = x0.copy()
    bu = _fixed_neighbourhood(b_sign, b_exp, np.left_shift(u, guard), boundary)
    saturated = 0
    for _ in range(iterations):
        y = np.clip(x, -one, one)
        xw = np.left_shift(x, guard)
        acc = -xw + (int(bias) << guard) + bu
        acc += _fixed_neighbourhood(a_sign, a_exp, np.left_shift(y, guard), boundary)
        nw = xw + _shift_array(acc, 1, dt_exp)
        r = np.right_shift(nw + half, guard)
        saturated += int(np.count_nonzero((r > hi) | (r < lo)))
        x = np.clip(r, lo, hi)
    return x, saturated


def fixed_run(x0, u, a_sign, a_exp, b_sign, b_exp, bias, dt_exp, frac_bits, guard=16,
              word_bits=18, iterations=1, boundary=BOUNDARY_ZERO, use_numba=None):
    """Integer Euler iterations on raw fixed-point words.

    Returns ``(state_raw, saturation_events)``.
    """
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _fixed_run_nb if use_numba else _fixed_run_np
    as_i64 = lambda z: np.ascontiguousarray(z, dtype=np.int64)  # noqa: E731
    x, sat = fn(
        as_i64(x0), as_i64(u), as_i64(a_sign), as_i64(a_exp), as_i64(b_sign), as_i64(b_exp),
        np.int64(bias), int(dt_exp), int(frac_bits), int(guard), int(word_bits),
        int(iterations), int(boundary),
    )
    return x, int(sat)
