"""Hot numeric kernels.

Everything in this module is plain scalar/ndarray float64 code so it can be
JIT-compiled by numba.  Set ``BUCHDAHL_NUMBA=0`` in the environment to select
the pure-Python/NumPy fallback (same source, no compilation); see
``benchmarks/bench_kernels.py`` for a timing comparison of the two paths.

The kernels cover:

* small-argument-stable scalar functions used by the deformed right-hand
  sides (the deformation factors must reduce to their limits exactly at
  ``z 0``, not via 0/0),
* coefficient-family evaluation for the packed parameter encoding,
* the right-hand sides of every system variant,
* an embedded Dormand-Prince 5(4) stepping loop with dense output.
"""

import math
import os

import numpy as np

NUMBA_ENABLED = os.environ.get("BUCHDAHL_NUMBA", "1") != "0"

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


# coefficient family codes for the packed encoding
FAM_CONST = 0
FAM_RECIP = 1
FAM_MONO = 2
FAM_ZERO = 3

# packed system codes
SYS_CANONICAL = 0
SYS_BUCHDAHL = 1
SYS_TWO_PARTICLE = 2

# params layout: [z, a_fam, a_p1, a_p2, b1_fam, b1_p1, b1_p2, b2_fam, b2_p1, b2_p2]
N_PARAMS = 10


# ---------------------------------------------------------------------------
# stable scalar kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def phi1(u):
    """(e^u - 1)/u with the exact limit 1.0 at u = 0."""
    if u == 0.0:
        return 1.0
    return math.expm1(u) / u


@njit(cache=True)
def phi2(u):
    """(e^u - 1 - u)/u^2 with the exact limit 0.5 at u = 0.

    The direct form loses ~2*eps/|u| relative accuracy for small u, so a
    truncated series takes over below 0.05.
    """
    au = abs(u)
    if au < 0.05:
        # sum_{k>=0} u^k/(k+2)!
        s = 1.0 / 3628800.0
        s = s * u + 1.0 / 362880.0
        s = s * u + 1.0 / 40320.0
        s = s * u + 1.0 / 5040.0
        s = s * u + 1.0 / 720.0
        s = s * u + 1.0 / 120.0
        s = s * u + 1.0 / 24.0
        s = s * u + 1.0 / 6.0
        s = s * u + 0.5
        return s
    return (math.expm1(u) - u) / (u * u)


@njit(cache=True)
def dphi1(u):
    """Derivative of phi1: (e^u (u - 1) + 1)/u^2, limit 0.5 at u = 0."""
    au = abs(u)
    if au < 0.05:
        # sum_{k>=1} k u^{k-1}/(k+1)!
        s = 9.0 / 3628800.0
        s = s * u + 8.0 / 362880.0
        s = s * u + 7.0 / 40320.0
        s = s * u + 6.0 / 5040.0
        s = s * u + 5.0 / 720.0
        s = s * u + 4.0 / 120.0
        s = s * u + 3.0 / 24.0
        s = s * u + 2.0 / 6.0
        s = s * u + 0.5
        return s
    return (math.exp(u) * (u - 1.0) + 1.0) / (u * u)


@njit(cache=True)
def log1p_over(u):
    """-ln(1 - u)/u with the exact limit 1.0 at u = 0 (requires u < 1)."""
    if u == 0.0:
        return 1.0
    return -math.log1p(-u) / u


@njit(cache=True)
def log1p_defect(u):
    """(u + ln(1 - u))/u^2 with the exact limit -0.5 at u = 0."""
    au = abs(u)
    if au < 0.05:
        # -sum_{k>=0} u^k/(k+2)
        s = -1.0 / 12.0
        s = s * u - 1.0 / 11.0
        s = s * u - 1.0 / 10.0
        s = s * u - 1.0 / 9.0
        s = s * u - 1.0 / 8.0
        s = s * u - 1.0 / 7.0
        s = s * u - 1.0 / 6.0
        s = s * u - 1.0 / 5.0
        s = s * u - 1.0 / 4.0
        s = s * u - 1.0 / 3.0
        s = s * u - 0.5
        return s
    return (u + math.log1p(-u)) / (u * u)


# ---------------------------------------------------------------------------
# coefficient families (packed encoding)
# ---------------------------------------------------------------------------

@njit(cache=True)
def coeff_eval(fam, p1, p2, s):
    """Value of the family at s: const c | alpha/s | alpha*s^r | 0."""
    if fam == FAM_CONST:
        return p1
    if fam == FAM_RECIP:
        return p1 / s
    if fam == FAM_MONO:
        return p1 * s ** p2
    return 0.0


@njit(cache=True)
def coeff_antideriv(fam, p1, p2, s):
    """Canonical antiderivative of the family at s (base-point free form)."""
    if fam == FAM_CONST:
        return p1 * s
    if fam == FAM_RECIP:
        return p1 * math.log(s)
    if fam == FAM_MONO:
        return p1 * s ** (p2 + 1.0) / (p2 + 1.0)
    return 0.0


@njit(cache=True)
def xi_eval(fam, p1, p2, x):
    """Integrating factor exp(-integral of the position coefficient).

    Reciprocal families evaluate the power form x^(-alpha) literally so the
    x < 0 branch stays real for integer alpha.
    """
    if fam == FAM_RECIP:
        return x ** (-p1)
    if fam == FAM_CONST:
        return math.exp(-p1 * x)
    if fam == FAM_MONO:
        return math.exp(-p1 * x ** (p2 + 1.0) / (p2 + 1.0))
    return 1.0


@njit(cache=True)
def phi_closed_eval(fam, p1, p2, x):
    """Closed-form antiderivative of the integrating factor.

    Only const/recip/zero families have one; monomial coefficients need
    quadrature and must not reach this kernel.
    """
    if fam == FAM_RECIP:
        if p1 == 1.0:
            return math.log(x)
        return x ** (1.0 - p1) / (1.0 - p1)
    if fam == FAM_CONST:
        if p1 == 0.0:
            return x
        return -math.exp(-p1 * x) / p1
    if fam == FAM_ZERO:
        return x
    return math.nan


@njit(cache=True)
def has_closed_phi(fam):
    return fam != FAM_MONO


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

@njit(cache=True)
def rhs_canonical(z, b1v, b2v, q, p, out):
    """Canonical-chart equations of motion, book or oscillator variant.

    The book variant is the b2v = 0 special case.  All z-dependent factors
    hit their undeformed limits exactly at z = 0.
    """
    ez = math.exp(z * q)
    out[0] = b1v * (q * phi1(z * q)) + b2v * ez
    out[1] = 1.0 - b1v * (ez * p) - z * b2v * (ez * p)


@njit(cache=True)
def rhs_buchdahl(z, afam, ap1, ap2, b1v, b2v, x, y, out):
    """Buchdahl-chart equations of motion.

    For z = 0 the closed undeformed form is used directly (bit-exact
    undeformed limit); otherwise the canonical-chart field is pushed through
    the inverse of the canonical change of variables.
    """
    xiv = xi_eval(afam, ap1, ap2, x)
    av = coeff_eval(afam, ap1, ap2, x)
    if z == 0.0:
        if b2v == 0.0:
            out[0] = y
            out[1] = av * y * y + b1v * y
        else:
            ph = phi_closed_eval(afam, ap1, ap2, x)
            out[0] = y - b2v * ph / (y * xiv * xiv)
            out[1] = (av * y * y + b1v * y
                      - b2v * (xiv + av * ph) / (xiv * xiv))
    else:
        ph = phi_closed_eval(afam, ap1, ap2, x)
        q = -y * xiv
        p = ph / (y * xiv)
        ez = math.exp(z * q)
        u = b1v * (q * phi1(z * q)) + b2v * ez
        v = 1.0 - b1v * (ez * p) - z * b2v * (ez * p)
        dx = -(u * p + q * v) / xiv
        out[0] = dx
        out[1] = -u / xiv + av * y * dx


@njit(cache=True)
def rhs_two_particle(z, b1v, b2v, q1, p1, q2, p2, out):
    """Coupled four-dimensional equations from the deformed coproduct.

    The (q2, p2) rows are written with the same groupings as the
    one-particle canonical kernel so they agree bitwise whenever the
    cross-coupling factor (e^{z q1} - 1) p1 vanishes.
    """
    e1 = math.exp(z * q1)
    e2 = math.exp(z * q2)
    out[0] = b1v * (q1 * phi1(z * q1)) * e2 + b2v * ((2.0 * e1 - 1.0) * e2)
    out[1] = 1.0 - b1v * (e1 * e2 * p1) - 2.0 * z * b2v * (e1 * e2 * p1)
    out[2] = b1v * (q2 * phi1(z * q2)) + b2v * e2
    out[3] = (1.0 - b1v * (e2 * ((e1 - 1.0) * p1 + p2))
              - z * b2v * (e2 * ((2.0 * e1 - 1.0) * p1 + p2)))


@njit(cache=True)
def rhs_packed(sys_code, params, t, y, out):
    """Dispatch on the packed system code; b coefficients evaluated at t."""
    z = params[0]
    b1v = coeff_eval(int(params[4]), params[5], params[6], t)
    b2v = coeff_eval(int(params[7]), params[8], params[9], t)
    if sys_code == SYS_CANONICAL:
        rhs_canonical(z, b1v, b2v, y[0], y[1], out)
    elif sys_code == SYS_BUCHDAHL:
        rhs_buchdahl(z, int(params[1]), params[2], params[3],
                     b1v, b2v, y[0], y[1], out)
    else:
        rhs_two_particle(z, b1v, b2v, y[0], y[1], y[2], y[3], out)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) stepping loop
# ---------------------------------------------------------------------------

# Butcher tableau
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between the 5th- and embedded 4th-order weights
DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])
# dense-output interpolation matrix (quartic in the step fraction)
DP_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
FACTOR_MIN = 0.2
FACTOR_MAX = 5.0
ORDER_EXP = -0.2  # 1/(error-estimate order)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAX_STEPS = 2


@njit(cache=True)
def _error_norm(err, y0, y1, rtol, atol):
    acc = 0.0
    n = err.shape[0]
    for i in range(n):
        sc = atol + rtol * max(abs(y0[i]), abs(y1[i]))
        r = err[i] / sc
        acc += r * r
    return math.sqrt(acc / n)


@njit(cache=True)
def _initial_step(sys_code, params, t0, y0, f0, direction, rtol, atol, span):
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = np.empty(n)
    for i in range(n):
        y1[i] = y0[i] + h0 * direction * f0[i]
    f1 = np.empty(n)
    rhs_packed(sys_code, params, t0 + h0 * direction, y1, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    return min(min(100.0 * h0, h1), span)


@njit(cache=True)
def dp5_integrate(sys_code, params, y0, t0, t1, rtol, atol,
                  max_step, min_step, first_step, max_steps, t_eval, y_eval):
    """Adaptive DP5(4) integration of a packed system.

    Fills y_eval by quartic dense output at the requested t_eval points
    (which must lie between t0 and t1 in integration order).  Returns
    (ts, ys, status, n_accepted, n_rejected, n_eval_filled, nfev, last_t)
    where ts/ys are the accepted step points.
    """
    n = y0.shape[0]
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)

    cap = 512
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    ts[0] = t0
    for i in range(n):
        ys[0, i] = y0[i]
    count = 1

    K = np.empty((7, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    err = np.empty(n)
    f0 = np.empty(n)
    rhs_packed(sys_code, params, t0, y0, f0)
    nfev = 1
    for i in range(n):
        K[0, i] = f0[i]

    finite = True
    for i in range(n):
        if not math.isfinite(f0[i]):
            finite = False
    if not finite:
        return ts[:1], ys[:1], STATUS_UNDERFLOW, 0, 0, 0, nfev, t0

    if first_step > 0.0:
        h = min(min(first_step, max_step), span)
    else:
        h = _initial_step(sys_code, params, t0, y0, f0, direction,
                          rtol, atol, span)
        nfev += 1
        if h > max_step:
            h = max_step

    t = t0
    y = y0.copy()
    n_acc = 0
    n_rej = 0
    n_filled = 0
    status = STATUS_OK

    while direction * (t1 - t) > 0.0:
        if n_acc + n_rej >= max_steps:
            status = STATUS_MAX_STEPS
            break
        hmin = max(min_step, 16.0 * 2.220446049250313e-16 * abs(t))
        if h < hmin:
            h = hmin
        if h > abs(t1 - t):
            h = abs(t1 - t)
        hd = h * direction

        # stages 2..7 (first stage reuses FSAL slot K[0])
        for s in range(1, 7):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    if s < 6:
                        acc += DP_A[s, j] * K[j, i]
                    else:
                        acc += DP_B[j] * K[j, i]
                ytmp[i] = y[i] + hd * acc
            rhs_packed(sys_code, params, t + DP_C[s] * hd, ytmp, K[s])
            nfev += 1
            if s == 6:
                for i in range(n):
                    ynew[i] = ytmp[i]

        ok = True
        for i in range(n):
            e = 0.0
            for j in range(7):
                e += DP_E[j] * K[j, i]
            err[i] = hd * e
            if not (math.isfinite(ynew[i]) and math.isfinite(err[i])):
                ok = False

        if ok:
            enorm = _error_norm(err, y, ynew, rtol, atol)
        else:
            enorm = 2.0  # force rejection on non-finite values

        if enorm <= 1.0:
            # dense output for requested points inside this step
            tnew = t + hd
            while n_filled < t_eval.shape[0] and \
                    direction * (t_eval[n_filled] - tnew) <= 0.0:
                theta = (t_eval[n_filled] - t) / hd
                th2 = theta * theta
                for i in range(n):
                    acc = 0.0
                    for j in range(7):
                        poly = (DP_P[j, 0] * theta + DP_P[j, 1] * th2
                                + DP_P[j, 2] * th2 * theta
                                + DP_P[j, 3] * th2 * th2)
                        acc += K[j, i] * poly
                    y_eval[n_filled, i] = y[i] + hd * acc
                n_filled += 1

            t = tnew
            for i in range(n):
                y[i] = ynew[i]
                K[0, i] = K[6, i]  # FSAL
            if count >= cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, n))
                for m in range(count):
                    ts2[m] = ts[m]
                    for i in range(n):
                        ys2[m, i] = ys[m, i]
                ts = ts2
                ys = ys2
            ts[count] = t
            for i in range(n):
                ys[count, i] = y[i]
            count += 1
            n_acc += 1
            if enorm == 0.0:
                factor = FACTOR_MAX
            else:
                factor = SAFETY * enorm ** ORDER_EXP
                if factor > FACTOR_MAX:
                    factor = FACTOR_MAX
                elif factor < FACTOR_MIN:
                    factor = FACTOR_MIN
            h = min(h * factor, max_step)
        else:
            n_rej += 1
            if ok:
                factor = SAFETY * enorm ** ORDER_EXP
                if factor < FACTOR_MIN:
                    factor = FACTOR_MIN
            else:
                factor = FACTOR_MIN
            if h <= hmin:
                status = STATUS_UNDERFLOW
                break
            h = h * factor

    return (ts[:count], ys[:count], status, n_acc, n_rej, n_filled,
            nfev, t)


def warmup():
    """Trigger JIT compilation of the packed kernels (no-op on fallback)."""
    params = np.zeros(N_PARAMS)
    params[1] = FAM_ZERO
    params[4] = FAM_CONST
    params[5] = 1.0
    params[7] = FAM_ZERO
    out = np.empty(2)
    rhs_packed(SYS_CANONICAL, params, 1.0, np.array([1.0, 1.0]), out)
    t_eval = np.array([1.5])
    y_eval = np.empty((1, 2))
    dp5_integrate(SYS_CANONICAL, params, np.array([1.0, 1.0]), 1.0, 2.0,
                  1e-8, 1e-10, math.inf, 0.0, 0.0, 10000, t_eval, y_eval)
