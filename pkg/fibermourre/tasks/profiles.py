'''
profiles.py
===========

Overview
--------

Smooth compactly supported profiles and their exact derivatives:

* psi(x) = exp(-1/x) for x > 0, zero otherwise,
* the smooth step s(x) = psi(x) / (psi(x) + psi(1 - x)), 0 for x <= 0 and
  1 for x >= 1,
* the mollifier phi(t) = exp(-1 / (1 - t^2)) on |t| < 1,
* square roots of steps (partition profiles g with g^2 + g'^2 = 1).

All functions are vectorized over numpy arrays.

Class and method documentation
------------------------------

'''

import numpy as np


def psi(x):

    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])

    return out


def _parts(x):

    x = np.asarray(x, dtype=float)
    a = psi(x)
    b = psi(1.0 - x)

    return x, a, b, a + b


def step(x):
    '''Smooth step: 0 for x <= 0, 1 for x >= 1.'''

    _, a, _, den = _parts(x)

    return a / den


def step_derivative(x):

    x, a, b, den = _parts(x)
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    out[inner] = a[inner] * b[inner] * (1.0 / xi ** 2 + 1.0 / (1.0 - xi) ** 2) \
        / den[inner] ** 2

    return out


def sqrt_step(x):
    '''sqrt(s(x)) and its derivative.'''

    x, a, b, den = _parts(x)
    f = np.sqrt(a / den)
    df = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    # s'/s = psi(1-x) (1/x^2 + 1/(1-x)^2) / den
    df[inner] = 0.5 * f[inner] * b[inner] * \
        (1.0 / xi ** 2 + 1.0 / (1.0 - xi) ** 2) / den[inner]

    return f, df


def sqrt_co_step(x):
    '''sqrt(1 - s(x)) and its derivative.'''

    x, a, b, den = _parts(x)
    f = np.sqrt(b / den)
    df = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    df[inner] = -0.5 * f[inner] * a[inner] * \
        (1.0 / xi ** 2 + 1.0 / (1.0 - xi) ** 2) / den[inner]

    return f, df


def plateau(x, lo, inner_lo, inner_hi, hi):
    '''
    Cutoff equal to 1 on [inner_lo, inner_hi] and supported in (lo, hi).
    '''

    x = np.asarray(x, dtype=float)

    return step((x - lo) / (inner_lo - lo)) * step((hi - x) / (hi - inner_hi))


def mollifier(points, center, radius):
    '''
    phi(t) = exp(-1/(1 - t^2)) of t = |k - center| / radius and its
    gradient in k.

    Returns:
        (N,) values and (d, N) gradients.
    '''

    diff = np.atleast_2d(points) - np.asarray(center, dtype=float)[None, :]
    t2 = np.sum(diff ** 2, axis=1) / radius ** 2
    value = np.zeros(len(diff))
    grad = np.zeros((diff.shape[1], len(diff)))

    inside = t2 < 1.0
    one_minus = 1.0 - t2[inside]
    value[inside] = np.exp(-1.0 / one_minus)
    factor = -2.0 * value[inside] / one_minus ** 2 / radius ** 2
    grad[:, inside] = factor[None, :] * diff[inside].T

    return value, grad


def radial_step(points, center, full, zero):
    '''
    Radial profile equal to 1 for |k - center| <= full and 0 from ``zero``
    on, with its gradient.
    '''

    diff = np.atleast_2d(points) - np.asarray(center, dtype=float)[None, :]
    r = np.sqrt(np.sum(diff ** 2, axis=1))
    width = zero - full
    arg = (zero - r) / width
    value = step(arg)

    slope = -step_derivative(arg) / width
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = np.where(r > 0, diff.T / np.where(r > 0, r, 1.0), 0.0)

    return value, slope[None, :] * unit


def plateau_derivative(x, lo, inner_lo, inner_hi, hi):

    x = np.asarray(x, dtype=float)
    wl = inner_lo - lo
    wh = hi - inner_hi
    left = (x - lo) / wl
    right = (hi - x) / wh

    return step_derivative(left) / wl * step(right) - \
        step(left) * step_derivative(right) / wh
