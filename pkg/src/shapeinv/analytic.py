"""Mode-matching series for plane-wave scattering by a penetrable disk.

Used as an independent oracle for the finite element solver.
"""

import numpy as np
from scipy.special import h1vp, hankel1, jv, jvp


def circle_coefficients(radius, kappa0, alpha_in, alpha_out, n_in, n_out, n_modes=40):
    """Interior and scattered mode coefficients for orders ``-n_modes..n_modes``.

    With ``u^i = sum_n i^n J_n(k_out rho) e^{in(phi - theta)}`` the field is
    ``b_n J_n(k_in rho)`` inside and ``u^i + a_n H_n(k_out rho)`` outside, where
    the two unknowns follow from continuity of ``u`` and ``alpha du/drho``.

    Returns
    -------
    orders, a, b : ndarray
    """
    k_in = kappa0 * np.sqrt(n_in / alpha_in)
    k_out = kappa0 * np.sqrt(n_out / alpha_out)
    orders = np.arange(-n_modes, n_modes + 1)
    a = np.zeros(orders.size, dtype=complex)
    b = np.zeros(orders.size, dtype=complex)
    zi, zo = k_in * radius, k_out * radius
    with np.errstate(all="ignore"):
        for idx, n in enumerate(orders):
            inc = 1j ** n
            m = np.array([
                [jv(n, zi), -hankel1(n, zo)],
                [alpha_in * k_in * jvp(n, zi), -alpha_out * k_out * h1vp(n, zo)],
            ])
            rhs = inc * np.array([jv(n, zo), alpha_out * k_out * jvp(n, zo)])
            if not np.all(np.isfinite(m)):
                continue
            # column scaling keeps the 2x2 solve well conditioned for large |n|
            scale = np.abs(m).max(axis=0)
            sol = np.linalg.solve(m / scale, rhs) / scale
            if np.all(np.isfinite(sol)):
                b[idx], a[idx] = sol
    return orders, a, b


def circle_field(points, radius, kappa0, alpha_in=1.0, alpha_out=1.0, n_in=0.9, n_out=1.0,
                 direction=(1.0, 0.0), n_modes=40, part="total"):
    """Evaluate the series solution at physical points.

    Parameters
    ----------
    points : (m, 2) array_like
    part : {"total", "scattered"}
        Scattered means total minus the incident plane wave, in both media.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rho = np.hypot(pts[:, 0], pts[:, 1])
    theta = np.arctan2(direction[1], direction[0])
    phi = np.arctan2(pts[:, 1], pts[:, 0]) - theta
    k_in = kappa0 * np.sqrt(n_in / alpha_in)
    k_out = kappa0 * np.sqrt(n_out / alpha_out)
    orders, a, b = circle_coefficients(radius, kappa0, alpha_in, alpha_out, n_in, n_out, n_modes)
    d = np.asarray(direction, dtype=float)
    inc = np.exp(1j * k_out * pts @ d)
    inside = rho < radius
    u = np.zeros(pts.shape[0], dtype=complex)
    with np.errstate(all="ignore"):
        for n, an, bn in zip(orders, a, b):
            e = np.exp(1j * n * phi)
            if np.any(inside) and bn != 0:
                u[inside] += bn * jv(n, k_in * rho[inside]) * e[inside]
            if np.any(~inside) and an != 0:
                term = an * hankel1(n, k_out * rho[~inside]) * e[~inside]
                u[~inside] += np.where(np.isfinite(term), term, 0.0)
    if part == "scattered":
        u[inside] -= inc[inside]
        return u
    if part != "total":
        raise ValueError("part must be 'total' or 'scattered'")
    u[~inside] += inc[~inside]
    return u
