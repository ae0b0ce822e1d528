"""Star-shaped boundary parametrization and its uniform prior.

The radius of the scatterer is written as a truncated Fourier expansion

    r(y, phi) = r0 + sum_j beta_j * y_j * psi_j(phi),   y in [-1, 1]^J,

with ``psi_j`` a sine/cosine pair of frequency ``k(j)`` scaled to unit
``C^{0,1}`` norm (sup-norm plus Lipschitz constant), so ``psi_j`` is the raw
harmonic divided by ``1 + k(j)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

# 4096 angles plus one Newton polish step for geometric minima
DEFAULT_ANGLE_GRID = 4096


def frequency(j):
    """Harmonic frequency of basis function ``j`` (1-based)."""
    j = np.asarray(j)
    return np.where(j % 2 == 1, (j + 1) // 2, j // 2)


def basis_eval(j, phi, derivative=0):
    """Evaluate the normalized basis function ``psi_j`` at ``phi``.

    Odd ``j`` are sines of frequency ``(j + 1) / 2``, even ``j`` cosines of
    frequency ``j / 2``. Both are divided by ``1 + k`` so that the
    ``C^{0,1}`` norm equals one.

    Parameters
    ----------
    j : int
        1-based index of the basis function.
    phi : float or array_like
        Angles in radians.
    derivative : {0, 1, 2}
        Order of the angular derivative to return.
    """
    j = int(j)
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    if derivative not in (0, 1, 2):
        raise ValueError("derivative must be 0, 1 or 2")
    k = (j + 1) // 2 if j % 2 == 1 else j // 2
    phi = np.asarray(phi, dtype=float)
    scale = 1.0 / (1.0 + k)
    s, c = np.sin(k * phi), np.cos(k * phi)
    if j % 2 == 1:
        val = (s, k * c, -k * k * s)[derivative]
    else:
        val = (c, -k * s, -k * k * c)[derivative]
    return scale * val


def basis_matrix(n_modes, phi, derivative=0):
    """Matrix ``B[i, j-1] = psi_j^{(derivative)}(phi_i)`` for ``j = 1..n_modes``."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    out = np.empty((phi.size, n_modes))
    for j in range(1, n_modes + 1):
        out[:, j - 1] = basis_eval(j, phi, derivative)
    return out


def _normalizer(s, eps, n_direct=10_000):
    """``sum_{k>=1} 1 / (1 + s k^(2+eps))`` to relative accuracy ~1e-15.

    Terms up to ``N`` are summed directly; the remainder uses the
    Euler-Maclaurin correction around the integral tail, which is summed in
    closed form as a convergent series in ``1 / (s x^p)``.
    """
    p = 2.0 + eps
    n = max(n_direct, int(np.ceil((100.0 / s) ** (1.0 / p))) + 1)
    k = np.arange(1, n + 1, dtype=float)
    head = np.sum(1.0 / (1.0 + s * k**p))
    return head + _tail_after(n, s, p)


def _tail_after(n, s, p):
    """Approximate ``sum_{k>n} 1/(1 + s k^p)``; requires ``s n^p >> 1``."""
    # integral from n to infinity, expanded in powers of 1/(s x^p)
    integral = 0.0
    for m in range(60):
        term = (-1.0) ** m * s ** -(m + 1) * n ** (1.0 - p * (m + 1)) / (p * (m + 1) - 1.0)
        integral += term
        if abs(term) < 1e-18 * abs(integral):
            break
    fn = 1.0 / (1.0 + s * n**p)
    dfn = -s * p * n ** (p - 1.0) * fn**2
    # sum_{k>n} f(k) = int_n^inf f - f(n)/2 - f'(n)/12 + O(f''')
    return integral - 0.5 * fn - dfn / 12.0


@dataclass(frozen=True)
class CoefficientSequence:
    """Deterministic coefficients ``beta_j`` with Whittle-Matern-like decay.

    ``betas`` holds the first ``J`` entries of the infinite sequence. The
    full sequence sums to ``r0 / 2`` in absolute value, i.e. the variation
    factor ``gamma_beta`` is one half.
    """

    betas: np.ndarray
    r0: float
    s: float
    eps: float
    normalizer: float

    @property
    def n_modes(self):
        return self.betas.size

    @property
    def gamma_beta(self):
        # exact value for the infinite sequence
        return 0.5

    def pair_value(self, k):
        """``beta_{2k-1} = beta_{2k}`` for pair index ``k >= 1`` (vectorized)."""
        k = np.asarray(k, dtype=float)
        p = 2.0 + self.eps
        return self.r0 / (4.0 * self.normalizer * (1.0 + self.s * k**p))

    def partial_sums(self, n_terms):
        """Cumulative ``sum_{j<=J} |beta_j|`` for ``J = 1..n_terms``."""
        j = np.arange(1, n_terms + 1)
        return np.cumsum(self.pair_value((j + 1) // 2))

    def tail_sum(self, n_terms):
        """``sum_{j>n_terms} |beta_j|`` of the infinite sequence."""
        return 0.5 * self.r0 - self.partial_sums(n_terms)[-1] if n_terms else 0.5 * self.r0

    def truncate(self, n_modes):
        j = np.arange(1, n_modes + 1)
        return CoefficientSequence(
            betas=self.pair_value((j + 1) // 2),
            r0=self.r0, s=self.s, eps=self.eps, normalizer=self.normalizer,
        )


def whittle_matern_coeffs(r0, s, eps, n_modes):
    """Coefficient sequence ``beta_{2j-1} = beta_{2j} = r0 / (4 S (1 + s j^(2+eps)))``.

    ``S = sum_k 1 / (1 + s k^(2+eps))`` so that ``sum_j |beta_j| = r0 / 2``.
    """
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if r0 <= 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    if n_modes < 0:
        raise ValueError("n_modes must be non-negative")
    seq = CoefficientSequence(np.empty(0), float(r0), float(s), float(eps), _normalizer(s, eps))
    return seq.truncate(int(n_modes))


def _l2_variance_per_mode(coeffs: CoefficientSequence, j):
    # E[Y^2] = 1/3 and ||psi_j||_{L2}^2 = pi / (1 + k)^2
    j = np.asarray(j)
    k = frequency(j)
    beta = coeffs.pair_value(k)
    return beta**2 / 3.0 * np.pi / (1.0 + k) ** 2


def total_variance(coeffs: CoefficientSequence, n_direct=200_000):
    """Prior variance of the L2 norm of the radius fluctuation (infinite sum)."""
    k = np.arange(1, n_direct + 1)
    pair = 2.0 * _l2_variance_per_mode(coeffs, 2 * k)
    # pair terms decay like k^-(2p+2): bound the rest by the integral
    p = 2.0 + coeffs.eps
    q = 2.0 * p + 2.0
    tail = pair[-1] * n_direct / (q - 1.0)
    return float(np.sum(pair) + tail)


def truncation_level(coeffs: CoefficientSequence, fraction=0.95, max_modes=100_000):
    """Smallest ``J`` whose truncated variance covers ``fraction`` of the total."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    target = fraction * total_variance(coeffs)
    cum = np.cumsum(_l2_variance_per_mode(coeffs, np.arange(1, max_modes + 1)))
    idx = int(np.searchsorted(cum, target * (1.0 - 1e-14)))
    if idx >= max_modes:
        raise RuntimeError("variance fraction not reached within max_modes")
    return idx + 1


@dataclass(frozen=True)
class RadiusField:
    """One realization ``r(y, .)`` of the star-shaped boundary."""

    y: np.ndarray
    coeffs: CoefficientSequence

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.size != self.coeffs.n_modes:
            raise ValueError(f"expected {self.coeffs.n_modes} coefficients, got {y.size}")
        if np.any(np.abs(y) > 1.0):
            raise ValueError("coefficients y must lie in [-1, 1]")
        object.__setattr__(self, "y", y)

    @property
    def r0(self):
        return self.coeffs.r0

    @property
    def weights(self):
        """``beta_j * y_j``."""
        return self.coeffs.betas * self.y

    def radius(self, phi, derivative=0):
        phi = np.asarray(phi, dtype=float)
        out = basis_matrix(self.y.size, phi.reshape(-1), derivative) @ self.weights
        if derivative == 0:
            out = out + self.r0
        return out.reshape(phi.shape)

    def displacement(self, phi, derivative=0):
        """Fluctuation ``r(y, phi) - r0`` (or its derivative)."""
        phi = np.asarray(phi, dtype=float)
        out = basis_matrix(self.y.size, phi.reshape(-1), derivative) @ self.weights
        return out.reshape(phi.shape)

    def max_radius(self, n_grid=DEFAULT_ANGLE_GRID):
        phi = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
        return float(np.max(self.radius(phi)))

    def min_radius(self, n_grid=DEFAULT_ANGLE_GRID):
        phi = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
        return float(np.min(self.radius(phi)))


def eval_radius(field: RadiusField, phi):
    """``r0 + sum_j beta_j y_j psi_j(phi)``."""
    return field.radius(phi)


@dataclass(frozen=True)
class PriorSpec:
    """Uniform prior on ``y`` pushed forward to radius fields."""

    coeffs: CoefficientSequence
    seed: int | None = None
    basis: str = "fourier-c01"

    @property
    def n_modes(self):
        return self.coeffs.n_modes

    def rng(self):
        return np.random.default_rng(self.seed)

    def mean_radius(self, phi):
        return np.full_like(np.asarray(phi, dtype=float), self.coeffs.r0)

    def std_radius(self, phi):
        """Pointwise prior standard deviation of ``r(., phi)``."""
        b = basis_matrix(self.n_modes, np.asarray(phi, dtype=float).reshape(-1))
        var = (b**2) @ (self.coeffs.betas**2) / 3.0
        return np.sqrt(var).reshape(np.shape(phi))


def sample_coefficients(spec: PriorSpec, count, rng=None):
    """Draw ``count x J`` i.i.d. uniform coefficients on ``[-1, 1]``."""
    rng = spec.rng() if rng is None else rng
    return rng.uniform(-1.0, 1.0, size=(int(count), spec.n_modes))


def sample_prior(spec: PriorSpec, count, rng=None):
    """Draw ``count`` radius fields from the prior; reproducible given the seed."""
    if count == 0:
        return []
    ys = sample_coefficients(spec, count, rng)
    return [RadiusField(y, spec.coeffs) for y in ys]


def star_shape_margin(field: RadiusField, n_grid=DEFAULT_ANGLE_GRID):
    """Minimum over the boundary of ``x . n(x) = r^2 / sqrt(r^2 + r'^2)``.

    The minimum is located on a uniform angle grid and refined with a single
    Newton step on the derivative of ``x . n``.
    """
    phi = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)

    def support(p):
        r, dr = field.radius(p), field.radius(p, 1)
        return r**2 / np.sqrt(r**2 + dr**2)

    vals = support(phi)
    i = int(np.argmin(vals))
    best = vals[i]
    # Newton polish with central differences of the smooth support function
    d = TWO_PI / n_grid * 1e-2
    p0 = phi[i]
    f_m, f_0, f_p = support(np.array([p0 - d, p0, p0 + d]))
    curv = (f_p - 2 * f_0 + f_m) / d**2
    if curv > 0:
        p1 = p0 - (f_p - f_m) / (2 * d) / curv
        if abs(p1 - p0) < TWO_PI / n_grid:
            best = min(best, float(support(np.array([p1]))[0]))
    return float(best)


def star_shape_constant(d, gamma_beta, r0_inf, r0_c01):
    """Fraction ``gamma`` such that each scatterer is star-shaped w.r.t. a ball
    of radius ``gamma * diam``.

    Parameters
    ----------
    d : {2, 3}
        Space dimension.
    gamma_beta : float
        Relative size of the shape variation, in (0, 1).
    r0_inf : float
        Infimum of the nominal radius.
    r0_c01 : float
        ``C^{0,1}`` norm of the nominal radius (equals ``r0`` when constant).
    """
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    if not 0.0 < gamma_beta < 1.0:
        raise ValueError("gamma_beta must lie in (0, 1)")
    base = ((1.0 - gamma_beta) * r0_inf / (np.sqrt(2.0) * (1.0 + gamma_beta) * r0_c01)) ** 2
    if d == 2:
        return float(base)
    factor = (1.0 / ((1.0 - gamma_beta) * r0_inf) + 1.0) * (1.0 + gamma_beta) * r0_c01 + 1.0
    return float(0.5 * base / factor)
