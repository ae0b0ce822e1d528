"""P1 finite element solver for the Helmholtz transmission problem.

The scattered field ``u = u^T - u^i`` solves

    -div(alpha grad u) - kappa0^2 n u = div((alpha - alpha_out) grad u^i)
                                       + kappa0^2 (n - n_out) u^i

on the fixed reference mesh. Sample-dependent interfaces enter through a
radial domain mapping, and radiation is imposed with an annular PML closed
by a homogeneous Dirichlet condition. The bilinear form is complex
symmetric (no conjugation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import C_LIGHT, EXTERIOR, INTERIOR, MAPPED, PML, Mesh, MeshConfig, build_disk_mesh, locate_points
from .shape import RadiusField

# edge-midpoint rule, exact for quadratics
QUAD_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
QUAD_WEIGHTS = np.full(3, 1.0 / 3.0)
RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when the discrete system cannot be solved reliably."""


class MappingError(ValueError):
    """Raised when the domain mapping is not orientation preserving."""


@dataclass(frozen=True)
class PhysicsParams:
    """Material and excitation parameters.

    ``kappa0`` is derived from ``frequency`` and ``c`` unless given explicitly.
    ``sigma_pml`` is the PML absorption at the outer boundary.
    """

    frequency: float = 1.0e9
    c: float = C_LIGHT
    alpha_in: float = 1.0
    alpha_out: float = 1.0
    n_in: float = 0.9
    n_out: float = 1.0
    direction: tuple = (1.0, 0.0)
    sigma_pml: float = 1.0e5
    dim: int = 2
    kappa: float | None = None

    def __post_init__(self):
        for name in ("alpha_in", "alpha_out", "n_in", "n_out", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kappa is None and not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.sigma_pml < 0:
            raise ValueError("sigma_pml must be non-negative")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (2,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit 2-vector, got {self.direction}")
        object.__setattr__(self, "direction", (float(d[0]), float(d[1])))

    @property
    def kappa0(self):
        if self.kappa is not None:
            return float(self.kappa)
        return 2.0 * np.pi * self.frequency / self.c

    @property
    def k_out(self):
        """Wavenumber of the incident plane wave in the outer medium."""
        return self.kappa0 * np.sqrt(self.n_out / self.alpha_out)

    @property
    def contrast_ordered(self):
        """``n_in / n_out <= alpha_in / alpha_out``."""
        return self.n_in / self.n_out <= self.alpha_in / self.alpha_out

    @property
    def strict_chain(self):
        """``n_in / n_out < 1 < alpha_in / alpha_out``."""
        return self.n_in / self.n_out < 1.0 < self.alpha_in / self.alpha_out

    def with_kappa(self, kappa):
        return PhysicsParams(self.frequency, self.c, self.alpha_in, self.alpha_out, self.n_in,
                             self.n_out, self.direction, self.sigma_pml, self.dim, kappa)

    def incident(self, x):
        """Plane wave ``exp(i k_out d . x)`` and its gradient."""
        x = np.asarray(x, dtype=float)
        d = np.asarray(self.direction)
        u = np.exp(1j * self.k_out * (x @ d))
        grad = 1j * self.k_out * u[..., None] * d
        return u, grad


@dataclass(frozen=True)
class DomainMapping:
    """Radial map ``rho = rho_hat + dr(phi) chi(rho_hat)``.

    ``chi`` is the hat function with ``chi(rho_a) = 0``, ``chi(r0) = 1`` and
    ``chi(R_map) = 0``; the map is the identity outside ``[rho_a, R_map]``.
    """

    field: RadiusField | None
    rho_a: float
    r0: float
    R_map: float

    def __post_init__(self):
        if not 0 < self.rho_a < self.r0 < self.R_map:
            raise ValueError("mapping breakpoints must satisfy 0 < rho_a < r0 < R_map")

    def displacement(self, phi, derivative=0):
        phi = np.asarray(phi, dtype=float)
        if self.field is None:
            return np.zeros_like(phi)
        return self.field.displacement(phi, derivative)

    def segment(self, rho_hat):
        """Piece of ``chi``: 0 inside ``rho_a``, 1 rising, 2 falling, 3 outside."""
        return np.searchsorted([self.rho_a, self.r0, self.R_map], rho_hat, side="right")

    def chi(self, rho_hat, segment=None):
        """Hat function and its derivative, extended linearly on the given piece."""
        rho_hat = np.asarray(rho_hat, dtype=float)
        seg = self.segment(rho_hat) if segment is None else np.broadcast_to(segment, rho_hat.shape)
        up = 1.0 / (self.r0 - self.rho_a)
        down = -1.0 / (self.R_map - self.r0)
        val = np.where(seg == 1, (rho_hat - self.rho_a) * up,
                       np.where(seg == 2, (rho_hat - self.R_map) * down, 0.0))
        der = np.where(seg == 1, up, np.where(seg == 2, down, 0.0))
        return val, der

    def apply(self, x_hat, segment=None):
        """Map reference points to physical points."""
        x_hat = np.asarray(x_hat, dtype=float)
        rho_hat = np.hypot(x_hat[..., 0], x_hat[..., 1])
        phi = np.arctan2(x_hat[..., 1], x_hat[..., 0])
        chi, _ = self.chi(rho_hat, segment)
        rho = rho_hat + self.displacement(phi) * chi
        return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)

    def jacobian(self, x_hat, segment=None):
        """Cartesian Jacobian ``J`` and ``det J`` at reference points."""
        x_hat = np.asarray(x_hat, dtype=float)
        rho_hat = np.hypot(x_hat[..., 0], x_hat[..., 1])
        phi = np.arctan2(x_hat[..., 1], x_hat[..., 0])
        chi, dchi = self.chi(rho_hat, segment)
        dr, ddr = self.displacement(phi), self.displacement(phi, 1)
        rho = rho_hat + dr * chi
        with np.errstate(divide="ignore", invalid="ignore"):
            f01 = np.where(rho_hat > 0, ddr * chi / rho_hat, 0.0)
            f11 = np.where(rho_hat > 0, rho / rho_hat, 1.0)
        f00 = 1.0 + dr * dchi
        c, s = np.cos(phi), np.sin(phi)
        # J = Q F Q^T with Q = [e_rho, e_phi], F = [[f00, f01], [0, f11]]
        jac = np.empty(x_hat.shape[:-1] + (2, 2))
        jac[..., 0, 0] = f00 * c * c - f01 * c * s + f11 * s * s
        jac[..., 0, 1] = f00 * c * s + f01 * c * c - f11 * c * s
        jac[..., 1, 0] = f00 * s * c - f01 * s * s - f11 * s * c
        jac[..., 1, 1] = f00 * s * s + f01 * s * c + f11 * c * c
        return jac, f00 * f11

    def inverse(self, x):
        """Pull physical points back to the reference configuration."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rho = np.hypot(x[:, 0], x[:, 1])
        phi = np.arctan2(x[:, 1], x[:, 0])
        dr = self.displacement(phi)
        up = 1.0 / (self.r0 - self.rho_a)
        down = 1.0 / (self.R_map - self.r0)
        rho_hat = rho.copy()
        rising = (rho > self.rho_a) & (rho < self.r0 + dr)
        falling = (rho >= self.r0 + dr) & (rho < self.R_map)
        rho_hat[rising] = (rho[rising] + dr[rising] * self.rho_a * up) / (1.0 + dr[rising] * up)
        rho_hat[falling] = (rho[falling] - dr[falling] * self.R_map * down) / (1.0 - dr[falling] * down)
        return np.column_stack([rho_hat * np.cos(phi), rho_hat * np.sin(phi)])


def build_mapping(field: RadiusField | None, breakpoints) -> DomainMapping:
    """Domain mapping for ``field`` with breakpoints ``(rho_a, r0, R_map)``.

    The Jacobian is checked on a polar grid covering the mapped annulus.
    """
    rho_a, r0, R_map = breakpoints
    mapping = DomainMapping(field, float(rho_a), float(r0), float(R_map))
    if field is not None:
        phi = np.linspace(0.0, 2 * np.pi, 1024, endpoint=False)
        dr, ddr = mapping.displacement(phi), mapping.displacement(phi, 1)
        for seg, slope in ((1, 1.0 / (r0 - rho_a)), (2, -1.0 / (R_map - r0))):
            if np.any(1.0 + dr * slope <= 0):
                raise MappingError("shape variation too large for the mapping breakpoints")
        if np.any(rho_a + 0 * dr <= 0) or np.any(r0 + dr <= 0):
            raise MappingError("mapped interface radius must stay positive")
        del ddr
    return mapping


@dataclass(frozen=True)
class AssembledSystem:
    """Sparse complex-symmetric system restricted to the free vertices."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    n_vertices: int
    params: PhysicsParams
    mapping: DomainMapping
    mesh: Mesh

    @property
    def dimension(self):
        return self.rhs.size


@dataclass(frozen=True)
class FieldSolution:
    """Nodal values of the scattered field on the reference mesh."""

    values: np.ndarray
    mesh: Mesh
    params: PhysicsParams
    mapping: DomainMapping
    residual: float = 0.0

    @property
    def field(self):
        return self.mapping.field


def _reference_geometry(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # gradients of the barycentric functions, shape (T, 2, 3)
    grad = np.empty((len(p), 2, 3))
    grad[:, 0, 1], grad[:, 1, 1] = e2[:, 1] / det, -e2[:, 0] / det
    grad[:, 0, 2], grad[:, 1, 2] = -e1[:, 1] / det, e1[:, 0] / det
    grad[:, :, 0] = -grad[:, :, 1] - grad[:, :, 2]
    qpts = np.einsum("qk,tkd->tqd", QUAD_BARY, p)
    return area, grad, qpts


class ForwardSolver:
    """Reusable FEM solver on a fixed reference mesh.

    The mesh, element gradients and the sparsity pattern are computed once.
    Element matrices outside the mapped annulus do not depend on the shape and
    are summed once; only the mapped triangles are reassembled per sample.

    Parameters
    ----------
    mesh : Mesh
    params : PhysicsParams
    """

    def __init__(self, mesh: Mesh, params: PhysicsParams):
        self.mesh = mesh
        self.params = params
        cfg = mesh.config
        self.breakpoints = (cfg.rho_a, cfg.r0, cfg.R_map)
        self.area, self.grad, self.qpts = _reference_geometry(mesh)
        cent_r = mesh.centroid_radii()
        self.segment = np.searchsorted([cfg.rho_a, cfg.r0, cfg.R_map], cent_r, side="right")
        self.inside = mesh.tags == INTERIOR
        self.varying = (self.segment == 1) | (self.segment == 2)
        self.free = np.flatnonzero(~mesh.boundary)
        tri = mesh.triangles
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        n = mesh.n_vertices
        keys, self._inv = np.unique(rows * n + cols, return_inverse=True)
        self._pattern_rows, self._pattern_cols = keys // n, keys % n
        self._n_entries = keys.size
        self.n_solves = 0
        pml = mesh.tags == PML
        fixed = ~self.varying & ~pml
        self._base = (self._scatter(self._element_matrices(np.flatnonzero(fixed), None), fixed)
                      + self._scatter(self._pml_element_matrices(np.flatnonzero(pml)), pml))
        self._base_rhs = np.zeros(n, dtype=complex)
        self._add_load(self._base_rhs, np.flatnonzero(fixed & self.inside), None)

    # -- element level -----------------------------------------------------
    def _coefficients(self, idx, mapping):
        """Stiffness tensor ``A`` (T, q, 2, 2) and mass weight (T, q) off the PML."""
        prm = self.params
        nq = QUAD_BARY.shape[0]
        alpha = np.where(self.inside[idx], prm.alpha_in, prm.alpha_out)
        nref = np.where(self.inside[idx], prm.n_in, prm.n_out)
        A = np.zeros((idx.size, nq, 2, 2))
        A[..., 0, 0] = A[..., 1, 1] = 1.0
        mass = np.ones((idx.size, nq))
        if mapping is not None and mapping.field is not None:
            vary = self.varying[idx]
            if vary.any():
                seg = np.repeat(self.segment[idx[vary]][:, None], nq, axis=1)
                jac, det = mapping.jacobian(self.qpts[idx[vary]], seg)
                if np.any(det <= 0):
                    raise MappingError("non-positive Jacobian determinant at a quadrature point")
                jinv = np.linalg.inv(jac)
                A[vary] = np.einsum("tqij,tqkj->tqik", jinv, jinv) * det[..., None, None]
                mass[vary] = det
        A *= alpha[:, None, None, None]
        mass *= (prm.kappa0**2 * nref)[:, None]
        return A, mass

    def _element_matrices(self, idx, mapping):
        A, mass = self._coefficients(idx, mapping)
        g = self.grad[idx]
        w = QUAD_WEIGHTS * self.area[idx][:, None]  # (T, q)
        a_int = np.einsum("tq,tqij->tij", w, A)
        stiff = np.einsum("tia,tij,tjb->tab", g, a_int, g)
        massm = np.einsum("tq,qa,qb->tab", w * mass, QUAD_BARY, QUAD_BARY)
        return stiff - massm

    def _pml_element_matrices(self, idx, n_radial=24, chunk=4096):
        """Element matrices in the PML with radially resolved quadrature.

        Every PML triangle has a chord of one ring as base and its apex on the
        neighbouring ring. In the cell frame (bisector direction ``e``, see
        the chord correction below) the stretching depends only on the
        distance ``t`` to the PML start, so the triangle is integrated in
        collapsed coordinates: Gauss points along ``t`` in the variable
        ``log(1 + a t)`` with ``a = sigma_PML / (kappa0 (R_PML - R))``,
        which resolves the steep onset of ``d rho_tilde / d rho``, and three
        Gauss points across. Using one frame per cell keeps ring-constant P1
        functions exactly radial; a pointwise frame locks the discretization
        under the extreme anisotropy of the stretched tensor.
        """
        prm = self.params
        cfg = self.mesh.config
        k = prm.kappa0
        R, Rp, sig = cfg.R, cfg.R_PML, prm.sigma_pml
        slope = sig / (k * (Rp - R))
        gx, gw = np.polynomial.legendre.leggauss(n_radial)
        gx, gw = 0.5 * (gx + 1.0), 0.5 * gw
        ex, ew = np.polynomial.legendre.leggauss(3)
        ex, ew = 0.5 * (ex + 1.0), 0.5 * ew
        out = np.empty((idx.size, 3, 3), dtype=complex)
        for start in range(0, idx.size, chunk):
            tri = idx[start:start + chunk]
            T = tri.size
            p = self.mesh.vertices[self.mesh.triangles[tri]]
            u = p / np.linalg.norm(p, axis=2, keepdims=True)
            dots = np.stack([np.sum(u[:, 0] * u[:, 1], 1), np.sum(u[:, 1] * u[:, 2], 1),
                             np.sum(u[:, 2] * u[:, 0], 1)], axis=1)
            kk = np.argmin(dots, axis=1)
            rows = np.arange(T)
            e = u[rows, kk] + u[rows, (kk + 1) % 3]
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            cos_half = np.sqrt(0.5 * (1.0 + dots[rows, kk]))
            # projected radius of each vertex; the chord vertices share it
            tv = np.einsum("tvd,td->tv", p, e) / cos_half[:, None] - R
            spread = np.abs(tv - tv.mean(axis=1, keepdims=True))
            apex = np.argmax(spread, axis=1)
            b0, b1 = (apex + 1) % 3, (apex + 2) % 3
            t_apex = tv[rows, apex]
            t_base = 0.5 * (tv[rows, b0] + tv[rows, b1])
            t_apex, t_base = np.clip(t_apex, 0, None), np.clip(t_base, 0, None)
            lo, hi = np.minimum(t_apex, t_base), np.maximum(t_apex, t_base)
            if slope > 0:
                ulo, uhi = np.log1p(slope * lo), np.log1p(slope * hi)
                uq = ulo[:, None] + (uhi - ulo)[:, None] * gx  # (T, n)
                tq = np.expm1(uq) / slope
                dt_du = np.exp(uq) / slope
            else:
                # no absorption: plain Gauss points in t
                ulo, uhi = lo, hi
                tq = ulo[:, None] + (uhi - ulo)[:, None] * gx
                dt_du = np.ones_like(tq)
            # xi = 0 at the apex, 1 on the base
            xi = (tq - t_apex[:, None]) / (t_base - t_apex)[:, None]
            wxi = gw * (uhi - ulo)[:, None] * dt_du / np.abs(t_base - t_apex)[:, None]
            rho = R + tq
            sigma = sig * tq / (Rp - R)
            sigma_bar = sig * tq**2 / (2.0 * rho * (Rp - R))
            ratio = 1.0 + 1j * sigma_bar / k
            stretch = 1.0 + 1j * sigma / k
            # area element of the collapsed map is 2 |T| xi
            wt = 2.0 * self.area[tri][:, None] * xi * wxi  # (T, n), eta integrates to 1
            i_rr = np.sum(wt * ratio / stretch, axis=1)
            i_pp = np.sum(wt * stretch / ratio, axis=1)
            c, s_ = e[:, 0], e[:, 1]
            a_int = np.empty((T, 2, 2), dtype=complex)
            a_int[:, 0, 0] = i_rr * c * c + i_pp * s_ * s_
            a_int[:, 0, 1] = a_int[:, 1, 0] = (i_rr - i_pp) * c * s_
            a_int[:, 1, 1] = i_rr * s_ * s_ + i_pp * c * c
            g = self.grad[tri]
            stiff = np.einsum("tia,tij,tjb->tab", g, a_int, g)
            # barycentrics at (xi, eta): apex 1 - xi, b0 xi (1 - eta), b1 xi eta
            lam = np.zeros((T, n_radial, 3, 3))
            lam[rows, :, :, apex] = (1.0 - xi)[:, :, None]
            lam[rows, :, :, b0] = xi[:, :, None] * (1.0 - ex)
            lam[rows, :, :, b1] = xi[:, :, None] * ex
            mw = wt * ratio * stretch * k**2 * prm.n_out
            massm = np.einsum("tn,m,tnma,tnmb->tab", mw, ew, lam, lam)
            out[start:start + chunk] = prm.alpha_out * stiff - massm
        return out

    def _scatter(self, elem, mask):
        data = np.zeros((self.mesh.n_triangles, 9), dtype=complex)
        data[mask] = elem.reshape(-1, 9)
        flat = data.ravel()
        return (np.bincount(self._inv, flat.real, self._n_entries)
                + 1j * np.bincount(self._inv, flat.imag, self._n_entries))

    def _add_load(self, rhs, idx, mapping):
        """Add ``-int_{D_in} (a_in - a_out) grad u^i . grad v - k^2 (n_in - n_out) u^i v``."""
        if idx.size == 0:
            return
        prm = self.params
        q = self.qpts[idx]
        nq = q.shape[1]
        if mapping is not None and mapping.field is not None:
            seg = np.repeat(self.segment[idx][:, None], nq, axis=1)
            x = mapping.apply(q, seg)
            jac, det = mapping.jacobian(q, seg)
            jinv = np.linalg.inv(jac)
        else:
            x = q
            jinv = np.broadcast_to(np.eye(2), q.shape[:-1] + (2, 2))
            det = np.ones(q.shape[:-1])
        ui, gui = prm.incident(x)
        w = QUAD_WEIGHTS * self.area[idx][:, None] * det
        # grad v = J^{-T} grad_hat v, so grad u^i . grad v = (J^{-1} grad u^i) . grad_hat v
        gref = np.einsum("tqji,tqj->tqi", jinv, gui)
        term_grad = (prm.alpha_in - prm.alpha_out) * np.einsum("tq,tqi,tia->ta", w, gref, self.grad[idx])
        term_mass = prm.kappa0**2 * (prm.n_in - prm.n_out) * np.einsum("tq,tq,qa->ta", w, ui, QUAD_BARY)
        np.add.at(rhs, self.mesh.triangles[idx], -(term_grad - term_mass))

    # -- global level ------------------------------------------------------
    def mapping_for(self, field):
        return build_mapping(field, self.breakpoints)

    def assemble(self, mapping: DomainMapping) -> AssembledSystem:
        vary = self.varying
        data = self._base + self._scatter(self._element_matrices(np.flatnonzero(vary), mapping), vary)
        rhs = self._base_rhs.copy()
        self._add_load(rhs, np.flatnonzero(vary & self.inside), mapping)
        n = self.mesh.n_vertices
        full = sp.csr_matrix((data, (self._pattern_rows, self._pattern_cols)), shape=(n, n))
        mat = full[self.free][:, self.free].tocsc()
        return AssembledSystem(mat, rhs[self.free], self.free, n, self.params, mapping, self.mesh)

    def solve_system(self, system: AssembledSystem) -> FieldSolution:
        sol = solve(system)
        self.n_solves += 1
        return sol

    def solve(self, field: RadiusField | None) -> FieldSolution:
        """Assemble and solve for one shape (``None`` means the nominal circle)."""
        return self.solve_system(self.assemble(self.mapping_for(field)))


_SOLVER_CACHE: dict = {}


def _solver_for(mesh, params):
    key = (id(mesh), params)
    solver = _SOLVER_CACHE.get(key)
    if solver is None or solver.mesh is not mesh:
        if len(_SOLVER_CACHE) > 8:
            _SOLVER_CACHE.clear()
        solver = _SOLVER_CACHE[key] = ForwardSolver(mesh, params)
    return solver


def assemble(mesh: Mesh, params: PhysicsParams, mapping: DomainMapping) -> AssembledSystem:
    """Assemble the PML-truncated transmission problem for ``mapping``."""
    return _solver_for(mesh, params).assemble(mapping)


def solve(system: AssembledSystem) -> FieldSolution:
    """Sparse direct solve with a relative residual check of ``1e-10``.

    Raises
    ------
    SolverError
        If the factorization is singular or the residual check fails.
    """
    kappa = system.params.kappa0
    values = np.zeros(system.n_vertices, dtype=complex)
    bnorm = np.linalg.norm(system.rhs)
    res = 0.0
    if bnorm > 0:
        try:
            lu = splu(system.matrix, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(
                f"factorization failed at kappa0={kappa:.6g} (possible discrete resonance): {exc}"
            ) from exc
        x = lu.solve(system.rhs)
        r = system.rhs - system.matrix @ x
        res = np.linalg.norm(r) / bnorm
        for _ in range(3):
            if res <= RESIDUAL_TOL:
                break
            # iterative refinement against PML-induced ill-conditioning
            x = x + lu.solve(r)
            r = system.rhs - system.matrix @ x
            res = np.linalg.norm(r) / bnorm
        if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
            raise SolverError(f"relative residual {res:.3g} exceeds {RESIDUAL_TOL:g} at kappa0={kappa:.6g}")
        values[system.free] = x
    return FieldSolution(values, system.mesh, system.params, system.mapping, res)


def interpolate(sol: FieldSolution, ref_points):
    """P1 interpolation of the nodal scattered field at reference points."""
    tri, bary = locate_points(sol.mesh, ref_points)
    return np.einsum("ij,ij->i", sol.values[sol.mesh.triangles[tri]], bary)


def total_field_at(sol: FieldSolution, points):
    """Total field ``u^i + u`` at physical points inside ``B_R``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rho = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(rho > sol.mesh.config.R * (1 + 1e-12)):
        raise ValueError("measurement points must lie in the physical region |x| <= R, not in the PML")
    ref = sol.mapping.inverse(pts)
    ui, _ = sol.params.incident(pts)
    return ui + interpolate(sol, ref)


def _norm_parts(sol: FieldSolution, values):
    mesh = sol.mesh
    solver = _solver_for(mesh, sol.params)
    idx = np.flatnonzero(mesh.tags != PML)
    prm = sol.params
    seg = np.repeat(solver.segment[idx][:, None], 3, axis=1)
    q = solver.qpts[idx]
    jac, det = sol.mapping.jacobian(q, seg) if sol.mapping.field is not None else (
        np.broadcast_to(np.eye(2), q.shape[:-1] + (2, 2)), np.ones(q.shape[:-1]))
    jinv = np.linalg.inv(jac)
    inside = solver.inside[idx]
    alpha = np.where(inside, prm.alpha_in, prm.alpha_out)
    nref = np.where(inside, prm.n_in, prm.n_out)
    u = values[mesh.triangles[idx]]
    gref = np.einsum("tia,ta->ti", solver.grad[idx], u)
    gphys = np.einsum("tqji,tj->tqi", jinv, gref)
    uq = u @ QUAD_BARY.T
    w = QUAD_WEIGHTS * solver.area[idx][:, None] * det
    grad2 = np.einsum("tq,tqi->t", w, np.abs(gphys) ** 2) * alpha
    mass2 = prm.kappa0**2 * nref * np.einsum("tq,tq->t", w, np.abs(uq) ** 2)
    return grad2, mass2, inside


def weighted_norm(sol: FieldSolution, params: PhysicsParams | None = None, values=None):
    """``(alpha |grad u|^2 + kappa0^2 n |u|^2)^{1/2}`` integrated over ``D_in`` and ``D_R``.

    Integration happens on the reference mesh with ``|det J|`` weights. By
    default the scattered field is measured; pass ``values`` to measure any
    other nodal vector with the same weights.
    """
    if params is not None and params != sol.params:
        sol = FieldSolution(sol.values, sol.mesh, params, sol.mapping, sol.residual)
    v = sol.values if values is None else np.asarray(values, dtype=complex)
    g, m, _ = _norm_parts(sol, v)
    return float(np.sqrt(np.sum(g) + np.sum(m)))


def export_field(sol: FieldSolution, path, total=False):
    """Write nodal values as CSV ``x,y,Re(u),Im(u)`` in physical coordinates."""
    mesh = sol.mesh
    phys = sol.mapping.apply(mesh.vertices) if sol.mapping.field is not None else mesh.vertices
    vals = sol.values
    if total:
        vals = vals + sol.params.incident(phys)[0]
    with open(path, "w") as fh:
        fh.write("x,y,Re(u),Im(u)\n")
        for (x, y), v in zip(phys, vals):
            fh.write(f"{x:.17g},{y:.17g},{v.real:.17g},{v.imag:.17g}\n")


def default_mesh_config(h=0.00125, r0=0.01, R=0.07, R_PML=0.11, gamma_beta=0.5, rho_a=None, R_map=None,
                        **kwargs) -> MeshConfig:
    """Mesh configuration with the default mapping anchors.

    ``rho_a = 0.25 (1 - gamma_beta) r0`` and ``R_map`` midway between
    ``(1 + gamma_beta) r0`` and ``R``.
    """
    rho_a = 0.25 * (1 - gamma_beta) * r0 if rho_a is None else rho_a
    R_map = 0.5 * ((1 + gamma_beta) * r0 + R) if R_map is None else R_map
    return MeshConfig(h=h, rho_a=rho_a, r0=r0, R_map=R_map, R=R, R_PML=R_PML, **kwargs)


def build_solver(params: PhysicsParams | None = None, **mesh_kwargs) -> ForwardSolver:
    """Convenience constructor: default mesh plus solver."""
    params = PhysicsParams() if params is None else params
    return ForwardSolver(build_disk_mesh(default_mesh_config(**mesh_kwargs)), params)


__all__ = [
    "PhysicsParams", "DomainMapping", "AssembledSystem", "FieldSolution", "ForwardSolver",
    "SolverError", "MappingError", "build_mapping", "assemble", "solve", "total_field_at",
    "weighted_norm", "interpolate", "export_field", "default_mesh_config", "build_solver",
    "EXTERIOR", "MAPPED",
]
