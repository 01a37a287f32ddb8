"""Non-Hermitian quantum geometric tensors at a k-point and on BZ grids.

Conventions
-----------
* ``qgt_lr`` / ``qgt_rl`` are the mixed tensors in the biorthonormal
  (<L|R> = 1) convention without norm factors; their antisymmetric part is
  the mixed Berry curvature whose BZ integral is 2*pi*C.
* ``qgt_rr`` / ``qgt_ll`` are the symmetric tensors of the unit-normalized
  right/left vector rays; they are Hermitian and positive semidefinite.
* ``norm_product`` is the gauge-invariant ||R_n||^2 ||L_n||^2 that converts
  between the two normalizations of the mixed tensor.

Everything is batched over leading axes.  All quantities are gauge
invariant under |R_n> -> c(k)|R_n>, |L_n> -> |L_n>/conj(c(k)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import (ExceptionalPointError, GaugeLockError,
                     NonRealCurvatureError)
from .models import BlochModel, bz_mesh
from .spectra import Eigensystem, braket, eigensystem_two_band, gauge_rescale, matrix_elements

#: minimum |<psi(k)|psi(k')>| for a finite-difference gauge lock
LOCK_MIN_OVERLAP = 0.5

#: default oracle step in momentum
ORACLE_STEP = 1e-4

CURVATURE_IMAG_TOL = 1e-9


def _fd_weights(eig: Eigensystem, dh):
    """Velocity matrix elements V[n, m] = <L_n|dh|R_m>."""
    return matrix_elements(eig.left, dh, eig.right)


def _gaps(energies, band, others):
    return energies[..., band, None] - energies[..., others]


def qgt_lr(eig: Eigensystem, dhx, dhy, band=0, occupied=None):
    """Mixed LR tensor Q^{LR}_{mu nu} of one band, shape (..., 2, 2).

    Sum over bands outside the occupied set of
    <L_n|dH_mu|R_k><L_k|dH_nu|R_n> / (e_n - e_k)^2, which is the
    gauge-invariant resolvent form of <d_mu psiL|(1 - P_O)|d_nu psiR>.
    """
    occupied = {band} if occupied is None else set(occupied)
    if band not in occupied:
        raise ValueError("band must belong to the occupied set")
    others = [k for k in range(eig.nbands) if k not in occupied]
    vx = _fd_weights(eig, dhx)
    vy = _fd_weights(eig, dhy)
    gaps = _gaps(eig.energies, band, others)
    out = np.empty(eig.energies.shape[:-1] + (2, 2), dtype=complex)
    for (mu, va) in ((0, vx), (1, vy)):
        for (nu, vb) in ((0, vx), (1, vy)):
            num = va[..., band, others] * vb[..., others, band]
            out[..., mu, nu] = np.sum(num / gaps**2, axis=-1)
    return out


def qgt_rl_from_lr(q_lr):
    """Q^{RL}_{mu nu} = conj(Q^{LR}_{nu mu}); an involution."""
    return np.conj(np.swapaxes(q_lr, -1, -2))


def qgt_rr_two_band(eig: Eigensystem, dhx, dhy, band=0):
    """Symmetric RR tensor for N = 2 via the single cross matrix element."""
    if eig.nbands != 2:
        raise ValueError("two-band formula needs N = 2")
    other = 1 - band
    rt = eig.right[..., band, :] / np.sqrt(eig.norms_right_sq())[..., band, None]
    lt = eig.left[..., other, :] / np.sqrt(eig.norms_left_sq())[..., other, None]
    gap2 = np.abs(eig.energies[..., band] - eig.energies[..., other]) ** 2
    a = np.stack([np.einsum("...i,...ij,...j->...", np.conj(lt), np.asarray(dh, dtype=complex), rt)
                  for dh in (dhx, dhy)], axis=-1)
    return np.conj(a[..., :, None]) * a[..., None, :] / gap2[..., None, None]


def qgt_ll_two_band(eig: Eigensystem, dhx, dhy, band=0):
    """Symmetric LL tensor for N = 2 (mirror of the RR formula)."""
    if eig.nbands != 2:
        raise ValueError("two-band formula needs N = 2")
    other = 1 - band
    lt = eig.left[..., band, :] / np.sqrt(eig.norms_left_sq())[..., band, None]
    rt = eig.right[..., other, :] / np.sqrt(eig.norms_right_sq())[..., other, None]
    gap2 = np.abs(eig.energies[..., band] - eig.energies[..., other]) ** 2
    # c_mu = <tilde R_m| dH^dagger |tilde L_n>
    c = np.stack([np.einsum("...i,...ij,...j->...", np.conj(rt),
                            np.conj(np.swapaxes(np.asarray(dh, dtype=complex), -1, -2)), lt)
                  for dh in (dhx, dhy)], axis=-1)
    return np.conj(c[..., :, None]) * c[..., None, :] / gap2[..., None, None]


def _schur_weights(gram, band, others):
    """W_mk = I_mk - I_mn I_nk / I_nn restricted to m, k != n (PSD)."""
    sub = gram[..., others, :][..., :, others]
    col = gram[..., others, band]
    row = gram[..., band, others]
    nn = gram[..., band, band]
    return sub - col[..., :, None] * row[..., None, :] / nn[..., None, None]


def qgt_rr_multiband(eig: Eigensystem, dhx, dhy, band=0):
    """Symmetric RR tensor of band n with explicit overlap weights.

    Implements the double band sum over m, k != n with the Schur-complement
    weights of the right Gram matrix; reduces to the two-band formula at
    N = 2 and to the projector QGT in the Hermitian limit.
    """
    others = [m for m in range(eig.nbands) if m != band]
    rt = eig.right[..., band, :] / np.sqrt(eig.norms_right_sq())[..., band, None]
    gaps = _gaps(eig.energies, band, others)
    w = _schur_weights(eig.overlap_right, band, others)
    out = np.empty(eig.energies.shape[:-1] + (2, 2), dtype=complex)
    b = []
    for dh in (dhx, dhy):
        # B_k = <L_k|dH|tilde R_n> / (e_n - e_k)
        bk = np.einsum("...ki,...ij,...j->...k",
                       np.conj(eig.left[..., others, :]), np.asarray(dh, dtype=complex), rt)
        b.append(bk / gaps)
    for mu in range(2):
        for nu in range(2):
            out[..., mu, nu] = np.einsum("...m,...mk,...k->...",
                                         np.conj(b[mu]), w, b[nu])
    return out


def qgt_ll_multiband(eig: Eigensystem, dhx, dhy, band=0):
    """Symmetric LL tensor of band n; left Gram weights, daggered velocities."""
    others = [m for m in range(eig.nbands) if m != band]
    lt = eig.left[..., band, :] / np.sqrt(eig.norms_left_sq())[..., band, None]
    gaps = np.conj(_gaps(eig.energies, band, others))
    w = _schur_weights(eig.overlap_left, band, others)
    out = np.empty(eig.energies.shape[:-1] + (2, 2), dtype=complex)
    b = []
    for dh in (dhx, dhy):
        dhd = np.conj(np.swapaxes(np.asarray(dh, dtype=complex), -1, -2))
        # B_k = <R_k|dH^dagger|tilde L_n> / (e_n - e_k)^*
        bk = np.einsum("...ki,...ij,...j->...k",
                       np.conj(eig.right[..., others, :]), dhd, lt)
        b.append(bk / gaps)
    for mu in range(2):
        for nu in range(2):
            out[..., mu, nu] = np.einsum("...m,...mk,...k->...",
                                         np.conj(b[mu]), w, b[nu])
    return out


def anomalous_connection(eig: Eigensystem, dh, band=0, side="R"):
    """Gauge-invariant anomalous connection Q^R_mu or Q^L_mu (one direction).

    R side: i sum_{m != n} (I_nm / I_nn) <L_m|dH|R_n> / (e_n - e_m);
    L side mirrors it with the left Gram matrix, daggered velocity and
    conjugated energies.
    """
    others = [m for m in range(eig.nbands) if m != band]
    dh = np.asarray(dh, dtype=complex)
    if side == "R":
        gram = eig.overlap_right
        gaps = _gaps(eig.energies, band, others)
        elem = np.einsum("...mi,...ij,...j->...m",
                         np.conj(eig.left[..., others, :]), dh, eig.right[..., band, :])
    elif side == "L":
        gram = eig.overlap_left
        gaps = np.conj(_gaps(eig.energies, band, others))
        dhd = np.conj(np.swapaxes(dh, -1, -2))
        elem = np.einsum("...mi,...ij,...j->...m",
                         np.conj(eig.right[..., others, :]), dhd, eig.left[..., band, :])
    else:
        raise ValueError("side must be 'R' or 'L'")
    ratio = gram[..., band, others] / gram[..., band, band, None]
    return 1j * np.sum(ratio * elem / gaps, axis=-1)


def berry_curvature_lr(q_lr, strict=False):
    """Mixed Berry curvature F = i (Q^{LR}_xy - Q^{LR}_yx).

    The projector pieces of the mixed tensor cancel in the
    antisymmetrization, so this equals the curl of the mixed connection.
    Pointwise F is generically complex for non-Hermitian models; only its
    BZ integral is real (2*pi*C).  With ``strict=True`` the imaginary part
    must vanish pointwise (Hermitian-limit contract).
    """
    f = 1j * (q_lr[..., 0, 1] - q_lr[..., 1, 0])
    if strict:
        scale = max(float(np.max(np.abs(f))), 1.0)
        resid = float(np.max(np.abs(np.imag(f))))
        if resid > CURVATURE_IMAG_TOL * scale:
            raise NonRealCurvatureError(
                f"pointwise curvature imaginary residue {resid:.2e}")
        return np.real(f)
    return f


@dataclass
class GeometryRecord:
    """All geometric objects of one band at a single k-point."""

    kx: float
    ky: float
    band: int
    qgt_lr: np.ndarray
    qgt_rl: np.ndarray
    qgt_rr: np.ndarray
    qgt_ll: np.ndarray
    anomalous_r: np.ndarray
    anomalous_l: np.ndarray
    curvature_lr: complex
    norm_product: float


@dataclass
class GeometryGrid:
    """All geometric quantities of one band on a uniform BZ mesh.

    Arrays are struct-of-arrays with the mesh in the two leading axes,
    row-major in (kx index, ky index); ``record(i, j)`` views one point.
    """

    kx: np.ndarray
    ky: np.ndarray
    band: int
    qgt_lr: np.ndarray       # (nx, ny, 2, 2)
    qgt_rl: np.ndarray
    qgt_rr: np.ndarray
    qgt_ll: np.ndarray
    anomalous_r: np.ndarray  # (nx, ny, 2)
    anomalous_l: np.ndarray
    curvature_lr: np.ndarray  # (nx, ny) complex
    norm_product: np.ndarray  # (nx, ny) real
    params: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.curvature_lr.shape

    def cell_area(self):
        nx, ny = self.shape
        return (2.0 * np.pi / nx) * (2.0 * np.pi / ny)

    def record(self, i, j) -> GeometryRecord:
        return GeometryRecord(
            kx=float(self.kx[i, j]), ky=float(self.ky[i, j]), band=self.band,
            qgt_lr=self.qgt_lr[i, j], qgt_rl=self.qgt_rl[i, j],
            qgt_rr=self.qgt_rr[i, j], qgt_ll=self.qgt_ll[i, j],
            anomalous_r=self.anomalous_r[i, j], anomalous_l=self.anomalous_l[i, j],
            curvature_lr=complex(self.curvature_lr[i, j]),
            norm_product=float(self.norm_product[i, j]))


def compute_geometry(eig: Eigensystem, dhx, dhy, band=0, occupied=None):
    """All per-point geometric objects from one eigensystem (batched)."""
    q_lr = qgt_lr(eig, dhx, dhy, band=band, occupied=occupied)
    q_rl = qgt_rl_from_lr(q_lr)
    if eig.nbands == 2:
        q_rr = qgt_rr_two_band(eig, dhx, dhy, band=band)
        q_ll = qgt_ll_two_band(eig, dhx, dhy, band=band)
    else:
        q_rr = qgt_rr_multiband(eig, dhx, dhy, band=band)
        q_ll = qgt_ll_multiband(eig, dhx, dhy, band=band)
    anom_r = np.stack([anomalous_connection(eig, dh, band=band, side="R")
                       for dh in (dhx, dhy)], axis=-1)
    anom_l = np.stack([anomalous_connection(eig, dh, band=band, side="L")
                       for dh in (dhx, dhy)], axis=-1)
    curv = berry_curvature_lr(q_lr)
    return q_lr, q_rl, q_rr, q_ll, anom_r, anom_l, curv


def scan_geometry(model: BlochModel, band=0, nx=64, ny=None, occupied=None,
                  workers=1, ordering="branch"):
    """GeometryGrid over the uniform [-pi, pi)^2 mesh.

    Rows (fixed kx index) are computed independently and written into
    preallocated arrays, so the result is identical for any ``workers``.
    Exceptional points are collected and reported with their coordinates.
    Bands carry the k-smooth branch labels by default (integer topology
    requires a labeling that is continuous across the zone).
    """
    ny = nx if ny is None else ny
    kxg, kyg = bz_mesh(nx, ny)
    nb = model.dimension
    out = GeometryGrid(
        kx=kxg, ky=kyg, band=band,
        qgt_lr=np.full((nx, ny, 2, 2), np.nan, dtype=complex),
        qgt_rl=np.full((nx, ny, 2, 2), np.nan, dtype=complex),
        qgt_rr=np.full((nx, ny, 2, 2), np.nan, dtype=complex),
        qgt_ll=np.full((nx, ny, 2, 2), np.nan, dtype=complex),
        anomalous_r=np.full((nx, ny, 2), np.nan, dtype=complex),
        anomalous_l=np.full((nx, ny, 2), np.nan, dtype=complex),
        curvature_lr=np.full((nx, ny), np.nan, dtype=complex),
        norm_product=np.full((nx, ny), np.nan),
        params={"model": model.label, "band": band, "grid": [nx, ny]},
    )
    bad_points = []

    def do_row(i):
        kxr, kyr = kxg[i], kyg[i]
        h = model.hamiltonian(kxr, kyr)
        if nb != 2:
            raise ExceptionalPointError("grid scans support two-band models only")
        try:
            eig = eigensystem_two_band(h, ordering=ordering)
        except ExceptionalPointError as exc:
            for (j,) in np.asarray(exc.points).reshape(-1, 1):
                bad_points.append((float(kxr[j]), float(kyr[j])))
            return
        dhx = model.derivative(kxr, kyr, 0)
        dhy = model.derivative(kxr, kyr, 1)
        q_lr, q_rl, q_rr, q_ll, a_r, a_l, curv = compute_geometry(
            eig, dhx, dhy, band=band, occupied=occupied)
        out.qgt_lr[i] = q_lr
        out.qgt_rl[i] = q_rl
        out.qgt_rr[i] = q_rr
        out.qgt_ll[i] = q_ll
        out.anomalous_r[i] = a_r
        out.anomalous_l[i] = a_l
        out.curvature_lr[i] = curv
        out.norm_product[i] = eig.norm_product(band)

    if workers <= 1:
        for i in range(nx):
            do_row(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(do_row, range(nx)))
    if bad_points:
        bad_points.sort()
        raise ExceptionalPointError(
            f"{len(bad_points)} exceptional point(s) on the mesh", points=bad_points)
    return out


# -- finite-difference oracle ------------------------------------------------

def _locked_eigensystems(model: BlochModel, kx, ky, h, ordering="branch"):
    """Center eigensystem plus 4-point stencil locked to the center gauge.

    Returns (center, {(axis, sign): eigensystem}) where each stencil
    eigensystem's per-band phase is aligned with the center band
    (overlap made real positive).  Raises GaugeLockError when any
    normalized overlap magnitude drops below LOCK_MIN_OVERLAP.  Branch
    labels keep the stencil on one smooth band.
    """
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    center = eigensystem_two_band(model.hamiltonian(kx, ky), ordering=ordering)
    shifted = {}
    for axis in (0, 1):
        for sign in (1.0, -1.0):
            dkx = kx + sign * h if axis == 0 else kx
            dky = ky + sign * h if axis == 1 else ky
            eig = eigensystem_two_band(model.hamiltonian(dkx, dky), ordering=ordering)
            ov = np.einsum("...ni,...ni->...n", np.conj(center.right), eig.right)
            if np.any(np.abs(ov) < LOCK_MIN_OVERLAP):
                raise GaugeLockError(
                    f"stencil overlap below {LOCK_MIN_OVERLAP} at step {h}")
            shifted[(axis, sign)] = gauge_rescale(eig, np.abs(ov) / ov)
    return center, shifted


def _vector_derivatives(center, shifted, h):
    """(dR[axis], dL[axis]) central differences of locked eigenvectors."""
    dr, dl = [], []
    for axis in (0, 1):
        plus, minus = shifted[(axis, 1.0)], shifted[(axis, -1.0)]
        dr.append((plus.right - minus.right) / (2.0 * h))
        dl.append((plus.left - minus.left) / (2.0 * h))
    return dr, dl


def finite_difference_qgt(model: BlochModel, kx, ky, band=0, pair="lr",
                          h=ORACLE_STEP):
    """QGT from explicit locked eigenvector derivatives (test oracle).

    ``pair`` picks which definition is differentiated:

    * ``"lr"``: <d_mu psiL|(1 - |R><L|)|d_nu psiR>   (biorthonormal)
    * ``"rl"``: <d_mu psiR|(1 - |L><R|)|d_nu psiL>
    * ``"rr"``/``"ll"``: projector QGT of the unit-normalized ray

    Accuracy is O(h^2); used only to validate the gauge-invariant formulas.
    """
    center, shifted = _locked_eigensystems(model, kx, ky, h)
    n = band
    out = np.empty(np.shape(np.asarray(kx, dtype=float)) + (2, 2), dtype=complex)

    if pair in ("lr", "rl"):
        dr, dl = _vector_derivatives(center, shifted, h)
        r = center.right[..., n, :]
        l = center.left[..., n, :]
        for mu in range(2):
            for nu in range(2):
                if pair == "lr":
                    vec = dr[nu][..., n, :] - braket(l, dr[nu][..., n, :])[..., None] * r
                    out[..., mu, nu] = braket(dl[mu][..., n, :], vec)
                else:
                    vec = dl[nu][..., n, :] - braket(r, dl[nu][..., n, :])[..., None] * l
                    out[..., mu, nu] = braket(dr[mu][..., n, :], vec)
        return out

    if pair in ("rr", "ll"):
        pick = (lambda e: e.right) if pair == "rr" else (lambda e: e.left)
        vc = pick(center)[..., n, :]
        vc = vc / np.linalg.norm(vc, axis=-1, keepdims=True)
        dv = []
        for axis in (0, 1):
            vp = pick(shifted[(axis, 1.0)])[..., n, :]
            vm = pick(shifted[(axis, -1.0)])[..., n, :]
            vp = vp / np.linalg.norm(vp, axis=-1, keepdims=True)
            vm = vm / np.linalg.norm(vm, axis=-1, keepdims=True)
            dv.append((vp - vm) / (2.0 * h))
        for mu in range(2):
            for nu in range(2):
                vec = dv[nu] - braket(vc, dv[nu])[..., None] * vc
                out[..., mu, nu] = braket(dv[mu], vec)
        return out

    raise ValueError("pair must be one of 'lr', 'rl', 'rr', 'll'")


def finite_difference_connection(model: BlochModel, kx, ky, band=0, side="R",
                                 h=ORACLE_STEP):
    """Oracle for the anomalous connection: same-family minus mixed connection."""
    center, shifted = _locked_eigensystems(model, kx, ky, h)
    dr, dl = _vector_derivatives(center, shifted, h)
    n = band
    r = center.right[..., n, :]
    l = center.left[..., n, :]
    out = np.empty(np.shape(np.asarray(kx, dtype=float)) + (2,), dtype=complex)
    for axis in range(2):
        if side == "R":
            drn = dr[axis][..., n, :]
            a_same = 1j * braket(r, drn) / braket(r, r)
            a_mixed = 1j * braket(l, drn)
        elif side == "L":
            dln = dl[axis][..., n, :]
            a_same = 1j * braket(l, dln) / braket(l, l)
            a_mixed = 1j * braket(r, dln)
        else:
            raise ValueError("side must be 'R' or 'L'")
        out[..., axis] = a_same - a_mixed
    return out


def anomalous_divergence_integral(model: BlochModel, band=0, n_grid=64,
                                  h=1e-2, side="R"):
    """BZ Riemann sum of the discrete divergence of the anomalous one-form.

    The connection is gauge invariant, so its divergence integrates to zero
    over the torus; the Riemann sum converges to zero with grid refinement.
    The divergence uses a mesh-independent central step ``h``: the shifted
    torus integrals cancel exactly for any step, so ``h`` only sets the
    cancellation-noise floor (larger steps keep it below the quadrature
    error on fine meshes).
    """
    kxg, kyg = bz_mesh(n_grid, n_grid)

    def q_at(kx, ky):
        eig = eigensystem_two_band(model.hamiltonian(kx, ky), ordering="branch")
        return np.stack([anomalous_connection(eig, model.derivative(kx, ky, ax),
                                              band=band, side=side)
                         for ax in (0, 1)], axis=-1)

    div = (q_at(kxg + h, kyg)[..., 0] - q_at(kxg - h, kyg)[..., 0]) / (2 * h) \
        + (q_at(kxg, kyg + h)[..., 1] - q_at(kxg, kyg - h)[..., 1]) / (2 * h)
    area = (2.0 * np.pi / n_grid) ** 2
    return complex(np.sum(div) * area)
