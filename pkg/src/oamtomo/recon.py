"""Reconstruction: measurement records -> wedge table -> ANG matrix -> Wigner grid.

The inversion chain mirrors the forward protocol.  Each setting (tau, axis)
yields per-wedge Pauli ratios; the element <Theta+tau|rho|Theta-tau> is
(norm/2)(sx + i*sy), Hermitian completion fills the conjugate entries, and a
single global rescale fixes the trace of the ANG-converted matrix.  The
discrete Wigner grid is the phase-space transform of the ANG matrix,

    W(theta, l) = (1/d) sum_phi exp(-4*pi*i*l*phi/d) <theta+phi|rho|theta-phi>,

with all angle labels reduced mod d.  The bra/ket orientation is the one
whose marginals reproduce the ANG and OAM probability distributions
unreflected; the flipped orientation would return the OAM marginal mirrored
(l -> -l).  The chosen orientation is recorded in every quality report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    MissingSetting,
    MLERequiresRecords,
    NonHermitianInput,
    NonPhysicalState,
    ZeroWedgeWarning,
)
from .hilbert import (
    Basis,
    ConversionMatrix,
    DensityMatrix,
    Dimension,
    StateVector,
    ang_basis_matrix,
    build_conversion_matrix,
    mw_basis_matrix,
    oam_to_ang,
    reduce_angle,
)
from .protocol import MeasurementRecord, measurement_plan

NEAREST_PSD = "nearest"
ITERATIVE_MLE = "iterative"

MLE_MAX_ITER = 5000
MLE_TOL = 1e-10


class KernelOrientation(Enum):
    """Sign convention of the phase-space kernel, fixed by marginal correctness."""

    BRA_PLUS_PHI = "bra_plus_phi"    # <theta+phi| rho |theta-phi>, OAM marginal unreflected
    BRA_MINUS_PHI = "bra_minus_phi"  # <theta-phi| rho |theta+phi>, OAM marginal mirrored


KERNEL_ORIENTATION = KernelOrientation.BRA_PLUS_PHI


@dataclass
class WignerGrid:
    """Real d x d grid; rows are theta = -N..N, columns l = -N..N."""

    dim: Dimension
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.dim.d, self.dim.d):
            raise ValueError(f"expected {self.dim.d}x{self.dim.d} grid")


@dataclass
class QualityReport:
    fidelity: float | None
    degree_of_coherence: float
    purity: float
    negativity_volume: float
    kernel_orientation: KernelOrientation


@dataclass
class ReconstructionResult:
    wedge: DensityMatrix
    ang_raw: DensityMatrix
    ang: DensityMatrix
    oam: DensityMatrix
    wigner: WignerGrid
    report: QualityReport
    warnings: list[str]


# --------------------------------------------------------------------------
# records -> wedge table
# --------------------------------------------------------------------------

def _index_records(records: list[MeasurementRecord], dim: Dimension) -> dict:
    by_setting = {}
    for rec in records:
        if len(rec.plus_counts) != dim.d:
            raise ValueError(f"record for tau={rec.setting.tau} has wrong length")
        by_setting[(rec.setting.tau, rec.setting.axis)] = rec
    return by_setting


def wedge_matrix_from_records(records: list[MeasurementRecord], dim: Dimension) -> DensityMatrix:
    """Invert port counts into the wedge projection table.

    For each tau and each wedge Theta the X record gives sx, the Y record sy
    and both give the normalization p+ + p- (averaged when both exist); the
    matrix element at (Theta+tau, Theta-tau) is (norm/2)(sx + i*sy).  The
    diagonal comes from tau = 0, where sy vanishes identically.  Wedges with
    zero total counts are imputed as 0 under a ZeroWedgeWarning.  Finally the
    table is rescaled so its ANG-converted image has unit trace.

    Raises MissingSetting when the records do not cover the plan.
    """
    by_setting = _index_records(records, dim)
    for setting in measurement_plan(dim):
        if (setting.tau, setting.axis) not in by_setting:
            raise MissingSetting(f"no record for (tau={setting.tau}, axis={setting.axis})")

    w = np.zeros((dim.d, dim.d), dtype=complex)
    for tau in range(dim.n_max + 1):
        rec_x = by_setting[(tau, "X")]
        rec_y = by_setting.get((tau, "Y"))
        tot_x = rec_x.plus_counts + rec_x.minus_counts
        tot_y = None if rec_y is None else rec_y.plus_counts + rec_y.minus_counts
        for i, theta in enumerate(dim.modes()):
            ip = dim.n_max + reduce_angle(int(theta) + tau, dim)
            im = dim.n_max + reduce_angle(int(theta) - tau, dim)
            dark = tot_x[i] <= 0 or (tau > 0 and tot_y is not None and tot_y[i] <= 0)
            if dark:
                warnings.warn(
                    ZeroWedgeWarning(
                        f"wedge {theta} had zero counts at tau={tau}; element imputed as 0"
                    )
                )
                elem = 0.0
            else:
                sx = (rec_x.plus_counts[i] - rec_x.minus_counts[i]) / tot_x[i]
                if tau == 0:
                    sy, norm = 0.0, tot_x[i]
                else:
                    sy = (rec_y.plus_counts[i] - rec_y.minus_counts[i]) / tot_y[i]
                    norm = (tot_x[i] + tot_y[i]) / 2.0
                elem = (norm / 2.0) * (sx + 1j * sy)
            w[ip, im] = elem
            if tau > 0:
                w[im, ip] = np.conj(elem)

    wedge = DensityMatrix(dim, Basis.WEDGE, w)
    conv = build_conversion_matrix(dim)
    trace = ang_from_wedge(wedge, conv).entries.trace().real
    if trace <= 0:
        raise NonPhysicalState("ANG-converted trace is not positive")
    wedge.entries /= trace
    return wedge


def ang_from_wedge(wedge: DensityMatrix, conv: ConversionMatrix) -> DensityMatrix:
    """Convert a wedge projection table to ANG-basis matrix elements.

    With |theta> = sum_Theta c[theta, Theta] |MW_Theta> the element is
    <theta|rho|theta'> = sum_{T,T'} conj(c[theta,T]) w[T,T'] c[theta',T'],
    i.e. A = conj(C) w C^T.  Hermiticity of w is preserved exactly.
    """
    if wedge.basis is not Basis.WEDGE:
        raise ValueError("ang_from_wedge expects a WEDGE-basis table")
    if wedge.dim.d != conv.dim.d:
        raise ValueError("dimension mismatch between table and conversion matrix")
    c = conv.entries
    return DensityMatrix(wedge.dim, Basis.ANG, c.conj() @ wedge.entries @ c.T)


# --------------------------------------------------------------------------
# physicality restoration
# --------------------------------------------------------------------------

def _redistribute_eigenvalues(vals: np.ndarray) -> np.ndarray:
    """Zero negative eigenvalues and charge their mass equally to the rest.

    Repeats until no negative eigenvalue remains; the total is conserved.
    """
    out = vals.copy()
    while (out < 0).any():
        deficit = out[out < 0].sum()
        out[out < 0] = 0.0
        positive = out > 0
        if not positive.any():
            out[:] = 1.0 / len(out)
            break
        out[positive] += deficit / positive.sum()
    return out


def nearest_physical(entries: np.ndarray) -> np.ndarray:
    """Closest unit-trace PSD matrix under the eigenvalue-redistribution rule."""
    h = (entries + entries.conj().T) / 2.0
    trace = h.trace().real
    if trace <= 0:
        raise NonPhysicalState("matrix trace is not positive")
    h = h / trace
    vals, vecs = np.linalg.eigh(h)
    if vals.min() >= 0:
        return h
    vals = _redistribute_eigenvalues(vals)
    return (vecs * vals) @ vecs.conj().T


def restore_physicality(
    raw: DensityMatrix,
    method: str = NEAREST_PSD,
    records: list[MeasurementRecord] | None = None,
) -> DensityMatrix:
    """Map a raw Hermitian ANG matrix onto a physical state.

    "nearest" projects onto the unit-trace PSD cone by eigenvalue
    redistribution (deterministic, closed form).  "iterative" maximizes the
    Poisson likelihood of the supplied records over physical states; it
    requires the records and ignores raw except as a starting point.
    """
    if raw.basis is not Basis.ANG:
        raise ValueError("restore_physicality expects an ANG-basis matrix")
    if raw.hermiticity_defect() > 1e-8:
        raise NonHermitianInput(f"defect {raw.hermiticity_defect():.3e}")
    if method == NEAREST_PSD:
        return DensityMatrix(raw.dim, Basis.ANG, nearest_physical(raw.entries))
    if method == ITERATIVE_MLE:
        if records is None:
            raise MLERequiresRecords("iterative method needs measurement records")
        rho, _ = mle_estimate(records, raw.dim, start=raw)
        return rho
    raise ValueError(f"unknown method {method!r}")


def _outcome_vectors(records: list[MeasurementRecord], dim: Dimension):
    """Rank-1 outcome vectors u_i (in the efficiency-corrected frame) and counts.

    Port outcome (Theta, +-) of setting (tau, axis) has probability
    Tr[rho K]/Tr[rho G] with K = |v><v|/4, v = |MW(Theta-tau)> +- g |MW(Theta+tau)>
    (g = 1 for X, i for Y) and G = sum_Theta |MW><MW|, which is diagonal in
    the OAM basis.  Substituting sigma = G^(1/2) rho G^(1/2) / Tr[rho G]
    turns each setting into a complete POVM: probabilities are u^dag sigma u
    with u = G^(-1/2) v / 2, summing to 1 per setting.
    """
    ls = dim.modes()
    g_diag = (2 * np.pi / dim.d) * np.sinc(ls / dim.d) ** 2
    g_inv_half = 1.0 / np.sqrt(g_diag)
    mw = mw_basis_matrix(dim)

    vecs, counts = [], []
    for rec in records:
        tau = rec.setting.tau
        g = 1.0 if rec.setting.axis == "X" else 1.0j
        for i, theta in enumerate(dim.modes()):
            ip = dim.n_max + reduce_angle(int(theta) + tau, dim)
            im = dim.n_max + reduce_angle(int(theta) - tau, dim)
            for sign, count in ((1.0, rec.plus_counts[i]), (-1.0, rec.minus_counts[i])):
                v = mw[:, im] + sign * g * mw[:, ip]
                vecs.append(g_inv_half * v / 2.0)
                counts.append(count)
    return np.array(vecs), np.array(counts, dtype=float)


def mle_estimate(
    records: list[MeasurementRecord],
    dim: Dimension,
    start: DensityMatrix | None = None,
    max_iter: int = MLE_MAX_ITER,
    tol: float = MLE_TOL,
):
    """Iterative maximum-likelihood state estimate from port counts.

    Fixed-point iteration sigma -> R sigma R / Tr (R is the count-weighted
    sum of outcome projectors over their predicted probabilities), with step
    dilution whenever a full step would lower the likelihood, so the
    log-likelihood history is non-decreasing.  Stops when the per-iteration
    gain drops below tol or after max_iter iterations.

    Returns (DensityMatrix in the ANG basis, log-likelihood history).
    """
    u, counts = _outcome_vectors(records, dim)
    total = counts.sum()
    if total <= 0:
        raise NonPhysicalState("records contain no counts")

    ls = dim.modes()
    g_diag = (2 * np.pi / dim.d) * np.sinc(ls / dim.d) ** 2

    sigma = np.eye(dim.d, dtype=complex) / dim.d
    if start is not None:
        # blend toward the raw estimate for a full-rank head start
        f = ang_basis_matrix(dim)
        rho0 = nearest_physical(f @ start.entries @ f.conj().T)  # ANG -> OAM
        rho0 = 0.9 * rho0 + 0.1 * np.eye(dim.d) / dim.d
        sig0 = (np.sqrt(g_diag)[:, None] * rho0) * np.sqrt(g_diag)[None, :]
        sigma = sig0 / sig0.trace().real

    def loglik(sig):
        p = ((u.conj() @ sig) * u).sum(axis=1).real
        return float(counts @ np.log(np.maximum(p, 1e-300)))

    history = [loglik(sigma)]
    for _ in range(max_iter):
        p = np.maximum(((u.conj() @ sigma) * u).sum(axis=1).real, 1e-15)
        r = ((u * (counts / p)[:, None]).T @ u.conj()) / total
        step = 1.0
        while True:
            op = (1.0 - step) * np.eye(dim.d) + step * r
            cand = op @ sigma @ op.conj().T
            cand /= cand.trace().real
            ll = loglik(cand)
            if ll >= history[-1] or step < 1e-6:
                break
            step /= 2.0
        if ll < history[-1]:
            break  # no improving step in any direction
        sigma = cand
        history.append(ll)
        if history[-1] - history[-2] < tol:
            break

    rho = (sigma / np.sqrt(g_diag)[:, None]) / np.sqrt(g_diag)[None, :]
    rho /= rho.trace().real
    oam = DensityMatrix(dim, Basis.OAM, rho)
    return oam_to_ang(oam), history


# --------------------------------------------------------------------------
# Wigner transform
# --------------------------------------------------------------------------

def wigner_from_ang(rho: DensityMatrix) -> WignerGrid:
    """Discrete Wigner grid of an ANG-basis matrix.

    W(theta, l) = (1/d) sum_phi exp(-4*pi*i*l*phi/d) <theta+phi|rho|theta-phi>.
    Physicality is not required (diagnostics may transform raw matrices) but
    Hermiticity is, since it makes every grid value real.
    """
    if rho.basis is not Basis.ANG:
        raise ValueError("wigner_from_ang expects an ANG-basis matrix")
    if rho.hermiticity_defect() > 1e-8:
        raise NonHermitianInput(f"defect {rho.hermiticity_defect():.3e}")
    dim = rho.dim
    a = (rho.entries + rho.entries.conj().T) / 2.0
    phis = dim.modes()
    kernel = np.exp(-4j * np.pi * np.outer(dim.modes(), phis) / dim.d)  # [l, phi]
    grid = np.empty((dim.d, dim.d))
    for ti, theta in enumerate(dim.modes()):
        rows = [(dim.n_max + reduce_angle(int(theta) + int(p), dim)) for p in phis]
        cols = [(dim.n_max + reduce_angle(int(theta) - int(p), dim)) for p in phis]
        diag = a[rows, cols]
        w_row = kernel @ diag / dim.d
        if np.abs(w_row.imag).max() > 1e-10:
            raise NonHermitianInput("grid row has imaginary residue above 1e-10")
        grid[ti] = w_row.real
    return WignerGrid(dim, grid)


def marginals(grid: WignerGrid):
    """(ANG marginal over l, OAM marginal over theta)."""
    return grid.values.sum(axis=1), grid.values.sum(axis=0)


def oam_from_wigner(grid: WignerGrid) -> DensityMatrix:
    """Invert the Wigner transform back to the OAM density matrix.

    The phase-space sum is inverted analytically: for entries (a, b) of the
    ANG matrix, phi = (a-b)/2 mod d (2 is invertible since d is odd) and
    <a|rho|b> = sum_l exp(+4*pi*i*l*phi/d) W(a-phi, l); the ANG -> OAM step
    is the inverse DFT.  Composition with wigner_from_ang is the identity to
    machine precision.
    """
    dim = grid.dim
    inv2 = (dim.d + 1) // 2
    ls = dim.modes()
    a = np.empty((dim.d, dim.d), dtype=complex)
    for ai, alpha in enumerate(dim.modes()):
        for bi, beta in enumerate(dim.modes()):
            phi = reduce_angle((int(alpha) - int(beta)) * inv2, dim)
            ti = dim.n_max + reduce_angle(int(alpha) - phi, dim)
            a[ai, bi] = (np.exp(4j * np.pi * ls * phi / dim.d) * grid.values[ti]).sum()
    f = ang_basis_matrix(dim)
    return DensityMatrix(dim, Basis.OAM, f @ a @ f.conj().T)


# --------------------------------------------------------------------------
# quality metrics and pipeline
# --------------------------------------------------------------------------

def quality_report(
    rho: DensityMatrix,
    grid: WignerGrid,
    target: StateVector | None = None,
    coherence_pair: tuple[int, int] = (-1, 1),
) -> QualityReport:
    """Fidelity, degree of coherence, purity and Wigner negativity volume.

    The degree of coherence for modes (la, lb) is |rho(la,lb)| normalized by
    the geometric mean of the diagonals, reported as 0 when either diagonal
    is below 1e-12.  Fidelity <target|rho|target> is reported only when a
    target state is supplied.
    """
    if rho.basis is not Basis.OAM:
        raise ValueError("quality_report expects an OAM-basis matrix")
    la, lb = coherence_pair
    ia, ib = rho.dim.index_of(la), rho.dim.index_of(lb)
    daa = rho.entries[ia, ia].real
    dbb = rho.entries[ib, ib].real
    if daa < 1e-12 or dbb < 1e-12:
        gamma = 0.0
    else:
        gamma = float(abs(rho.entries[ia, ib]) / np.sqrt(daa * dbb))
    fidelity = None
    if target is not None:
        t = target.amplitudes
        fidelity = float((t.conj() @ rho.entries @ t).real)
    purity = float((rho.entries @ rho.entries).trace().real)
    negativity = float(np.clip(-grid.values, 0.0, None).sum())
    return QualityReport(fidelity, gamma, purity, negativity, KERNEL_ORIENTATION)


def run_reconstruction(
    records: list[MeasurementRecord],
    dim: Dimension,
    method: str = NEAREST_PSD,
    target: StateVector | None = None,
    coherence_pair: tuple[int, int] = (-1, 1),
) -> ReconstructionResult:
    """Full pipeline: records -> wedge -> ANG -> physical state -> Wigner -> report."""
    conv = build_conversion_matrix(dim)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ZeroWedgeWarning)
        wedge = wedge_matrix_from_records(records, dim)
    notes = [str(w.message) for w in caught if issubclass(w.category, ZeroWedgeWarning)]
    ang_raw = ang_from_wedge(wedge, conv)
    ang = restore_physicality(ang_raw, method, records if method == ITERATIVE_MLE else None)
    grid = wigner_from_ang(ang)
    oam = oam_from_wigner(grid)
    report = quality_report(oam, grid, target, coherence_pair)
    return ReconstructionResult(wedge, ang_raw, ang, oam, grid, report, notes)
