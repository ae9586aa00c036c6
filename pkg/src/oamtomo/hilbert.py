"""Finite-dimensional Hilbert-space machinery for azimuthal tomography.

The state space is spanned by OAM eigenvectors |l> with |l| <= N, so the
dimension d = 2N+1 is always odd.  Four bases live on this space:

* OAM      - the eigenbasis of the angular-momentum operator L,
* ANG      - discrete angular states, the d-point DFT of the OAM basis,
* wedge    - top-hat angular sectors of width 2*pi/d (infinite OAM content),
* MW       - "modified wedge" states, the wedge states truncated to |l| <= N.

True wedge states are never materialized: for any state confined to
|l| <= N a wedge projection equals the corresponding MW projection, so all
wedge quantities here are computed from the finite MW vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonPhysicalState, RangeError

HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-9
TRACE_TOL = 1e-10


class Basis(Enum):
    OAM = "OAM"
    ANG = "ANG"
    WEDGE = "WEDGE"


@dataclass(frozen=True)
class Dimension:
    """Space size: N is the maximum |OAM|, d = 2N+1 the (odd) dimension."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {self.n_max}")

    @property
    def d(self) -> int:
        return 2 * self.n_max + 1

    @classmethod
    def from_d(cls, d: int) -> "Dimension":
        if d < 1 or d % 2 == 0:
            raise ValueError(f"dimension must be a positive odd integer, got {d}")
        return cls((d - 1) // 2)

    def modes(self) -> np.ndarray:
        """Integer array [-N, ..., N]; array index i maps to l = i - N."""
        return np.arange(-self.n_max, self.n_max + 1)

    def index_of(self, l: int) -> int:
        if abs(l) > self.n_max:
            raise RangeError(f"index {l} outside [-{self.n_max}, {self.n_max}]")
        return l + self.n_max


def reduce_angle(value: int, dim: Dimension) -> int:
    """Reduce an angle/mode label modulo d into the canonical window [-N, N].

    The reduction implements the periodicity |theta + d> = |theta>; because d
    is odd the representative is unique.
    """
    return (value + dim.n_max) % dim.d - dim.n_max


@dataclass
class StateVector:
    """d complex amplitudes over the OAM basis (index i <-> l = i - N).

    Normalized states have unit norm; MW states deliberately do not and are
    stored exactly as defined, without renormalization.
    """

    dim: Dimension
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.dim.d,):
            raise ValueError(
                f"expected {self.dim.d} amplitudes, got shape {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass
class DensityMatrix:
    """d x d complex matrix tagged with the basis its entries refer to.

    OAM/ANG matrices describe physical states (Hermitian, unit trace, PSD up
    to tolerance).  WEDGE-basis matrices are raw projection tables
    <Theta|rho|Theta'>; wedge states are not unit-norm, so those tables carry
    no trace/positivity constraint.
    """

    dim: Dimension
    basis: Basis
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.shape != (self.dim.d, self.dim.d):
            raise ValueError(f"expected {self.dim.d}x{self.dim.d} entries")

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())

    def check_physical(self, positivity_tol: float = POSITIVITY_TOL) -> None:
        """Raise NonPhysicalState unless Hermitian, unit-trace and PSD."""
        if self.basis is Basis.WEDGE:
            raise NonPhysicalState("wedge projection tables are not state matrices")
        if self.hermiticity_defect() > 1e-8:
            raise NonPhysicalState(
                f"Hermiticity defect {self.hermiticity_defect():.3e}"
            )
        tr = self.entries.trace()
        if abs(tr - 1.0) > 1e-8:
            raise NonPhysicalState(f"trace {tr:.6g} != 1")
        lo = float(np.linalg.eigvalsh((self.entries + self.entries.conj().T) / 2).min())
        if lo < -positivity_tol:
            raise NonPhysicalState(f"minimum eigenvalue {lo:.3e}")


@dataclass
class ConversionMatrix:
    """Coefficients mapping MW-basis kets to an ANG ket: |theta> = sum_T c[theta,T] |MW_T>.

    Row index is the ANG label theta, column index the wedge label Theta; the
    value depends only on (Theta - theta) mod d, so the matrix is circulant.
    """

    dim: Dimension
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.shape != (self.dim.d, self.dim.d):
            raise ValueError(f"expected {self.dim.d}x{self.dim.d} entries")


# --------------------------------------------------------------------------
# state constructors
# --------------------------------------------------------------------------

def oam_state(l: int, dim: Dimension) -> StateVector:
    """OAM eigenvector |l>."""
    amps = np.zeros(dim.d, dtype=complex)
    amps[dim.index_of(l)] = 1.0
    return StateVector(dim, amps)


def ang_state(theta: int, dim: Dimension) -> StateVector:
    """Discrete angular state: amplitude exp(-2*pi*i*theta*l/d)/sqrt(d) at l.

    The d states theta = -N..N form an orthonormal (DFT) basis and satisfy
    the periodicity |theta + d> = |theta>.
    """
    ls = dim.modes()
    amps = np.exp(-2j * np.pi * theta * ls / dim.d) / np.sqrt(dim.d)
    return StateVector(dim, amps)


def mw_state(big_theta: int, dim: Dimension) -> StateVector:
    """Modified-wedge state: the top-hat wedge state truncated to |l| <= N.

    Amplitude at l is (sqrt(2*pi)/d) * sinc(l*pi/d) * exp(-2*pi*i*Theta*l/d)
    with sinc(x) = sin(x)/x.  The norm is deliberately not unity; the
    conversion algebra is exact only with these coefficients.
    """
    ls = dim.modes()
    sinc = np.sinc(ls / dim.d)  # np.sinc(x) = sin(pi x)/(pi x)
    amps = (np.sqrt(2 * np.pi) / dim.d) * sinc * np.exp(-2j * np.pi * big_theta * ls / dim.d)
    return StateVector(dim, amps)


def ang_basis_matrix(dim: Dimension) -> np.ndarray:
    """d x d matrix whose column (theta+N) holds the ANG state amplitudes."""
    return np.column_stack([ang_state(t, dim).amplitudes for t in dim.modes()])


def mw_basis_matrix(dim: Dimension) -> np.ndarray:
    """d x d matrix whose column (Theta+N) holds the MW state amplitudes."""
    return np.column_stack([mw_state(t, dim).amplitudes for t in dim.modes()])


# --------------------------------------------------------------------------
# conversion coefficients
# --------------------------------------------------------------------------

def inverse_sinc(l: int, dim: Dimension) -> float:
    """(l*pi/d)/sin(l*pi/d), with the removable singularity at l = 0 set to 1."""
    if abs(l) > dim.n_max:
        raise RangeError(f"mode {l} outside [-{dim.n_max}, {dim.n_max}]")
    if l == 0:
        return 1.0
    x = l * np.pi / dim.d
    return float(x / np.sin(x))


def conversion_coefficient(theta: int, big_theta: int, dim: Dimension) -> complex:
    """Expansion coefficient of |theta> over the MW basis.

    c(theta, Theta) = (1/sqrt(2*pi*d)) * sum_l inverse_sinc(l) *
    exp(2*pi*i*l*(Theta-theta)/d); it depends only on (Theta - theta) mod d
    and is real because inverse_sinc is even in l.
    """
    ls = dim.modes()
    weights = np.array([inverse_sinc(int(l), dim) for l in ls])
    phases = np.exp(2j * np.pi * ls * (big_theta - theta) / dim.d)
    return complex((weights * phases).sum() / np.sqrt(2 * np.pi * dim.d))


def build_conversion_matrix(dim: Dimension) -> ConversionMatrix:
    """Assemble the full circulant coefficient matrix from its first row."""
    row0 = np.array([conversion_coefficient(0, int(t), dim) for t in dim.modes()])
    c = np.empty((dim.d, dim.d), dtype=complex)
    for i, theta in enumerate(dim.modes()):
        for j, big in enumerate(dim.modes()):
            c[i, j] = row0[reduce_angle(int(big) - int(theta), dim) + dim.n_max]
    return ConversionMatrix(dim, c)


# --------------------------------------------------------------------------
# rotations and projections
# --------------------------------------------------------------------------

def apply_rotation(state: StateVector, tau: int) -> StateVector:
    """Rotate by the lattice angle 2*pi*tau/d.

    Multiplies the OAM amplitude at l by exp(-2*pi*i*tau*l/d), which shifts
    ANG and MW labels: |theta> -> |theta+tau>, |MW_Theta> -> |MW_Theta+tau>.
    """
    ls = state.dim.modes()
    phase = np.exp(-2j * np.pi * tau * ls / state.dim.d)
    return StateVector(state.dim, state.amplitudes * phase)


def wedge_projection(rho: DensityMatrix, big_theta: int, big_theta2: int) -> complex:
    """<Theta| rho |Theta'> for rho expressed in the OAM basis.

    Valid as the true (infinite-sum) wedge projection because rho is confined
    to |l| <= N, where wedge and MW states coincide.
    """
    if rho.basis is not Basis.OAM:
        raise ValueError(f"wedge_projection needs an OAM-basis matrix, got {rho.basis}")
    bra = mw_state(big_theta, rho.dim).amplitudes
    ket = mw_state(big_theta2, rho.dim).amplitudes
    return complex(bra.conj() @ rho.entries @ ket)


def ang_projection(rho: DensityMatrix, theta: int, theta2: int) -> complex:
    """<theta| rho |theta'> for rho expressed in the OAM basis."""
    if rho.basis is not Basis.OAM:
        raise ValueError(f"ang_projection needs an OAM-basis matrix, got {rho.basis}")
    bra = ang_state(theta, rho.dim).amplitudes
    ket = ang_state(theta2, rho.dim).amplitudes
    return complex(bra.conj() @ rho.entries @ ket)


def wedge_projection_table(rho: DensityMatrix) -> DensityMatrix:
    """Full table w[Theta, Theta'] = <Theta|rho|Theta'> as a WEDGE-basis matrix."""
    if rho.basis is not Basis.OAM:
        raise ValueError("wedge_projection_table needs an OAM-basis matrix")
    m = mw_basis_matrix(rho.dim)
    return DensityMatrix(rho.dim, Basis.WEDGE, m.conj().T @ rho.entries @ m)


# --------------------------------------------------------------------------
# basis changes and test states
# --------------------------------------------------------------------------

def oam_to_ang(rho: DensityMatrix) -> DensityMatrix:
    """Re-express an OAM-basis matrix in the ANG basis."""
    if rho.basis is not Basis.OAM:
        raise ValueError("expected an OAM-basis matrix")
    f = ang_basis_matrix(rho.dim)
    return DensityMatrix(rho.dim, Basis.ANG, f.conj().T @ rho.entries @ f)


def ang_to_oam(rho: DensityMatrix) -> DensityMatrix:
    """Re-express an ANG-basis matrix in the OAM basis."""
    if rho.basis is not Basis.ANG:
        raise ValueError("expected an ANG-basis matrix")
    f = ang_basis_matrix(rho.dim)
    return DensityMatrix(rho.dim, Basis.OAM, f @ rho.entries @ f.conj().T)


def density_from_state(state: StateVector) -> DensityMatrix:
    """|psi><psi| in the OAM basis."""
    return DensityMatrix(state.dim, Basis.OAM, np.outer(state.amplitudes, state.amplitudes.conj()))


def random_density(dim: Dimension, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random physical OAM-basis state from a Ginibre ensemble."""
    rank = dim.d if rank is None else rank
    g = rng.normal(size=(dim.d, rank)) + 1j * rng.normal(size=(dim.d, rank))
    rho = g @ g.conj().T
    rho /= rho.trace().real
    return DensityMatrix(dim, Basis.OAM, rho)
