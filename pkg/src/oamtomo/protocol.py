"""Forward simulation of the ancilla-coupled rotation measurement.

A polarization qubit prepared in |+> = (|H>+|V>)/sqrt(2) acts as a pointer.
The joint state rho (x) |+><+| evolves under the polarization-sensitive
rotation U(tau) = exp(-(2*pi*i/d) * tau * L (x) sigma_z), which rotates the
H component by +2*pi*tau/d and the V component by the opposite angle.
Post-selecting on an angular wedge Theta and reading the pointer along the
X or Y Pauli axis recovers the wedge matrix element

    <Theta+tau| rho |Theta-tau> = (norm/2) * (<sx> + i <sy>).

Two output ports per axis play the role of the polarizing beam splitter;
only relative intensities are meaningful, so each setting's port
probabilities are normalized to a total of 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPhysicalState, NormError, ZeroWeightWedge
from .hilbert import (
    Basis,
    DensityMatrix,
    Dimension,
    StateVector,
    mw_basis_matrix,
    mw_state,
    reduce_angle,
)

AXES = ("X", "Y")

#: pointer (polarization) states over {H, V}
KET_PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
ANCILLA_PLUS = np.outer(KET_PLUS, KET_PLUS)


@dataclass
class JointState:
    """2d x 2d joint angular (x) pointer matrix, angular-major ordering."""

    dim: Dimension
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        td = 2 * self.dim.d
        if self.entries.shape != (td, td):
            raise ValueError(f"expected {td}x{td} joint matrix")

    def blocks(self) -> np.ndarray:
        """View as [d, 2, d, 2] with axes (angular, pointer, angular, pointer)."""
        d = self.dim.d
        return self.entries.reshape(d, 2, d, 2)

    def pointer_trace(self) -> np.ndarray:
        """Partial trace over the angular part -> 2x2 pointer matrix."""
        return np.einsum("iaib->ab", self.blocks())

    def angular_trace(self) -> np.ndarray:
        """Partial trace over the pointer part -> d x d angular matrix."""
        return np.einsum("iaja->ij", self.blocks())


@dataclass(frozen=True)
class MeasurementSetting:
    """One (rotation offset tau, Pauli readout axis) configuration."""

    tau: int
    axis: str

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")


@dataclass
class MeasurementRecord:
    """Per-wedge port counts for one setting.

    ``plus_counts[i]``/``minus_counts[i]`` hold the + and - port counts for
    wedge Theta = i - N.  ``seed is None`` marks a noiseless record whose
    counts equal the Poisson means exactly.
    """

    setting: MeasurementSetting
    plus_counts: np.ndarray
    minus_counts: np.ndarray
    photon_budget: float
    seed: int | None = None

    def __post_init__(self):
        self.plus_counts = np.asarray(self.plus_counts, dtype=float)
        self.minus_counts = np.asarray(self.minus_counts, dtype=float)
        if self.plus_counts.shape != self.minus_counts.shape:
            raise ValueError("port count vectors must have equal length")
        if not (np.isfinite(self.plus_counts).all() and np.isfinite(self.minus_counts).all()):
            raise ValueError("counts must be finite")
        if (self.plus_counts < 0).any() or (self.minus_counts < 0).any():
            raise ValueError("counts must be non-negative")


# --------------------------------------------------------------------------
# joint-state path
# --------------------------------------------------------------------------

def prepare_joint(rho: DensityMatrix) -> JointState:
    """Attach the |+><+| pointer: returns rho (x) |+><+|."""
    if rho.basis is not Basis.OAM:
        raise ValueError("prepare_joint expects an OAM-basis matrix")
    rho.check_physical()
    return JointState(rho.dim, np.kron(rho.entries, ANCILLA_PLUS))


def _rotation_phases(dim: Dimension, tau: int) -> np.ndarray:
    """Diagonal of U(tau) over the (angular-major) joint basis."""
    ls = dim.modes()
    ph = np.exp(-2j * np.pi * tau * ls / dim.d)
    u = np.empty(2 * dim.d, dtype=complex)
    u[0::2] = ph          # H component: rotate by +2*pi*tau/d
    u[1::2] = ph.conj()   # V component: opposite rotation
    return u


def evolve(joint: JointState, tau: int) -> JointState:
    """Conjugate by the polarization-sensitive rotation: U(tau) Omega U(tau)^dag.

    U is diagonal in the OAM (x) {H,V} product basis with phases
    exp(-+ 2*pi*i*tau*l/d), so trace and spectrum are preserved.  The sign
    is oriented so the H-conditioned angular block is rotated by +tau; this
    is the orientation under which the Pauli inversion and the Wigner
    marginals come out unreflected (see recon).
    """
    u = _rotation_phases(joint.dim, tau)
    return JointState(joint.dim, (u[:, None] * joint.entries) * u.conj()[None, :])


def _pointer_after_postselection(joint: JointState, big_theta: int) -> np.ndarray:
    """Unnormalized 2x2 pointer matrix after projecting the angular part on wedge Theta."""
    m = mw_state(big_theta, joint.dim).amplitudes
    return np.einsum("i,iajb,j->ab", m.conj(), joint.blocks(), m)


def pauli_expectations(rho: DensityMatrix, big_theta: int, tau: int):
    """Pointer Pauli readout (sx, sy, norm) for wedge Theta and rotation tau.

    Runs the full joint path (prepare -> evolve -> wedge post-selection ->
    pointer trace).  The returned values satisfy
    <Theta+tau| rho |Theta-tau> = (norm/2) * (sx + i*sy), with sx^2 + sy^2 <= 1.

    Raises ZeroWeightWedge when the post-selected wedge carries no weight.
    """
    joint = evolve(prepare_joint(rho), tau)
    sig = _pointer_after_postselection(joint, big_theta)
    weight = sig.trace().real
    norm = 2.0 * weight
    if norm <= 1e-14:
        raise ZeroWeightWedge(f"wedge {big_theta} has no weight at tau={tau}")
    sx = float((sig[0, 1] + sig[1, 0]).real / weight)
    sy = float((1j * (sig[0, 1] - sig[1, 0])).real / weight)
    return sx, sy, norm


# --------------------------------------------------------------------------
# port model
# --------------------------------------------------------------------------

def port_probabilities(rho: DensityMatrix, setting: MeasurementSetting):
    """Relative intensity per (wedge, port) for one setting.

    Computed algebraically from the wedge projection table (independently of
    the joint-state route used by pauli_expectations):

        p+-(Theta) proportional to (n +- v)/2,  n = (w++ + w--)/2,

    where w±± are the shifted wedge diagonals and v is Re (axis X) or
    Im (axis Y) of <Theta+tau|rho|Theta-tau>.  The pair is normalized so
    sum_Theta (p+ + p-) = 1.
    """
    if rho.basis is not Basis.OAM:
        raise ValueError("port_probabilities expects an OAM-basis matrix")
    rho.check_physical()
    dim = rho.dim
    m = mw_basis_matrix(dim)
    w = m.conj().T @ rho.entries @ m
    p_plus = np.zeros(dim.d)
    p_minus = np.zeros(dim.d)
    for i, theta in enumerate(dim.modes()):
        ip = dim.n_max + reduce_angle(int(theta) + setting.tau, dim)
        im = dim.n_max + reduce_angle(int(theta) - setting.tau, dim)
        n = (w[ip, ip].real + w[im, im].real) / 2.0
        v = w[ip, im].real if setting.axis == "X" else w[ip, im].imag
        p_plus[i] = (n + v) / 2.0
        p_minus[i] = (n - v) / 2.0
    total = p_plus.sum() + p_minus.sum()
    if total <= 0:
        raise NonPhysicalState("state has no weight in any wedge")
    # clip tiny negative round-off so downstream Poisson means stay valid
    p_plus = np.clip(p_plus / total, 0.0, None)
    p_minus = np.clip(p_minus / total, 0.0, None)
    return p_plus, p_minus


def sample_counts(
    p_plus: np.ndarray,
    p_minus: np.ndarray,
    photon_budget: float,
    seed: int | None,
    setting: MeasurementSetting,
) -> MeasurementRecord:
    """Poisson shot-noise model for the two camera port images.

    Each count is drawn independently with mean photon_budget * probability.
    A fixed seed gives a bit-identical record; seed None returns the means
    themselves (noiseless record).
    """
    if photon_budget < 0:
        raise ValueError("photon_budget must be >= 0")
    mean_plus = photon_budget * np.asarray(p_plus, dtype=float)
    mean_minus = photon_budget * np.asarray(p_minus, dtype=float)
    if seed is None:
        plus, minus = mean_plus, mean_minus
    else:
        rng = np.random.default_rng(seed)
        plus = rng.poisson(mean_plus).astype(float)
        minus = rng.poisson(mean_minus).astype(float)
    return MeasurementRecord(setting, plus, minus, photon_budget, seed)


def measurement_plan(dim: Dimension, include_tau0_y: bool = False) -> list[MeasurementSetting]:
    """Minimal covering plan: (0,X) plus (tau,X),(tau,Y) for tau = 1..N.

    Size is exactly d.  Because d is odd, the bra-ket separations 2*tau mod d
    for tau = 0..N plus Hermitian conjugation reach every off-diagonal, so
    the plan determines the full wedge matrix.  (0,Y) carries no information
    (sy vanishes identically at tau = 0) and is included only on request as
    a null-test diagnostic.
    """
    plan = [MeasurementSetting(0, "X")]
    if include_tau0_y:
        plan.append(MeasurementSetting(0, "Y"))
    for tau in range(1, dim.n_max + 1):
        plan.append(MeasurementSetting(tau, "X"))
        plan.append(MeasurementSetting(tau, "Y"))
    return plan


def derive_setting_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit per-setting seed from (base seed, setting index)."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def run_campaign(
    rho: DensityMatrix,
    photon_budget: float,
    base_seed: int | None = None,
    include_tau0_y: bool = False,
) -> list[MeasurementRecord]:
    """Simulate the full measurement plan for one state.

    base_seed None produces noiseless records; otherwise each setting gets
    its own seed derived from (base_seed, plan index), so campaigns are
    reproducible regardless of evaluation order.
    """
    records = []
    for i, setting in enumerate(measurement_plan(rho.dim, include_tau0_y)):
        p_plus, p_minus = port_probabilities(rho, setting)
        seed = None if base_seed is None else derive_setting_seed(base_seed, i)
        records.append(sample_counts(p_plus, p_minus, photon_budget, seed, setting))
    return records


# --------------------------------------------------------------------------
# continuous-angle camera frames
# --------------------------------------------------------------------------

def _wedge_field(member: StateVector, phis: np.ndarray) -> np.ndarray:
    """Camera-path field of one pure member, piecewise constant per wedge.

    The wedge post-selection model resolves the state in the orthogonal
    top-hat sectors, so the matching field at angle phi is the wedge
    amplitude <Theta|psi> of the sector containing phi.  This synthesis
    makes binned frame intensities agree with the discrete port model up to
    quadrature error; a smooth band-limited profile would not (the sector
    field integral differs from the sector intensity integral).

    A sample landing exactly on a sector boundary takes the mean of the two
    adjacent amplitudes (the value the field's own Fourier series converges
    to at a jump); this halves the trapezoidal binning bias at the edges.
    """
    dim = member.dim
    amps = np.array(
        [mw_state(int(t), dim).inner(member) for t in dim.modes()]
    )
    # sector index: wedge k spans 2*pi*(k +- 1/2)/d
    t = phis * dim.d / (2 * np.pi) + 0.5
    k = np.floor(t).astype(int)
    frac = t - k
    on_edge = (frac < 1e-9) | (frac > 1 - 1e-9)
    k = k + (frac > 1 - 1e-9)  # snap the k+1 edge onto its boundary
    lo = (k - 1 + dim.n_max) % dim.d
    hi = (k + dim.n_max) % dim.d
    field = amps[hi].copy()
    field[on_edge] = (amps[lo][on_edge] + amps[hi][on_edge]) / 2.0
    return field


def _fourier_field(member: StateVector, phis: np.ndarray) -> np.ndarray:
    """Band-limited beam profile sum_l c_l exp(i*l*phi)/sqrt(2*pi)."""
    ls = member.dim.modes()
    return (member.amplitudes[None, :] * np.exp(1j * np.outer(phis, ls))).sum(axis=1) / np.sqrt(2 * np.pi)


def synth_polar_frame(
    ensemble: list[tuple[float, StateVector]],
    setting: MeasurementSetting,
    port: str,
    samples: int,
    profile: str = "wedge",
):
    """Synthesize a continuous-angle camera frame for one (setting, port).

    At each angle phi_k = 2*pi*k/samples the intensity is the ensemble-
    weighted |f(phi - beta) + g*f(phi + beta)|^2 / 2 with beta = 2*pi*tau/d;
    g = +-1 selects the X-axis ports and g = -+i the Y-axis ports.  Mixed
    states are intensity sums over members, never amplitude sums.

    profile selects the field synthesis: "wedge" (default) renders the
    state's wedge decomposition, which is the model the discrete port
    probabilities are built on; "fourier" renders the band-limited OAM sum
    (a physical beam cross-section, which agrees with the discrete model
    only for states that vary slowly across a wedge).

    Returns (angles, intensities) arrays.
    """
    if port not in ("+", "-"):
        raise ValueError(f"port must be '+' or '-', got {port!r}")
    if samples < 1:
        raise ValueError("samples must be positive")
    weights = np.array([wt for wt, _ in ensemble], dtype=float)
    if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
        raise NormError(f"ensemble weights must be >= 0 and sum to 1, got sum {weights.sum()!r}")
    if profile not in ("wedge", "fourier"):
        raise ValueError(f"unknown profile {profile!r}")

    dims = {member.dim.d for _, member in ensemble}
    if len(dims) != 1:
        raise ValueError("ensemble members must share one dimension")
    dim = ensemble[0][1].dim
    beta = 2 * np.pi * setting.tau / dim.d
    sign = 1.0 if port == "+" else -1.0
    g = sign if setting.axis == "X" else -1j * sign

    field = _wedge_field if profile == "wedge" else _fourier_field
    angles = 2 * np.pi * np.arange(samples) / samples
    intensity = np.zeros(samples)
    for wt, member in ensemble:
        a = field(member, (angles - beta) % (2 * np.pi))
        b = field(member, (angles + beta) % (2 * np.pi))
        intensity += wt * np.abs(a + g * b) ** 2 / 2.0
    return angles, intensity
