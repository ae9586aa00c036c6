"""Built-in invariant suite, runnable from the CLI without pytest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hilbert, protocol, recon
from .hilbert import Basis, Dimension


@dataclass
class CheckResult:
    name: str
    d: int
    passed: bool
    detail: str


def _check_orthonormality(dim: Dimension) -> float:
    f = hilbert.ang_basis_matrix(dim)
    gram = f.conj().T @ f
    return float(np.abs(gram - np.eye(dim.d)).max())


def _check_shift(dim: Dimension) -> float:
    worst = 0.0
    for theta in dim.modes():
        for tau in dim.modes():
            rotated = hilbert.apply_rotation(hilbert.ang_state(int(theta), dim), int(tau))
            direct = hilbert.ang_state(int(theta) + int(tau), dim)
            worst = max(worst, float(np.abs(rotated.amplitudes - direct.amplitudes).max()))
    return worst


def _check_mw_identity(dim: Dimension) -> float:
    worst = 0.0
    for li, l in enumerate(dim.modes()):
        acc = np.zeros(dim.d, dtype=complex)
        for t in dim.modes():
            acc += np.exp(2j * np.pi * int(t) * int(l) / dim.d) * hilbert.mw_state(int(t), dim).amplitudes
        acc *= hilbert.inverse_sinc(int(l), dim) / np.sqrt(2 * np.pi)
        expected = np.zeros(dim.d)
        expected[li] = 1.0
        worst = max(worst, float(np.abs(acc - expected).max()))
    return worst


def _check_conversion(dim: Dimension, trials: int = 20) -> float:
    rng = np.random.default_rng(2024)
    conv = hilbert.build_conversion_matrix(dim)
    f = hilbert.ang_basis_matrix(dim)
    worst = 0.0
    for _ in range(trials):
        rho = hilbert.random_density(dim, rng)
        table = hilbert.wedge_projection_table(rho)
        via_wedge = recon.ang_from_wedge(table, conv).entries
        direct = f.conj().T @ rho.entries @ f
        worst = max(worst, float(np.abs(via_wedge - direct).max()))
    return worst


def _check_round_trip(dim: Dimension, trials: int = 10) -> float:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(trials):
        rho = hilbert.random_density(dim, rng)
        records = protocol.run_campaign(rho, photon_budget=1.0, base_seed=None)
        result = recon.run_reconstruction(records, dim)
        worst = max(worst, float(np.abs(result.oam.entries - rho.entries).max()))
    return worst


def _check_marginals(dim: Dimension, trials: int = 10) -> float:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(trials):
        rho = hilbert.random_density(dim, rng)
        grid = recon.wigner_from_ang(hilbert.oam_to_ang(rho))
        p_ang, p_oam = recon.marginals(grid)
        ang_diag = np.array([hilbert.ang_projection(rho, int(t), int(t)).real for t in dim.modes()])
        worst = max(worst, float(np.abs(p_oam - np.diag(rho.entries).real).max()))
        worst = max(worst, float(np.abs(p_ang - ang_diag).max()))
    return worst


def _check_mixture_positivity(dim: Dimension) -> float:
    if dim.n_max < 1:
        return 0.0
    mix = (
        hilbert.density_from_state(hilbert.oam_state(1, dim)).entries
        + hilbert.density_from_state(hilbert.oam_state(-1, dim)).entries
    ) / 2.0
    rho = hilbert.DensityMatrix(dim, Basis.OAM, mix)
    grid = recon.wigner_from_ang(hilbert.oam_to_ang(rho))
    row = grid.values[:, dim.index_of(0)]
    return float(max(0.0, -row.min()))


_CHECKS = [
    ("orthonormality", _check_orthonormality, 1e-12),
    ("shift-property", _check_shift, 1e-12),
    ("mw-identity", _check_mw_identity, 1e-10),
    ("conversion-exactness", _check_conversion, 1e-10),
    ("round-trip", _check_round_trip, 1e-8),
    ("marginals", _check_marginals, 1e-10),
    ("mixture-positivity", _check_mixture_positivity, 1e-12),
]


def run_selftest(dims=(3, 5, 7)) -> list[CheckResult]:
    """Run every invariant check at each dimension; returns one row per pair."""
    results = []
    for d in dims:
        dim = Dimension.from_d(d)
        for name, check, tol in _CHECKS:
            err = check(dim)
            results.append(CheckResult(name, d, err <= tol, f"err={err:.3e} tol={tol:.0e}"))
    return results
