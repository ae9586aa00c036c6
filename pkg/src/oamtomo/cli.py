"""Command-line interface.

Subcommands: simulate, reconstruct, wigner, report, bin, selftest.
Exit codes: 0 success, 1 selftest failure, 2 configuration error,
3 I/O error, 4 malformed input file, 5 plan-coverage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ingest, protocol, recon, selftest
from .errors import (
    IoError,
    MissingSetting,
    NormError,
    OamTomoError,
    RangeError,
    SchemaError,
)
from .hilbert import Basis, Dimension, ang_to_oam, oam_to_ang

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SPEC = 4
EXIT_PLAN = 5


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc


def _write_text(path, text) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _load_state_spec(path) -> ingest.StateSpec:
    try:
        return ingest.parse_state_spec(_read_text(path))
    except (SchemaError, NormError, RangeError) as exc:
        raise _CliError(EXIT_SPEC, f"bad state spec {path}: {exc}") from exc


def _parse_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise _CliError(EXIT_CONFIG, f"--pair expects 'la,lb', got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise _CliError(EXIT_CONFIG, f"--pair expects integers: {exc}") from exc


def _check_dim_flag(d_flag: int | None, dim: Dimension, source: str) -> None:
    if d_flag is None:
        return
    if d_flag < 3 or d_flag % 2 == 0:
        raise _CliError(EXIT_CONFIG, "dimension must be odd and >= 3")
    if d_flag != dim.d:
        raise _CliError(EXIT_CONFIG, f"--d {d_flag} does not match {source} (d={dim.d})")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = _load_state_spec(args.state)
    _check_dim_flag(args.d, spec.dim, "state spec")
    if spec.dim.d < 3:
        raise _CliError(EXIT_CONFIG, "tomography needs d >= 3")
    if args.photons < 0:
        raise _CliError(EXIT_CONFIG, "--photons must be >= 0")
    base_seed = None if args.no_noise else args.seed
    if not args.no_noise and base_seed is None:
        raise _CliError(EXIT_CONFIG, "noisy simulation needs --seed (or pass --no-noise)")
    rho = spec.density_matrix()
    records = protocol.run_campaign(rho, args.photons, base_seed)
    campaign = ingest.Campaign(spec.dim, base_seed, args.photons, records)
    out = Path(args.out) / "records.json"
    _write_text(out, ingest.write_records(campaign))
    print(f"wrote {out} ({len(records)} settings)")
    return EXIT_OK


def _load_campaign(path) -> ingest.Campaign:
    try:
        return ingest.parse_records(_read_text(path))
    except (SchemaError, RangeError) as exc:
        raise _CliError(EXIT_SPEC, f"bad record file {path}: {exc}") from exc


def cmd_reconstruct(args) -> int:
    campaign = _load_campaign(args.records)
    _check_dim_flag(args.d, campaign.dim, "record file")
    target = None
    if args.target is not None:
        spec = _load_state_spec(args.target)
        if spec.kind != "PURE":
            raise _CliError(EXIT_CONFIG, "--target must be a PURE state spec")
        if spec.dim.d != campaign.dim.d:
            raise _CliError(EXIT_CONFIG, "target dimension does not match records")
        target = spec.members[0][1]
    pair = _parse_pair(args.pair)
    try:
        if abs(pair[0]) > campaign.dim.n_max or abs(pair[1]) > campaign.dim.n_max:
            raise RangeError(f"pair {pair} outside [-{campaign.dim.n_max}, {campaign.dim.n_max}]")
        result = recon.run_reconstruction(
            campaign.records, campaign.dim, method=args.mle, target=target, coherence_pair=pair
        )
    except MissingSetting as exc:
        raise _CliError(EXIT_PLAN, f"plan coverage failure: {exc}") from exc
    except RangeError as exc:
        raise _CliError(EXIT_CONFIG, str(exc)) from exc
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    provenance = {
        "seed": campaign.base_seed,
        "photons": campaign.photons,
        "plan": [[r.setting.tau, r.setting.axis] for r in campaign.records],
        "method": args.mle,
    }
    try:
        manifest = ingest.write_outputs(
            result.ang, result.oam, result.wigner, result.report,
            args.out, provenance, result.warnings,
        )
    except IoError as exc:
        raise _CliError(EXIT_IO, str(exc)) from exc
    print(f"wrote {len(manifest['files'])} files to {args.out}")
    return EXIT_OK


def _load_matrix(args) -> "recon.DensityMatrix":
    try:
        real_text = _read_text(args.matrix_real)
        imag_text = None if args.matrix_imag is None else _read_text(args.matrix_imag)
        return ingest.matrix_from_csv_pair(real_text, imag_text)
    except SchemaError as exc:
        raise _CliError(EXIT_SPEC, f"bad matrix CSV: {exc}") from exc


def cmd_wigner(args) -> int:
    matrix = _load_matrix(args)
    if matrix.basis is Basis.OAM:
        matrix = oam_to_ang(matrix)
    elif matrix.basis is not Basis.ANG:
        raise _CliError(EXIT_CONFIG, "matrix must be in the OAM or ANG basis")
    grid = recon.wigner_from_ang(matrix)
    out = Path(args.out) / "wigner.csv"
    _write_text(out, ingest.wigner_to_csv(grid))
    pgm, lo, hi = ingest.heatmap_pgm(grid)
    try:
        (Path(args.out) / "wigner.pgm").write_bytes(pgm)
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot write heatmap: {exc}") from exc
    print(f"wrote {out} and wigner.pgm (scale [{lo:g}, {hi:g}])")
    return EXIT_OK


def cmd_report(args) -> int:
    matrix = _load_matrix(args)
    if matrix.basis is Basis.ANG:
        matrix = ang_to_oam(matrix)
    elif matrix.basis is not Basis.OAM:
        raise _CliError(EXIT_CONFIG, "matrix must be in the OAM or ANG basis")
    try:
        grid = ingest.wigner_from_csv(_read_text(args.wigner))
    except SchemaError as exc:
        raise _CliError(EXIT_SPEC, f"bad grid CSV: {exc}") from exc
    target = None
    if args.target is not None:
        spec = _load_state_spec(args.target)
        if spec.kind != "PURE" or spec.dim.d != matrix.dim.d:
            raise _CliError(EXIT_CONFIG, "--target must be a PURE spec of matching dimension")
        target = spec.members[0][1]
    pair = _parse_pair(args.pair)
    try:
        report = recon.quality_report(matrix, grid, target, pair)
    except RangeError as exc:
        raise _CliError(EXIT_CONFIG, str(exc)) from exc
    text = ingest.report_to_json(report)
    if args.out is not None:
        _write_text(Path(args.out) / "report.json", text)
    else:
        print(text)
    return EXIT_OK


def cmd_bin(args) -> int:
    if args.d is None or args.d < 3 or args.d % 2 == 0:
        raise _CliError(EXIT_CONFIG, "bin needs --d (odd, >= 3)")
    dim = Dimension.from_d(args.d)
    path = Path(args.frame)
    if path.suffix.lower() == ".pgm":
        sidecar = path.with_suffix(".json")
        try:
            geo = json.loads(_read_text(sidecar))
            center = (float(geo["cx"]), float(geo["cy"]))
            r_min, r_max = float(geo["r_min"]), float(geo["r_max"])
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise _CliError(EXIT_SPEC, f"bad sidecar {sidecar}: {exc}") from exc
        try:
            frame = ingest.load_pgm_frame(_read_bytes(path), center, r_min, r_max, args.samples)
        except OamTomoError as exc:
            raise _CliError(EXIT_SPEC, f"cannot load {path}: {exc}") from exc
    else:
        try:
            frame = ingest.frame_from_csv(_read_text(path))
        except (SchemaError, ValueError) as exc:
            raise _CliError(EXIT_SPEC, f"bad frame CSV {path}: {exc}") from exc
    try:
        totals = ingest.bin_to_wedges(frame, dim)
    except OamTomoError as exc:
        raise _CliError(EXIT_SPEC, str(exc)) from exc
    for k, v in zip(dim.modes(), totals):
        print(f"{k},{ingest.FLOAT_FMT % v}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    for d in dims:
        if d < 3 or d % 2 == 0:
            raise _CliError(EXIT_CONFIG, f"selftest dimensions must be odd and >= 3, got {d}")
    results = selftest.run_selftest(dims)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "pass" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"{r.name:<{width}}  d={r.d:<3} {status}  {r.detail}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oamtomo",
        description="Simulate and reconstruct discrete azimuthal Wigner distributions of OAM states.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a measurement campaign for a state spec")
    sim.add_argument("--state", required=True, help="state spec JSON file")
    sim.add_argument("--d", type=int, default=None, help="expected dimension (consistency check)")
    sim.add_argument("--photons", type=float, default=1e6, help="photon budget per setting")
    sim.add_argument("--seed", type=int, default=None, help="base seed for shot noise")
    sim.add_argument("--no-noise", action="store_true", help="noiseless records (counts = means)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct state and Wigner grid from records")
    rec.add_argument("records", help="record JSON file from simulate")
    rec.add_argument("--d", type=int, default=None, help="expected dimension (consistency check)")
    rec.add_argument("--mle", choices=(recon.NEAREST_PSD, recon.ITERATIVE_MLE),
                     default=recon.NEAREST_PSD, help="physicality restoration method")
    rec.add_argument("--target", default=None, help="PURE state spec for fidelity")
    rec.add_argument("--pair", default="-1,1", help="coherence pair 'la,lb'")
    rec.add_argument("--out", required=True, help="output directory")
    rec.set_defaults(func=cmd_reconstruct)

    wig = sub.add_parser("wigner", help="Wigner grid from a density-matrix CSV pair")
    wig.add_argument("matrix_real", help="real-part CSV")
    wig.add_argument("matrix_imag", nargs="?", default=None, help="imaginary-part CSV")
    wig.add_argument("--out", required=True, help="output directory")
    wig.set_defaults(func=cmd_wigner)

    rep = sub.add_parser("report", help="quality report from matrix and grid files")
    rep.add_argument("matrix_real", help="real-part CSV")
    rep.add_argument("matrix_imag", nargs="?", default=None, help="imaginary-part CSV")
    rep.add_argument("--wigner", required=True, help="Wigner grid CSV")
    rep.add_argument("--target", default=None, help="PURE state spec for fidelity")
    rep.add_argument("--pair", default="-1,1", help="coherence pair 'la,lb'")
    rep.add_argument("--out", default=None, help="output directory (default: print)")
    rep.set_defaults(func=cmd_report)

    binp = sub.add_parser("bin", help="bin a polar frame (CSV or PGM+sidecar) into wedges")
    binp.add_argument("frame", help="frame CSV or PGM image")
    binp.add_argument("--d", type=int, required=True, help="dimension")
    binp.add_argument("--samples", type=int, default=720, help="angular samples for PGM input")
    binp.set_defaults(func=cmd_bin)

    selft = sub.add_parser("selftest", help="run the invariant suite")
    selft.add_argument("--dims", default="3,5,7", help="comma-separated odd dimensions")
    selft.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OamTomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
