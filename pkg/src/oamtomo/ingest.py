"""File formats and data ingestion.

Formats (all UTF-8, documented in the README):

* state spec     - JSON {"d", "kind": "PURE"|"ENSEMBLE", "members": [...]}
* record file    - JSON {"d", "seed", "photons", "records": [...]}
* matrices/grids - CSV with a header row and column of basis labels, values
                   printed with 17 significant digits (lossless round trip)
* images         - PGM P2/P5, 8- or 16-bit, with a JSON sidecar giving the
                   annulus geometry {"cx", "cy", "r_min", "r_max"}
"""

from __future__ import annotations

import hashlib
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyFrame,
    GeometryError,
    IoError,
    NormError,
    PgmFormatError,
    RangeError,
    SchemaError,
)
from .hilbert import Basis, DensityMatrix, Dimension, StateVector, density_from_state
from .protocol import AXES, MeasurementRecord, MeasurementSetting, derive_setting_seed
from .recon import QualityReport, WignerGrid

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % float(x)


# --------------------------------------------------------------------------
# state specs
# --------------------------------------------------------------------------

@dataclass
class StateSpec:
    """Parsed state description: a pure state or a weighted ensemble."""

    dim: Dimension
    kind: str  # "PURE" | "ENSEMBLE"
    members: list[tuple[float, StateVector]]

    def density_matrix(self) -> DensityMatrix:
        rho = np.zeros((self.dim.d, self.dim.d), dtype=complex)
        for weight, member in self.members:
            rho += weight * density_from_state(member).entries
        return DensityMatrix(self.dim, Basis.OAM, rho)


def _require(condition, message):
    if not condition:
        raise SchemaError(message)


def parse_state_spec(text: str) -> StateSpec:
    """Parse and validate a state-spec JSON document.

    Member amplitudes off unit norm by at most 1e-3 are renormalized with a
    warning; larger deviations raise NormError.  Mode labels outside [-N, N]
    raise RangeError.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be an object")
    for key in ("d", "kind", "members"):
        _require(key in doc, f"missing field {key!r}")
    _require(isinstance(doc["d"], int) and not isinstance(doc["d"], bool), "'d' must be an integer")
    try:
        dim = Dimension.from_d(doc["d"])
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    kind = doc["kind"]
    _require(kind in ("PURE", "ENSEMBLE"), f"kind must be PURE or ENSEMBLE, got {kind!r}")
    _require(isinstance(doc["members"], list) and doc["members"], "'members' must be a non-empty list")
    if kind == "PURE":
        _require(len(doc["members"]) == 1, "a PURE spec must have exactly one member")

    members = []
    total_weight = 0.0
    for m in doc["members"]:
        _require(isinstance(m, dict), "each member must be an object")
        _require("weight" in m and "amps" in m, "member needs 'weight' and 'amps'")
        _require(isinstance(m["weight"], (int, float)) and not isinstance(m["weight"], bool),
                 "'weight' must be a number")
        weight = float(m["weight"])
        _require(isinstance(m["amps"], list) and m["amps"], "'amps' must be a non-empty list")
        if weight < 0:
            raise NormError(f"negative member weight {weight}")
        amps = np.zeros(dim.d, dtype=complex)
        for entry in m["amps"]:
            _require(isinstance(entry, dict), "each amplitude must be an object")
            for key in ("l", "re", "im"):
                _require(key in entry, f"amplitude needs field {key!r}")
            _require(isinstance(entry["l"], int) and not isinstance(entry["l"], bool),
                     "'l' must be an integer")
            for key in ("re", "im"):
                _require(isinstance(entry[key], (int, float)) and not isinstance(entry[key], bool),
                         f"{key!r} must be a number")
            l = entry["l"]
            if abs(l) > dim.n_max:
                raise RangeError(f"mode l={l} outside [-{dim.n_max}, {dim.n_max}] for d={dim.d}")
            amps[dim.index_of(l)] += complex(entry["re"], entry["im"])
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > 1e-3:
            raise NormError(f"member norm {norm:.6g} deviates from 1 by more than 1e-3")
        if abs(norm - 1.0) > 1e-9:
            warnings.warn(f"member norm {norm:.9g} renormalized to 1")
        members.append((weight, StateVector(dim, amps / norm)))
        total_weight += weight
    if abs(total_weight - 1.0) > 1e-9:
        raise NormError(f"member weights sum to {total_weight!r}, expected 1")
    return StateSpec(dim, kind, members)


def write_state_spec(spec: StateSpec) -> str:
    members = []
    for weight, member in spec.members:
        amps = []
        for i, amp in enumerate(member.amplitudes):
            if amp != 0:
                amps.append({"l": i - spec.dim.n_max, "re": amp.real, "im": amp.imag})
        members.append({"weight": weight, "amps": amps})
    doc = {"d": spec.dim.d, "kind": spec.kind, "members": members}
    return json.dumps(doc, indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# measurement record files
# --------------------------------------------------------------------------

@dataclass
class Campaign:
    """One record file: dimension, base seed, budget and the record list."""

    dim: Dimension
    base_seed: int | None
    photons: float
    records: list[MeasurementRecord]


def write_records(campaign: Campaign) -> str:
    recs = []
    for rec in campaign.records:
        recs.append({
            "tau": rec.setting.tau,
            "axis": rec.setting.axis,
            "plus": [float(x) for x in rec.plus_counts],
            "minus": [float(x) for x in rec.minus_counts],
        })
    doc = {
        "d": campaign.dim.d,
        "seed": campaign.base_seed,
        "photons": campaign.photons,
        "records": recs,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def parse_records(text: str) -> Campaign:
    """Parse a record-file JSON document; per-record seeds are re-derived."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be an object")
    for key in ("d", "seed", "photons", "records"):
        _require(key in doc, f"missing field {key!r}")
    _require(isinstance(doc["d"], int) and not isinstance(doc["d"], bool), "'d' must be an integer")
    try:
        dim = Dimension.from_d(doc["d"])
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    base_seed = doc["seed"]
    _require(base_seed is None or (isinstance(base_seed, int) and not isinstance(base_seed, bool)),
             "'seed' must be an integer or null")
    _require(isinstance(doc["photons"], (int, float)) and not isinstance(doc["photons"], bool),
             "'photons' must be a number")
    _require(isinstance(doc["records"], list), "'records' must be a list")

    records = []
    for i, r in enumerate(doc["records"]):
        _require(isinstance(r, dict), "each record must be an object")
        for key in ("tau", "axis", "plus", "minus"):
            _require(key in r, f"record needs field {key!r}")
        _require(isinstance(r["tau"], int) and not isinstance(r["tau"], bool), "'tau' must be an integer")
        _require(r["axis"] in AXES, f"axis must be one of {AXES}")
        if not 0 <= r["tau"] <= dim.n_max:
            raise RangeError(f"tau={r['tau']} outside [0, {dim.n_max}]")
        for key in ("plus", "minus"):
            _require(isinstance(r[key], list) and len(r[key]) == dim.d,
                     f"{key!r} must be a list of {dim.d} numbers")
            _require(all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in r[key]),
                     f"{key!r} must contain numbers")
        seed = None if base_seed is None else derive_setting_seed(base_seed, i)
        records.append(MeasurementRecord(
            MeasurementSetting(r["tau"], r["axis"]),
            np.array(r["plus"], dtype=float),
            np.array(r["minus"], dtype=float),
            float(doc["photons"]),
            seed,
        ))
    return Campaign(dim, base_seed, float(doc["photons"]), records)


# --------------------------------------------------------------------------
# polar frames and wedge binning
# --------------------------------------------------------------------------

@dataclass
class PolarFrame:
    """Azimuthal intensity profile: strictly increasing angles in [0, 2*pi)."""

    angles: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.intensities = np.asarray(self.intensities, dtype=float)
        if self.angles.shape != self.intensities.shape or self.angles.ndim != 1:
            raise ValueError("angles and intensities must be 1-d arrays of equal length")
        if self.angles.size:
            if (np.diff(self.angles) <= 0).any():
                raise ValueError("angles must be strictly increasing")
            if self.angles[0] < 0 or self.angles[-1] >= 2 * np.pi:
                raise ValueError("angles must lie in [0, 2*pi)")
            if (~np.isfinite(self.intensities)).any() or (self.intensities < 0).any():
                raise ValueError("intensities must be finite and >= 0")


def _segment_integral(angles_ext, values_ext, lo, hi):
    """Trapezoidal integral of the periodic piecewise-linear profile on [lo, hi]."""
    inside = angles_ext[(angles_ext > lo) & (angles_ext < hi)]
    xs = np.concatenate([[lo], inside, [hi]])
    ys = np.interp(xs, angles_ext, values_ext)
    return float(np.trapezoid(ys, xs))


def bin_to_wedges(frame: PolarFrame, dim: Dimension) -> np.ndarray:
    """Integrate a frame over the d angular wedges.

    Wedge k (k = -N..N) spans [2*pi*(k-1/2)/d, 2*pi*(k+1/2)/d), centered on
    the ANG lattice angle 2*pi*k/d; the total over wedges equals the integral
    of the frame to quadrature accuracy.
    """
    if frame.angles.size == 0:
        raise EmptyFrame("frame has no samples")
    # periodic extension covering any window of width 2*pi starting in [0, 2*pi)
    base = frame.angles
    angles_ext = np.concatenate([base - 2 * np.pi, base, base + 2 * np.pi])
    values_ext = np.tile(frame.intensities, 3)
    out = np.zeros(dim.d)
    for i, k in enumerate(dim.modes()):
        lo = 2 * np.pi * (int(k) - 0.5) / dim.d
        out[i] = _segment_integral(angles_ext, values_ext, lo, lo + 2 * np.pi / dim.d)
    return out


# --------------------------------------------------------------------------
# PGM images
# --------------------------------------------------------------------------

def parse_pgm(data: bytes):
    """Decode a P2 (ASCII) or P5 (binary) PGM image -> (array, maxval)."""
    if not isinstance(data, (bytes, bytearray)):
        raise PgmFormatError("expected bytes")
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PgmFormatError(f"unsupported magic {magic!r}")

    # tokenize the header, skipping '#' comments
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmFormatError("truncated header")
        tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PgmFormatError(f"bad header token: {exc}") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise PgmFormatError(f"bad geometry {width}x{height} maxval={maxval}")

    if magic == b"P5":
        pos += 1  # exactly one whitespace byte after maxval
        bytes_per_sample = 2 if maxval > 255 else 1
        need = width * height * bytes_per_sample
        raster = data[pos : pos + need]
        if len(raster) != need:
            raise PgmFormatError(f"raster has {len(raster)} bytes, expected {need}")
        dtype = ">u2" if maxval > 255 else "u1"
        img = np.frombuffer(raster, dtype=dtype).astype(float)
    else:
        try:
            values = [int(t) for t in data[pos:].split()]
        except ValueError as exc:
            raise PgmFormatError(f"bad ASCII sample: {exc}") from exc
        if len(values) != width * height:
            raise PgmFormatError(f"{len(values)} samples, expected {width * height}")
        img = np.array(values, dtype=float)
    if (img > maxval).any():
        raise PgmFormatError("sample exceeds maxval")
    return img.reshape(height, width), maxval


def write_pgm(image: np.ndarray, maxval: int = 255, binary: bool = True) -> bytes:
    """Encode an integer-valued array as PGM bytes."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("image must be 2-d")
    vals = np.clip(np.rint(img), 0, maxval).astype(int)
    height, width = vals.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode()
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return header + vals.astype(dtype).tobytes()
    body = "\n".join(" ".join(str(v) for v in row) for row in vals)
    return header + body.encode() + b"\n"


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1, y1 = x0 + 1, y0 + 1
    fx, fy = x - x0, y - y0
    h, w = img.shape
    x1 = np.minimum(x1, w - 1)
    y1 = np.minimum(y1, h - 1)
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )


def load_pgm_frame(
    data: bytes,
    center: tuple[float, float],
    r_min: float,
    r_max: float,
    samples: int,
) -> PolarFrame:
    """Azimuthal profile of a PGM image over an annulus.

    The intensity at angle phi_k = 2*pi*k/samples is the mean of bilinearly
    interpolated pixel values along the ray, at unit radial steps from r_min
    to r_max.
    """
    img, _ = parse_pgm(data)
    cx, cy = center
    if not 0 < r_min < r_max:
        raise GeometryError(f"need 0 < r_min < r_max, got {r_min}, {r_max}")
    h, w = img.shape
    if cx - r_max < 0 or cx + r_max > w - 1 or cy - r_max < 0 or cy + r_max > h - 1:
        raise GeometryError("annulus extends outside the image")
    if samples < 1:
        raise ValueError("samples must be positive")
    radii = np.arange(r_min, r_max + 1e-9)
    angles = 2 * np.pi * np.arange(samples) / samples
    xs = cx + np.outer(np.cos(angles), radii)
    ys = cy + np.outer(np.sin(angles), radii)
    profile = _bilinear(img, xs, ys).mean(axis=1)
    return PolarFrame(angles, profile)


def frame_to_csv(frame: PolarFrame) -> str:
    lines = ["angle,intensity"]
    for a, v in zip(frame.angles, frame.intensities):
        lines.append(f"{_fmt(a)},{_fmt(v)}")
    return "\n".join(lines) + "\n"


def frame_from_csv(text: str) -> PolarFrame:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "angle,intensity":
        raise SchemaError("frame CSV must start with header 'angle,intensity'")
    angles, values = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise SchemaError(f"bad frame row {ln!r}")
        try:
            angles.append(float(parts[0]))
            values.append(float(parts[1]))
        except ValueError as exc:
            raise SchemaError(f"bad number in row {ln!r}") from exc
    return PolarFrame(np.array(angles), np.array(values))


# --------------------------------------------------------------------------
# CSV matrices and grids
# --------------------------------------------------------------------------

_BASIS_LABEL = {Basis.OAM: "l", Basis.ANG: "theta", Basis.WEDGE: "Theta"}
_LABEL_BASIS = {v: k for k, v in _BASIS_LABEL.items()}


def matrix_to_csv_pair(matrix: DensityMatrix) -> tuple[str, str]:
    """(real part CSV, imaginary part CSV) with basis labels in the headers."""
    label = _BASIS_LABEL[matrix.basis]
    modes = matrix.dim.modes()
    out = []
    for part in (matrix.entries.real, matrix.entries.imag):
        lines = [",".join([label] + [str(m) for m in modes])]
        for i, m in enumerate(modes):
            lines.append(",".join([str(m)] + [_fmt(x) for x in part[i]]))
        out.append("\n".join(lines) + "\n")
    return out[0], out[1]


def _parse_labeled_csv(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty CSV")
    header = lines[0].split(",")
    corner, col_labels = header[0], header[1:]
    rows = []
    row_labels = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise SchemaError("ragged CSV row")
        row_labels.append(parts[0])
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError as exc:
            raise SchemaError(f"bad number: {exc}") from exc
    return corner, col_labels, row_labels, np.array(rows)


def matrix_from_csv_pair(real_text: str, imag_text: str | None = None) -> DensityMatrix:
    corner, cols, rows, real = _parse_labeled_csv(real_text)
    if corner not in _LABEL_BASIS:
        raise SchemaError(f"unknown basis label {corner!r}")
    basis = _LABEL_BASIS[corner]
    d = len(cols)
    if real.shape != (d, d) or len(rows) != d:
        raise SchemaError("matrix CSV must be square")
    try:
        dim = Dimension.from_d(d)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    expected = [str(m) for m in dim.modes()]
    if cols != expected or rows != expected:
        raise SchemaError(f"labels must be {expected[0]}..{expected[-1]} in order")
    if imag_text is None:
        return DensityMatrix(dim, basis, real.astype(complex))
    corner2, _, _, imag = _parse_labeled_csv(imag_text)
    if corner2 != corner or imag.shape != real.shape:
        raise SchemaError("imaginary part does not match the real part")
    return DensityMatrix(dim, basis, real + 1j * imag)


def wigner_to_csv(grid: WignerGrid) -> str:
    modes = grid.dim.modes()
    lines = [",".join(["theta\\l"] + [str(m) for m in modes])]
    for i, m in enumerate(modes):
        lines.append(",".join([str(m)] + [_fmt(x) for x in grid.values[i]]))
    return "\n".join(lines) + "\n"


def wigner_from_csv(text: str) -> WignerGrid:
    corner, cols, rows, values = _parse_labeled_csv(text)
    if corner != "theta\\l":
        raise SchemaError(f"expected corner label 'theta\\\\l', got {corner!r}")
    d = len(cols)
    try:
        dim = Dimension.from_d(d)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    expected = [str(m) for m in dim.modes()]
    if cols != expected or rows != expected or values.shape != (d, d):
        raise SchemaError("malformed grid CSV")
    return WignerGrid(dim, values)


# --------------------------------------------------------------------------
# run outputs
# --------------------------------------------------------------------------

def heatmap_pgm(grid: WignerGrid):
    """8-bit PGM of a grid via the affine map [min, max] -> [0, 255]."""
    lo = float(grid.values.min())
    hi = float(grid.values.max())
    if hi > lo:
        scaled = (grid.values - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(grid.values)
    return write_pgm(scaled, maxval=255, binary=True), lo, hi


def report_to_json(report: QualityReport, provenance: dict | None = None,
                   notes: list[str] | None = None) -> str:
    doc = {
        "fidelity": report.fidelity,
        "degree_of_coherence": report.degree_of_coherence,
        "purity": report.purity,
        "negativity_volume": report.negativity_volume,
        "kernel_orientation": report.kernel_orientation.value,
        "warnings": notes or [],
        "provenance": provenance or {},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def write_outputs(
    ang: DensityMatrix,
    oam: DensityMatrix,
    grid: WignerGrid,
    report: QualityReport,
    directory,
    provenance: dict | None = None,
    notes: list[str] | None = None,
) -> dict:
    """Write the standard result set and return a hashed file manifest.

    Emits CSV real/imag pairs for both matrices, the Wigner grid CSV, the
    report JSON and an 8-bit PGM heatmap; the manifest (also saved as
    manifest.json) lists each file with its SHA-256 and the heatmap scale.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for name, matrix in (("ang_matrix", ang), ("oam_matrix", oam)):
            real_text, imag_text = matrix_to_csv_pair(matrix)
            files[f"{name}_real.csv"] = real_text.encode()
            files[f"{name}_imag.csv"] = imag_text.encode()
        files["wigner.csv"] = wigner_to_csv(grid).encode()
        files["report.json"] = report_to_json(report, provenance, notes).encode()
        pgm, lo, hi = heatmap_pgm(grid)
        files["wigner.pgm"] = pgm
        manifest = {
            "files": [
                {"name": name, "sha256": hashlib.sha256(blob).hexdigest()}
                for name, blob in sorted(files.items())
            ],
            "heatmap_min": lo,
            "heatmap_max": hi,
        }
        for name, blob in files.items():
            (out / name).write_bytes(blob)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise IoError(f"cannot write outputs under {out}: {exc}") from exc
    return manifest
