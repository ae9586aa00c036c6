import json

import numpy as np
import pytest

from conftest import random_pure
from oamtomo import ingest, protocol, recon
from oamtomo.errors import (
    EmptyFrame,
    GeometryError,
    IoError,
    NormError,
    PgmFormatError,
    RangeError,
    SchemaError,
)
from oamtomo.hilbert import Basis, DensityMatrix, Dimension, oam_to_ang, random_density
from oamtomo.ingest import (
    Campaign,
    PolarFrame,
    StateSpec,
    bin_to_wedges,
    frame_from_csv,
    frame_to_csv,
    load_pgm_frame,
    matrix_from_csv_pair,
    matrix_to_csv_pair,
    parse_pgm,
    parse_records,
    parse_state_spec,
    wigner_from_csv,
    wigner_to_csv,
    write_outputs,
    write_pgm,
    write_records,
    write_state_spec,
)
from oamtomo.recon import WignerGrid, quality_report, wigner_from_ang

EIGENSTATE_SPEC = json.dumps({
    "d": 7, "kind": "PURE",
    "members": [{"weight": 1, "amps": [{"l": 1, "re": 1, "im": 0}]}],
})

SUPERPOSITION_SPEC = json.dumps({
    "d": 7, "kind": "PURE",
    "members": [{"weight": 1, "amps": [
        {"l": 1, "re": 2 ** -0.5, "im": 0},
        {"l": -1, "re": 2 ** -0.5, "im": 0},
    ]}],
})

MIXTURE_SPEC = json.dumps({
    "d": 7, "kind": "ENSEMBLE",
    "members": [
        {"weight": 0.5, "amps": [{"l": 1, "re": 1, "im": 0}]},
        {"weight": 0.5, "amps": [{"l": -1, "re": 1, "im": 0}]},
    ],
})


class TestStateSpec:
    def test_eigenstate(self, dim7):
        spec = parse_state_spec(EIGENSTATE_SPEC)
        assert spec.kind == "PURE" and spec.dim.d == 7
        amps = spec.members[0][1].amplitudes
        assert amps[dim7.index_of(1)] == pytest.approx(1.0)
        assert np.abs(np.delete(amps, dim7.index_of(1))).max() == 0

    def test_superposition_normalized(self, dim7):
        spec = parse_state_spec(SUPERPOSITION_SPEC)
        amps = spec.members[0][1].amplitudes
        assert amps[dim7.index_of(1)] == pytest.approx(1 / np.sqrt(2), abs=1e-12)
        assert amps[dim7.index_of(-1)] == pytest.approx(1 / np.sqrt(2), abs=1e-12)

    def test_switched_mixture(self, dim7):
        spec = parse_state_spec(MIXTURE_SPEC)
        rho = spec.density_matrix()
        assert rho.entries[dim7.index_of(1), dim7.index_of(1)] == pytest.approx(0.5)
        assert rho.entries[dim7.index_of(1), dim7.index_of(-1)] == 0

    @pytest.mark.parametrize("mutate", [
        lambda d: d.pop("kind"),
        lambda d: d.update(d=6),
        lambda d: d.update(d="7"),
        lambda d: d.update(kind="OTHER"),
        lambda d: d.update(members=[]),
        lambda d: d["members"][0].pop("weight"),
        lambda d: d["members"][0]["amps"][0].update(re="x"),
    ])
    def test_schema_errors(self, mutate):
        doc = json.loads(EIGENSTATE_SPEC)
        mutate(doc)
        with pytest.raises(SchemaError):
            parse_state_spec(json.dumps(doc))

    def test_not_json(self):
        with pytest.raises(SchemaError):
            parse_state_spec("not json at all {")

    def test_norm_error(self):
        doc = json.loads(EIGENSTATE_SPEC)
        doc["members"][0]["amps"][0]["re"] = 1.01
        with pytest.raises(NormError):
            parse_state_spec(json.dumps(doc))

    def test_weight_error(self):
        doc = json.loads(MIXTURE_SPEC)
        doc["members"][0]["weight"] = 0.6
        with pytest.raises(NormError):
            parse_state_spec(json.dumps(doc))

    def test_range_error(self):
        doc = json.loads(EIGENSTATE_SPEC)
        doc["members"][0]["amps"][0]["l"] = 4
        with pytest.raises(RangeError):
            parse_state_spec(json.dumps(doc))

    def test_small_norm_deviation_renormalized_with_warning(self):
        doc = json.loads(EIGENSTATE_SPEC)
        doc["members"][0]["amps"][0]["re"] = 1.0005
        with pytest.warns(UserWarning):
            spec = parse_state_spec(json.dumps(doc))
        assert spec.members[0][1].norm() == pytest.approx(1.0, abs=1e-12)

    def test_round_trip(self, dim7):
        spec = parse_state_spec(MIXTURE_SPEC)
        again = parse_state_spec(write_state_spec(spec))
        assert again.kind == spec.kind and again.dim.d == spec.dim.d
        for (w1, m1), (w2, m2) in zip(spec.members, again.members):
            assert w1 == w2
            assert np.array_equal(m1.amplitudes, m2.amplitudes)


class TestRecordFiles:
    def _campaign(self, dim, seed=None):
        rho = random_density(dim, np.random.default_rng(1))
        records = protocol.run_campaign(rho, 1e5, base_seed=seed)
        return Campaign(dim, seed, 1e5, records)

    def test_round_trip_noiseless(self, dim7):
        campaign = self._campaign(dim7, None)
        again = parse_records(write_records(campaign))
        assert again.dim.d == 7 and again.base_seed is None
        for a, b in zip(campaign.records, again.records):
            assert a.setting == b.setting
            assert np.array_equal(a.plus_counts, b.plus_counts)
            assert np.array_equal(a.minus_counts, b.minus_counts)

    def test_round_trip_recovers_setting_seeds(self, dim7):
        campaign = self._campaign(dim7, 99)
        again = parse_records(write_records(campaign))
        assert [r.seed for r in again.records] == [r.seed for r in campaign.records]

    def test_schema_errors(self, dim7):
        campaign = self._campaign(dim7, 5)
        doc = json.loads(write_records(campaign))
        doc["records"][0]["axis"] = "Z"
        with pytest.raises(SchemaError):
            parse_records(json.dumps(doc))
        doc = json.loads(write_records(campaign))
        doc["records"][0]["plus"] = [1, 2]
        with pytest.raises(SchemaError):
            parse_records(json.dumps(doc))

    def test_tau_out_of_range(self, dim7):
        campaign = self._campaign(dim7, 5)
        doc = json.loads(write_records(campaign))
        doc["records"][0]["tau"] = 5
        with pytest.raises(RangeError):
            parse_records(json.dumps(doc))


class TestBinToWedges:
    def test_uniform_partition(self, dim7):
        angles = 2 * np.pi * np.arange(1000) / 1000
        frame = PolarFrame(angles, np.ones(1000))
        out = bin_to_wedges(frame, dim7)
        assert np.abs(out - 2 * np.pi / 7).max() < 1e-12

    def test_narrow_bump_lands_in_wedge_one(self, dim7):
        angles = 2 * np.pi * np.arange(4000) / 4000
        center = 2 * np.pi / 7
        intensity = np.exp(-0.5 * ((angles - center) / 0.02) ** 2)
        out = bin_to_wedges(PolarFrame(angles, intensity), dim7)
        assert out[dim7.index_of(1)] > 0.999 * out.sum()

    def test_empty_frame(self, dim7):
        with pytest.raises(EmptyFrame):
            bin_to_wedges(PolarFrame(np.array([]), np.array([])), dim7)

    def test_linearity(self, dim7):
        angles = 2 * np.pi * np.arange(500) / 500
        rng = np.random.default_rng(2)
        f1, f2 = rng.random(500), rng.random(500)
        out = bin_to_wedges(PolarFrame(angles, 2.0 * f1 + 3.0 * f2), dim7)
        out1 = bin_to_wedges(PolarFrame(angles, f1), dim7)
        out2 = bin_to_wedges(PolarFrame(angles, f2), dim7)
        assert np.abs(out - 2.0 * out1 - 3.0 * out2).max() < 1e-12

    def test_rotation_shifts_output(self, dim7):
        n = 7 * 100
        angles = 2 * np.pi * np.arange(n) / n
        rng = np.random.default_rng(3)
        vals = rng.random(n)
        base = bin_to_wedges(PolarFrame(angles, vals), dim7)
        rolled = bin_to_wedges(PolarFrame(angles, np.roll(vals, 100)), dim7)
        assert np.abs(rolled - np.roll(base, 1)).max() < 1e-10

    def test_total_matches_frame_integral(self, dim7):
        angles = 2 * np.pi * np.arange(2048) / 2048
        vals = 1.5 + np.sin(3 * angles) ** 2
        out = bin_to_wedges(PolarFrame(angles, vals), dim7)
        xs = np.concatenate([angles, [2 * np.pi]])
        ys = np.concatenate([vals, [vals[0]]])
        assert out.sum() == pytest.approx(np.trapezoid(ys, xs), rel=1e-10)


class TestPgm:
    @pytest.mark.parametrize("binary", [True, False])
    @pytest.mark.parametrize("maxval", [255, 65535])
    def test_round_trip(self, binary, maxval):
        rng = np.random.default_rng(4)
        img = rng.integers(0, maxval + 1, size=(5, 9))
        data = write_pgm(img, maxval=maxval, binary=binary)
        back, mv = parse_pgm(data)
        assert mv == maxval
        assert np.array_equal(back, img)

    def test_comments_skipped(self):
        data = b"P2\n# a comment\n2 2\n# another\n255\n0 1\n2 3\n"
        img, _ = parse_pgm(data)
        assert np.array_equal(img, [[0, 1], [2, 3]])

    @pytest.mark.parametrize("data", [
        b"P6\n2 2\n255\n" + bytes(12),
        b"P5\n2 2\n255\n" + bytes(2),          # truncated raster
        b"P2\n2 2\n255\n0 1 2\n",               # missing sample
        b"P2\n2 2\n255\n0 1 2 999\n",           # sample beyond maxval
        b"P5\n2 -2\n255\n" + bytes(4),
        b"",
    ])
    def test_format_errors(self, data):
        with pytest.raises(PgmFormatError):
            parse_pgm(data)


class TestLoadPgmFrame:
    def test_constant_image(self):
        img = np.full((64, 64), 200)
        frame = load_pgm_frame(write_pgm(img), (32, 32), 5, 20, 90)
        assert np.abs(frame.intensities - 200).max() < 1e-9

    def test_half_plane_split(self):
        img = np.zeros((101, 101))
        img[:, 51:] = 100.0
        frame = load_pgm_frame(write_pgm(img), (50, 50), 10, 40, 360)
        right = frame.intensities[np.cos(frame.angles) > 0.2]
        left = frame.intensities[np.cos(frame.angles) < -0.2]
        assert right.min() > 95 and left.max() < 5

    def test_geometry_error(self):
        img = np.zeros((32, 32))
        with pytest.raises(GeometryError):
            load_pgm_frame(write_pgm(img), (16, 16), 4, 30, 64)
        with pytest.raises(GeometryError):
            load_pgm_frame(write_pgm(img), (16, 16), 0, 10, 64)

    def test_render_round_trip(self, dim7):
        # paint a synthesized profile on an annulus, load it back, compare
        psi = random_pure(dim7, 50)
        setting = protocol.MeasurementSetting(1, "X")
        angles, intensity = protocol.synth_polar_frame([(1.0, psi)], setting, "+", 64 * 7)
        size, cx, cy, r_lo, r_hi, maxval = 256, 128, 128, 60, 110, 65535
        ys, xs = np.mgrid[0:size, 0:size]
        radius = np.hypot(xs - cx, ys - cy)
        phi = np.arctan2(ys - cy, xs - cx) % (2 * np.pi)
        ext_a = np.concatenate([angles, [2 * np.pi]])
        ext_v = np.concatenate([intensity, [intensity[0]]])
        img = np.zeros((size, size))
        mask = (radius >= r_lo - 2) & (radius <= r_hi + 2)
        img[mask] = np.interp(phi[mask], ext_a, ext_v)
        scale = maxval / img.max()
        data = write_pgm(np.rint(img * scale), maxval=maxval)
        frame = load_pgm_frame(data, (cx, cy), r_lo, r_hi, 64 * 7)
        got = frame.intensities / scale
        rel_rms = np.sqrt(np.mean((got - intensity) ** 2)) / intensity.max()
        assert rel_rms < 0.03

    def test_frame_csv_round_trip(self, dim7):
        angles = 2 * np.pi * np.arange(50) / 50
        frame = PolarFrame(angles, np.linspace(0, 3, 50))
        again = frame_from_csv(frame_to_csv(frame))
        assert np.array_equal(again.angles, frame.angles)
        assert np.array_equal(again.intensities, frame.intensities)


class TestCsvMatrices:
    def test_matrix_round_trip_exact(self, dim7):
        rho = oam_to_ang(random_density(dim7, np.random.default_rng(5)))
        real_text, imag_text = matrix_to_csv_pair(rho)
        again = matrix_from_csv_pair(real_text, imag_text)
        assert again.basis is Basis.ANG
        assert np.array_equal(again.entries, rho.entries)

    def test_wigner_round_trip_exact(self, dim7):
        rho = oam_to_ang(random_density(dim7, np.random.default_rng(6)))
        grid = wigner_from_ang(rho)
        again = wigner_from_csv(wigner_to_csv(grid))
        assert np.array_equal(again.values, grid.values)

    def test_bad_labels(self, dim7):
        rho = oam_to_ang(random_density(dim7, np.random.default_rng(7)))
        real_text, _ = matrix_to_csv_pair(rho)
        with pytest.raises(SchemaError):
            matrix_from_csv_pair(real_text.replace("theta", "junk", 1))

    def test_ragged_rows(self):
        with pytest.raises(SchemaError):
            wigner_from_csv("theta\\l,-1,0,1\n-1,1,2\n0,1,2,3\n1,1,2,3\n")


class TestWriteOutputs(object):
    def _result(self, dim):
        rho = random_density(dim, np.random.default_rng(8))
        records = protocol.run_campaign(rho, 1.0, None)
        return recon.run_reconstruction(records, dim)

    def test_manifest_file_set(self, dim7, tmp_path):
        result = self._result(dim7)
        manifest = write_outputs(
            result.ang, result.oam, result.wigner, result.report, tmp_path,
            provenance={"seed": None}, notes=[],
        )
        names = sorted(entry["name"] for entry in manifest["files"])
        assert names == [
            "ang_matrix_imag.csv", "ang_matrix_real.csv", "oam_matrix_imag.csv",
            "oam_matrix_real.csv", "report.json", "wigner.csv", "wigner.pgm",
        ]
        assert len(names) == 7
        for entry in manifest["files"]:
            assert (tmp_path / entry["name"]).exists()
        saved = json.loads((tmp_path / "manifest.json").read_text())
        assert saved == manifest

    def test_written_grid_reads_back(self, dim7, tmp_path):
        result = self._result(dim7)
        write_outputs(result.ang, result.oam, result.wigner, result.report, tmp_path)
        again = wigner_from_csv((tmp_path / "wigner.csv").read_text())
        assert np.array_equal(again.values, result.wigner.values)
        matrix = matrix_from_csv_pair(
            (tmp_path / "oam_matrix_real.csv").read_text(),
            (tmp_path / "oam_matrix_imag.csv").read_text(),
        )
        assert np.array_equal(matrix.entries, result.oam.entries)

    def test_uniform_heatmap(self, dim7, tmp_path):
        grid = WignerGrid(dim7, np.full((7, 7), 1 / 49))
        rho = DensityMatrix(dim7, Basis.OAM, np.eye(7, dtype=complex) / 7)
        report = quality_report(rho, grid)
        manifest = write_outputs(oam_to_ang(rho), rho, grid, report, tmp_path)
        img, maxval = parse_pgm((tmp_path / "wigner.pgm").read_bytes())
        assert maxval == 255
        assert img.min() == img.max()
        assert manifest["heatmap_min"] == manifest["heatmap_max"]

    def test_io_error(self, dim7, tmp_path):
        result = self._result(dim7)
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        with pytest.raises(IoError):
            write_outputs(result.ang, result.oam, result.wigner, result.report, blocker)

    def test_report_json_contents(self, dim7, tmp_path):
        result = self._result(dim7)
        write_outputs(
            result.ang, result.oam, result.wigner, result.report, tmp_path,
            provenance={"seed": 3, "photons": 1e6}, notes=["wedge 2 dark"],
        )
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["kernel_orientation"] == "bra_plus_phi"
        assert doc["warnings"] == ["wedge 2 dark"]
        assert doc["provenance"]["seed"] == 3
        assert 1 / 7 <= doc["purity"] <= 1 + 1e-12
