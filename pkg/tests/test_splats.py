import json
import math
from pathlib import Path

import numpy as np
import pytest

from splat4d.splats import (EmptyCloudError, EmptySequenceError,
                            ManifestParseError, MissingPropertyError,
                            NonFiniteError, NonMonotoneTimestampsError,
                            SplatCloud, TruncatedError, UnsupportedFormatError,
                            bounding_box, load_manifest, parse_ply,
                            serialize_ply, uniform_manifest)

from conftest import random_cloud

FIXTURES = Path(__file__).parent / "fixtures"


def make_ascii_ply(rows, extra_props=()):
    props = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    props += list(extra_props)
    header = ["ply", "format ascii 1.0", f"element vertex {len(rows)}"]
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    body = "\n".join(" ".join(str(v) for v in row) for row in rows)
    return ("\n".join(header) + "\n" + body + "\n").encode()


def default_row(**overrides):
    row = {"x": 0.0, "y": 0.0, "z": 0.0,
           "f_dc_0": 0.0, "f_dc_1": 0.0, "f_dc_2": 0.0,
           "opacity": 0.0,
           "scale_0": 0.0, "scale_1": 0.0, "scale_2": 0.0,
           "rot_0": 1.0, "rot_1": 0.0, "rot_2": 0.0, "rot_3": 0.0}
    row.update(overrides)
    return list(row.values())


class TestParsePly:
    def test_opacity_sigmoid_of_zero_is_half(self):
        cloud = parse_ply(make_ascii_ply([default_row(opacity=0.0)]))
        assert cloud.opacities[0] == pytest.approx(0.5)

    def test_scale_exp_and_rotation_normalization(self):
        cloud = parse_ply(make_ascii_ply([default_row(rot_0=2.0)]))
        np.testing.assert_allclose(cloud.scales[0], [1.0, 1.0, 1.0])
        np.testing.assert_allclose(cloud.rotations[0], [1.0, 0.0, 0.0, 0.0])

    def test_zero_dc_gives_mid_gray(self):
        cloud = parse_ply(make_ascii_ply([default_row()]))
        np.testing.assert_allclose(cloud.colors[0], [0.5, 0.5, 0.5])

    def test_truncated_binary_payload(self):
        full = serialize_ply(random_cloud(10, seed=1))
        # header declares 10 vertices; drop one vertex worth of payload
        with pytest.raises(TruncatedError):
            parse_ply(full[:-14 * 4])

    def test_truncated_ascii(self):
        data = make_ascii_ply([default_row()])
        header_end = data.index(b"end_header")
        cut = data[:header_end].replace(b"element vertex 1", b"element vertex 2")
        with pytest.raises(TruncatedError):
            parse_ply(cut + data[header_end:])

    def test_missing_property(self):
        data = make_ascii_ply([default_row()])
        with pytest.raises(MissingPropertyError):
            parse_ply(data.replace(b"property float opacity\n", b""))

    def test_big_endian_rejected(self):
        data = make_ascii_ply([default_row()])
        with pytest.raises(UnsupportedFormatError):
            parse_ply(data.replace(b"format ascii 1.0",
                                   b"format binary_big_endian 1.0"))

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteError):
            parse_ply(make_ascii_ply([default_row(x="nan")]))
        with pytest.raises(NonFiniteError):
            parse_ply(make_ascii_ply([default_row(opacity="inf")]))

    def test_zero_norm_rotation_rejected(self):
        with pytest.raises(NonFiniteError):
            parse_ply(make_ascii_ply([default_row(rot_0=0.0)]))

    def test_order_preserved(self):
        rows = [default_row(x=float(i)) for i in range(20)]
        cloud = parse_ply(make_ascii_ply(rows))
        np.testing.assert_allclose(cloud.positions[:, 0], np.arange(20.0))

    def test_extra_properties_tolerated(self):
        rows = [default_row() + [9.9, 0.25]]
        cloud = parse_ply(make_ascii_ply(rows, extra_props=["weirdness", "f_rest_0"]))
        assert cloud.sh_rest.shape == (1, 1)
        assert cloud.sh_rest[0, 0] == pytest.approx(0.25)

    def test_golden_3dgs_fixture(self):
        data = (FIXTURES / "golden_3dgs.ply").read_bytes()
        cloud = parse_ply(data)
        assert len(cloud) == 137
        assert cloud.sh_rest.shape == (137, 45)
        assert np.all(cloud.scales > 0)
        assert np.all((cloud.opacities >= 0) & (cloud.opacities <= 1))
        norms = np.linalg.norm(cloud.rotations, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)


class TestSerializePly:
    def test_empty_cloud(self):
        empty = SplatCloud(positions=np.zeros((0, 3)), rotations=np.zeros((0, 4)),
                           scales=np.zeros((0, 3)), opacities=np.zeros(0),
                           colors=np.zeros((0, 3)))
        data = serialize_ply(empty)
        assert b"element vertex 0" in data
        assert len(parse_ply(data)) == 0

    def test_output_property_order(self):
        data = serialize_ply(random_cloud(3, seed=2))
        header = data[:data.index(b"end_header")].decode()
        names = [ln.split()[-1] for ln in header.splitlines()
                 if ln.startswith("property")]
        assert names == ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                         "scale_0", "scale_1", "scale_2",
                         "rot_0", "rot_1", "rot_2", "rot_3"]

    @pytest.mark.parametrize("seed", range(6))
    def test_round_trip_random_clouds(self, seed):
        cloud = random_cloud(50, seed=seed, with_sh_rest=(seed % 2 == 0))
        rt = parse_ply(serialize_ply(cloud))
        np.testing.assert_allclose(rt.positions, cloud.positions, atol=1e-5)
        np.testing.assert_allclose(rt.scales, cloud.scales, atol=1e-5, rtol=1e-5)
        np.testing.assert_allclose(rt.opacities, cloud.opacities, atol=1e-5)
        np.testing.assert_allclose(rt.colors, cloud.colors, atol=1e-5)
        # rotations agree up to the quaternion double cover
        dots = np.abs(np.sum(rt.rotations * cloud.rotations, axis=1))
        np.testing.assert_allclose(dots, 1.0, atol=1e-5)
        if cloud.sh_rest is not None:
            np.testing.assert_allclose(rt.sh_rest, cloud.sh_rest, atol=1e-5)

    def test_round_trip_is_fixpoint(self):
        cloud = random_cloud(30, seed=9)
        once = parse_ply(serialize_ply(cloud))
        twice = parse_ply(serialize_ply(once))
        np.testing.assert_allclose(twice.positions, once.positions, atol=1e-5)
        np.testing.assert_allclose(twice.opacities, once.opacities, atol=1e-5)

    def test_opacity_one_clamps_logit(self):
        cloud = random_cloud(1, seed=3)
        cloud = cloud.replace(opacities=np.array([1.0]))
        rt = parse_ply(serialize_ply(cloud))
        # sigmoid(16) = 0.9999998874648379
        assert rt.opacities[0] >= 0.9999
        assert rt.opacities[0] == pytest.approx(1.0 / (1.0 + math.exp(-16.0)), abs=1e-7)

    def test_opacity_zero_clamps_logit(self):
        cloud = random_cloud(1, seed=4).replace(opacities=np.array([0.0]))
        rt = parse_ply(serialize_ply(cloud))
        assert rt.opacities[0] == pytest.approx(1.0 / (1.0 + math.exp(16.0)), abs=1e-9)


class TestBoundingBox:
    def test_single_splat(self):
        cloud = random_cloud(1, seed=5)
        cloud = cloud.replace(positions=np.array([[1.0, 2.0, 3.0]]))
        bmin, bmax = bounding_box(cloud)
        np.testing.assert_allclose(bmin, [1, 2, 3])
        np.testing.assert_allclose(bmax, [1, 2, 3])

    def test_two_splats(self):
        cloud = random_cloud(2, seed=6).replace(
            positions=np.array([[0.0, 0.0, 0.0], [-1.0, 4.0, 2.0]]))
        bmin, bmax = bounding_box(cloud)
        np.testing.assert_allclose(bmin, [-1, 0, 0])
        np.testing.assert_allclose(bmax, [0, 4, 2])

    def test_matches_brute_force(self):
        cloud = random_cloud(1000, seed=7)
        bmin, bmax = bounding_box(cloud)
        np.testing.assert_array_equal(bmin, np.min(cloud.positions, axis=0))
        np.testing.assert_array_equal(bmax, np.max(cloud.positions, axis=0))

    def test_empty_cloud_raises(self):
        empty = SplatCloud(positions=np.zeros((0, 3)), rotations=np.zeros((0, 4)),
                           scales=np.zeros((0, 3)), opacities=np.zeros(0),
                           colors=np.zeros((0, 3)))
        with pytest.raises(EmptyCloudError):
            bounding_box(empty)


class TestManifest:
    def test_uniform_spacing_defaults(self):
        doc = {"source_fps": 30, "frames": [{"file": f"f{i}.ply"} for i in range(3)]}
        m = load_manifest(json.dumps(doc))
        np.testing.assert_allclose(m.timestamps, [0, 1 / 30, 2 / 30])
        assert m.duration == pytest.approx(3 / 30)

    def test_non_monotone_rejected(self):
        doc = {"frames": [{"file": "a", "t": 0.0}, {"file": "b", "t": 0.5},
                          {"file": "c", "t": 0.25}]}
        with pytest.raises(NonMonotoneTimestampsError):
            load_manifest(json.dumps(doc))

    def test_single_frame_still_scene(self):
        m = load_manifest(json.dumps({"frames": [{"file": "a", "t": 0.0}]}))
        assert m.duration == pytest.approx(1 / 30)

    def test_empty_sequence(self):
        with pytest.raises(EmptySequenceError):
            load_manifest(json.dumps({"frames": []}))

    def test_invalid_json(self):
        with pytest.raises(ManifestParseError):
            load_manifest("{not json")

    def test_first_timestamp_must_be_zero(self):
        doc = {"frames": [{"file": "a", "t": 0.5}, {"file": "b", "t": 1.0}]}
        with pytest.raises(ManifestParseError):
            load_manifest(json.dumps(doc))

    def test_mixed_timestamps_rejected(self):
        doc = {"frames": [{"file": "a", "t": 0.0}, {"file": "b"}]}
        with pytest.raises(ManifestParseError):
            load_manifest(json.dumps(doc))

    def test_duration_below_last_timestamp_rejected(self):
        doc = {"frames": [{"file": "a", "t": 0.0}, {"file": "b", "t": 2.0}],
               "duration": 1.0}
        with pytest.raises(ManifestParseError):
            load_manifest(json.dumps(doc))

    def test_explicit_duration_kept(self):
        doc = {"frames": [{"file": "a", "t": 0.0}], "duration": 9.5}
        assert load_manifest(json.dumps(doc)).duration == 9.5

    def test_uniform_manifest_helper(self):
        m = uniform_manifest(["a", "b"], source_fps=10.0)
        np.testing.assert_allclose(m.timestamps, [0.0, 0.1])
        assert m.duration == pytest.approx(0.2)
