import numpy as np
import pytest

from ifkit import InvalidInput
from ifkit.geometry import build_mesh_index, icosphere, sdf_mesh
from ifkit.io import (
    SampleFile, decode_ifs, decode_pcf, encode_ifs, encode_pcf, read_cloud, read_ifs, read_obj,
    read_pcf, read_xyz, write_ifs, write_obj, write_pcf, write_xyz,
)


def test_obj_round_trip_and_queries(tmp_path):
    mesh = icosphere(2)
    write_obj(tmp_path / "s.obj", mesh)
    back = read_obj(tmp_path / "s.obj", watertight=True)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)
    q = np.random.default_rng(0).uniform(-1.5, 1.5, (200, 3))
    a = sdf_mesh(build_mesh_index(mesh), q)
    b = sdf_mesh(build_mesh_index(back), q)
    assert np.array_equal(a, b)


def test_obj_parsing_details(tmp_path):
    path = tmp_path / "t.obj"
    path.write_text("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")
    mesh = read_obj(path)
    assert mesh.faces.tolist() == [[0, 1, 2]]
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n")
    with pytest.raises(InvalidInput, match="triangular"):
        read_obj(path)
    path.write_text("v 0 0 0\n")
    with pytest.raises(InvalidInput):
        read_obj(path)


def test_xyz_round_trip(tmp_path):
    cloud = np.random.default_rng(1).normal(size=(50, 3))
    write_xyz(tmp_path / "c.xyz", cloud)
    assert np.array_equal(read_xyz(tmp_path / "c.xyz"), cloud)
    assert np.array_equal(read_cloud(tmp_path / "c.xyz"), cloud)


def test_pcf_byte_identical(tmp_path):
    cloud = np.random.default_rng(2).normal(size=(77, 3)).astype(np.float32).astype(np.float64)
    data = encode_pcf(cloud)
    assert data[:4] == b"PCF1" and len(data) == 8 + 77 * 12
    assert np.array_equal(decode_pcf(data), cloud)
    assert encode_pcf(decode_pcf(data)) == data
    write_pcf(tmp_path / "c.pcf", cloud)
    assert (tmp_path / "c.pcf").read_bytes() == data
    assert np.array_equal(read_pcf(tmp_path / "c.pcf"), read_cloud(tmp_path / "c.pcf"))
    for bad in (b"PCF0" + data[4:], data[:-1]):
        with pytest.raises(InvalidInput):
            decode_pcf(bad)


@pytest.mark.parametrize("kind", ["sdf", "udf", "occ"])
def test_ifs_byte_identical(tmp_path, kind):
    rng = np.random.default_rng(3)
    vals = rng.normal(size=40)
    vals = {"udf": np.abs(vals), "occ": (vals > 0).astype(float)}.get(kind, vals)
    s = SampleFile(kind, rng.normal(size=(40, 3)), vals)
    data = encode_ifs(s)
    assert len(data) == 9 + 40 * 16
    back = decode_ifs(data)
    assert back.kind == kind and encode_ifs(back) == data
    write_ifs(tmp_path / "s.ifs", s)
    assert encode_ifs(read_ifs(tmp_path / "s.ifs")) == data


def test_ifs_empty_and_invalid():
    empty = encode_ifs(SampleFile("udf", np.zeros((0, 3)), []))
    assert len(decode_ifs(empty).values) == 0
    with pytest.raises(InvalidInput):
        decode_ifs(empty[:4] + b"\x07" + empty[5:])
    with pytest.raises(InvalidInput):
        SampleFile("density", np.zeros((1, 3)), [0.0])
