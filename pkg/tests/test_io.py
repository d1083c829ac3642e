import struct

import numpy as np
import pytest

from jointcorr import io
from jointcorr.consistency import ConfidenceMask, FlowField
from jointcorr.cost_volume import CostVolume
from jointcorr.features import ImageGrid, LinearProjector
from jointcorr.geometry import GridShape


def test_image_csv_round_trip(tmp_path):
    img = ImageGrid(GridShape(2, 3), np.random.default_rng(0).standard_normal((6, 2)))
    io.write_image_csv(img, tmp_path / "img.csv")
    lines = (tmp_path / "img.csv").read_text().splitlines()
    assert lines[0] == "2,3,2" and len(lines) == 7
    back = io.read_image_csv(tmp_path / "img.csv")
    assert back.shape == img.shape
    np.testing.assert_array_equal(back.values, img.values)


def test_image_csv_bad_body(tmp_path):
    (tmp_path / "bad.csv").write_text("2,2,1\n1\n2\n3\n")
    with pytest.raises(ValueError):
        io.read_image_csv(tmp_path / "bad.csv")


def test_mask_pgm(tmp_path):
    m = ConfidenceMask(GridShape(2, 3), [1, 0, 1, 1, 1, 0])
    io.write_mask_pgm(m, tmp_path / "m.pgm")
    assert (tmp_path / "m.pgm").read_text() == "P2\n3 2\n1\n1 0 1\n1 1 0\n"
    back = io.read_mask_pgm(tmp_path / "m.pgm")
    np.testing.assert_array_equal(back.bits, m.bits)


def test_flow_csv(tmp_path):
    s = GridShape(2, 2)
    f = FlowField(s, [[0, 1], [1, -1], [-1, 0], [0, 0]])
    io.write_flow_csv(f, tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[1] == "1,1,-1"
    np.testing.assert_array_equal(io.read_flow_csv(tmp_path / "f.csv", s).vectors, f.vectors)


def test_volume_csv(tmp_path):
    c = CostVolume(GridShape(1, 2), GridShape(1, 3), np.arange(6.0).reshape(2, 3) / 7)
    io.write_volume_csv(c, tmp_path / "c.csv")
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "c.csv", delimiter=","), c.values)


def test_projector_binary_layout(tmp_path):
    proj = LinearProjector(np.arange(6.0).reshape(3, 2), np.array([-1.0, 0.5]))
    io.save_projector(proj, tmp_path / "p.bin")
    data = (tmp_path / "p.bin").read_bytes()
    assert data[:4] == b"LPRJ"
    assert struct.unpack("<II", data[4:12]) == (3, 2)
    assert struct.unpack("<8d", data[12:]) == (0, 1, 2, 3, 4, 5, -1.0, 0.5)
    back = io.load_projector(tmp_path / "p.bin")
    np.testing.assert_array_equal(back.weight, proj.weight)
    np.testing.assert_array_equal(back.bias, proj.bias)


def test_projector_truncated(tmp_path):
    proj = LinearProjector(np.ones((2, 2)), np.zeros(2))
    io.save_projector(proj, tmp_path / "p.bin")
    (tmp_path / "p.bin").write_bytes((tmp_path / "p.bin").read_bytes()[:-8])
    with pytest.raises(ValueError):
        io.load_projector(tmp_path / "p.bin")


def test_read_config(tmp_path):
    (tmp_path / "c.cfg").write_text("# comment\nsteps = 10\n\ngamma=0.07  # inline\n")
    assert io.read_config(tmp_path / "c.cfg") == {"steps": "10", "gamma": "0.07"}
    (tmp_path / "bad.cfg").write_text("steps 10\n")
    with pytest.raises(ValueError):
        io.read_config(tmp_path / "bad.cfg")
