import json
import subprocess
import sys

import numpy as np
import pytest

from carve3d.cli import main
from carve3d.voxel import (VoxelGrid, decode_grid, make_box, read_grid, read_text_grid,
                           write_grid)


@pytest.fixture
def box_file(tmp_path):
    path = tmp_path / "box.vgrid"
    write_grid(make_box((12, 12, 12), (3, 3, 3), (6, 6, 6)), path)
    return path


def outputs(d, pattern="*.vgrid"):
    return {p.name: p.read_bytes() for p in sorted(d.glob(pattern))}


def test_augment_writes_files_and_manifest(tmp_path, box_file):
    out = tmp_path / "out"
    rc = main(["augment", "--input", str(box_file), "--out", str(out), "--count", "3",
               "--seed", "42", "--smax", "0.25", "--beam", "4", "--steps-log"])
    assert rc == 0
    assert sorted(outputs(out)) == [f"box_aug{k}.vgrid" for k in range(3)]
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "augment" and m["count"] == 3 and m["seed"] == 42
    assert m["config"]["s_max"] == 0.25 and m["config"]["beam"]["n"] == 4
    assert [o["seed"] for o in m["outputs"]] == [42, 43, 44]
    assert (out / "steps.jsonl").exists()


def test_augment_rerun_and_jobs_are_byte_identical(tmp_path, box_file):
    runs = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / name
        assert main(["augment", "--input", str(box_file), "--out", str(out), "--count", "3",
                     "--seed", "5", "--jobs", str(jobs)]) == 0
        runs.append(outputs(out))
    assert runs[0] == runs[1] == runs[2]


def test_manifest_replay(tmp_path, box_file):
    first = tmp_path / "first"
    assert main(["augment", "--input", str(box_file), "--out", str(first), "--count", "2",
                 "--seed", "9", "--beam", "6", "--energy", "full"]) == 0
    again = tmp_path / "again"
    assert main(["augment", "--from-manifest", str(first / "manifest.json"),
                 "--out", str(again)]) == 0
    assert outputs(first) == outputs(again)


def test_zero_smax_reproduces_input(tmp_path, box_file):
    out = tmp_path / "out"
    assert main(["augment", "--input", str(box_file), "--out", str(out), "--count", "2",
                 "--smax", "0"]) == 0
    for payload in outputs(out).values():
        assert decode_grid(payload) == read_grid(box_file)


def test_input_not_mutated(tmp_path, box_file):
    before = box_file.read_bytes()
    main(["augment", "--input", str(box_file), "--out", str(tmp_path / "o"), "--count", "1"])
    main(["baseline", "--method", "warp", "--input", str(box_file), "--out",
          str(tmp_path / "w"), "--count", "1"])
    assert box_file.read_bytes() == before


def test_baseline_scale_factors_logged(tmp_path, box_file):
    out = tmp_path / "scale"
    assert main(["baseline", "--method", "scale", "--seed", "7", "--input", str(box_file),
                 "--out", str(out), "--count", "4"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    for o in m["outputs"]:
        assert all(0.75 <= f <= 1.25 for f in o["factors"])
        assert read_grid(out / o["file"]).dims == tuple(o["dims"])


def test_baseline_warp_and_replay(tmp_path, box_file):
    out = tmp_path / "warp"
    assert main(["baseline", "--method", "warp", "--sigma", "0.25", "--input", str(box_file),
                 "--out", str(out), "--count", "2"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert all(len(o["warp"]["factors"]) == 3 for o in m["outputs"])
    again = tmp_path / "again"
    assert main(["baseline", "--from-manifest", str(out / "manifest.json"),
                 "--out", str(again)]) == 0
    assert outputs(out) == outputs(again)


@pytest.mark.parametrize("argv", [
    ["baseline", "--method", "spectral", "--input", "x", "--out", "y"],
    ["augment", "--input", "x"],
    ["augment", "--input", "x", "--out", "y", "--jobs", "0"],
    ["gen", "--shape", "torus", "--side", "8", "o.vgrid"],
    ["gen", "--shape", "sphere", "--side", "8", "--radius", "9", "o.vgrid"],
    ["frobnicate"],
])
def test_argument_errors_exit_2(tmp_path, argv, capsys):
    assert main(argv) == 2


def test_io_errors_exit_3(tmp_path):
    assert main(["info", str(tmp_path / "missing.vgrid")]) == 3
    bad = tmp_path / "bad.vgrid"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert main(["info", str(bad)]) == 3
    assert main(["augment", "--input", str(bad), "--out", str(tmp_path / "o")]) == 3


def test_empty_shape_exits_4(tmp_path):
    empty = tmp_path / "empty.vgrid"
    write_grid(VoxelGrid.occupancy(np.zeros((8, 8, 8), np.uint8)), empty)
    assert main(["augment", "--input", str(empty), "--out", str(tmp_path / "o"),
                 "--count", "1"]) == 4


def test_info_symmetric_box(box_file, capsys):
    assert main(["info", str(box_file)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["dims"] == [12, 12, 12] and info["occupied"] == 216
    assert info["kind"] == "occupancy"
    assert info["symmetry"] == {"X": 0.0, "Y": 0.0, "Z": 0.0}


def test_convert_round_trip(tmp_path, box_file):
    txt = tmp_path / "box.txt"
    back = tmp_path / "back.vgrid"
    assert main(["convert", str(box_file), str(txt)]) == 0
    assert read_text_grid(txt) == read_grid(box_file)
    assert main(["convert", str(txt), str(back)]) == 0
    assert back.read_bytes() == box_file.read_bytes()


def test_export_obj(tmp_path, box_file):
    dst = tmp_path / "box.obj"
    assert main(["export-obj", str(box_file), str(dst)]) == 0
    lines = dst.read_text().splitlines()
    assert any(line.startswith("v ") for line in lines)
    assert any(line.startswith("f ") for line in lines)


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.vgrid", tmp_path / "b.vgrid"
    args = ["gen", "--shape", "cylinder", "--side", "64", "--radius", "12", "--height", "40"]
    assert main(args + [str(a)]) == 0 and main(args + [str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_sdf(tmp_path):
    out = tmp_path / "s.vgrid"
    assert main(["gen", "--shape", "box", "--side", "12", "--sdf", "--tau", "2", str(out)]) == 0
    g = read_grid(out)
    assert not g.is_occupancy and g.trunc == 2.0 and np.abs(g.data).max() <= 2.0


def test_module_entry_point(box_file):
    proc = subprocess.run([sys.executable, "-m", "carve3d", "info", str(box_file)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["occupied"] == 216
