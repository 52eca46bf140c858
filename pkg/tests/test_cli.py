"""Command line round trips: argument parsing and the full pipeline."""

import hashlib
import os

import numpy as np
import pytest

import lutscan as ls
from lutscan.cli import main, parse_crop, parse_length, parse_range, parse_scene


# --- argument parsing -----------------------------------------------------------

@pytest.mark.parametrize("text,meters", [
    ("10um", 1e-5),
    ("1mm", 1e-3),
    ("47cm", 0.47),
    ("0.5m", 0.5),
    ("150um", 1.5e-4),
    ("1.5e2mm", 0.15),
    ("-4cm", -0.04),
    ("+3mm", 3e-3),
    (".5m", 0.5),
    (" 2mm ", 2e-3),
])
def test_lengths_require_a_unit_and_scale_correctly(text, meters):
    assert parse_length(text) == pytest.approx(meters, rel=1e-12)


@pytest.mark.parametrize("text", [
    "10", "um", "10 um", "10km", "10uM", "", "1m2", "1mm5", "nan"
])
def test_bare_or_unknown_units_are_rejected(text):
    with pytest.raises(ValueError, match="unit suffix"):
        parse_length(text)


def test_range_parsing():
    stage = parse_range("44cm:51cm:1mm")
    assert (stage.start, stage.stop, stage.step) == (0.44, 0.51, 0.001)
    with pytest.raises(ValueError, match="start:stop:step"):
        parse_range("44cm:51cm")
    with pytest.raises(ValueError, match="unit suffix"):
        parse_range("44:51:1")


def test_crop_parsing_orders_the_box_for_the_plane_fit():
    assert parse_crop("-4cm,-3cm,4cm,5cm") == (-0.04, 0.04, -0.03, 0.05)
    with pytest.raises(ValueError, match="x0,y0,x1,y1"):
        parse_crop("-4cm,4cm")


def test_scene_parsing():
    plane = parse_scene("plane:47.55cm")
    assert isinstance(plane, ls.PlaneScene)
    np.testing.assert_allclose(plane.point, [0.0, 0.0, 0.4755])
    assert plane.half_extent is None
    bounded = parse_scene("plane:47cm:2cm")
    assert bounded.half_extent == pytest.approx(0.02)
    sphere = parse_scene("sphere:48cm:1cm")
    assert isinstance(sphere, ls.SphereScene)
    assert sphere.radius == pytest.approx(0.01)
    for bad in ("cube:1m", "plane", "sphere:1m", "plane:1m:2m:3m"):
        with pytest.raises(ValueError, match="cannot parse scene"):
            parse_scene(bad)


# --- pipeline workspace -----------------------------------------------------------

def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A full pipeline run: sweep, calibrate, scan, reconstruct, filter."""
    root = tmp_path_factory.mktemp("cli")
    camera, projector = ls.demo_rig(16)
    rig = root / "rig.txt"
    ls.write_rig(rig, camera, projector)
    patterns = root / "patterns.txt"
    ls.write_pattern_specs(patterns, [("spiral", ls.PatternSpec(kind="spiral"))])

    paths = {
        "root": root, "rig": rig, "patterns": patterns,
        "sweep": root / "sweep", "lut": root / "table.lut",
        "report": root / "fit-report.csv", "scan": root / "scan",
        "recon": root / "recon", "filtered": root / "filtered",
    }
    steps = [
        ["simulate-sweep", str(rig), "--patterns", str(patterns),
         "--range", "44cm:51cm:5mm", "--out", str(paths["sweep"])],
        ["calibrate", str(paths["sweep"]), "--out", str(paths["lut"]),
         "--report", str(paths["report"])],
        ["simulate-scan", str(rig), "--scene", "plane:47.55cm",
         "--lut-patterns", str(patterns), "--frames", "3", "--motion", "1mm",
         "--noise-profile", "low", "--out", str(paths["scan"])],
        ["reconstruct", str(paths["lut"]), str(paths["scan"]),
         "--out", str(paths["recon"])],
        ["filter-sequence", str(paths["recon"]), "--out", str(paths["filtered"])],
    ]
    hashes = {}
    for argv in steps:
        assert main(argv) == 0, argv[0]
        if argv[0] == "simulate-sweep":
            hashes["rig"] = _sha(rig)
            hashes["frame0"] = _sha(paths["sweep"] / "frame-0000-spiral.pfm")
            hashes["patterns"] = _sha(patterns)
    paths["hashes"] = hashes
    return paths


def test_sweep_directory_layout(ws):
    entries = ls.read_manifest(ws["sweep"] / "sweep.txt")
    assert entries["format"] == "sweep"
    assert entries["stops"] == "15"
    # A noise free rig renders no ambient reference image.
    assert entries["patterns"].split() == ["spiral", "white"]
    assert entries["stage.start"] == "0.44"
    assert "pose.0014" in entries
    assert len(entries["pose.0000"].split()) == 8
    for pid in ("spiral", "white"):
        assert (ws["sweep"] / f"frame-0014-{pid}.pfm").exists()
    camera, _, _ = ls.read_rig(ws["sweep"] / "rig.txt")
    assert camera.width == 16


def test_calibrate_writes_a_loadable_table_and_report(ws):
    assert ls.detect_format(ws["lut"]) == "lut"
    lut = ls.load_lut(ws["lut"])
    assert lut.valid.all()
    assert lut.camera.width == 16
    assert lut.channel_ids == ("spiral:0", "spiral:1", "spiral:2")
    lines = ws["report"].read_text().splitlines()
    assert lines[0] == "i,j,samples,residual_rms,fitted"
    assert len(lines) == 1 + 16 * 16


def test_scan_directory_layout(ws):
    entries = ls.read_manifest(ws["scan"] / "scan.txt")
    assert entries["format"] == "scan"
    assert entries["frames"] == "3"
    assert entries["scene"] == "plane:47.55cm"
    assert entries["motion"] == "0.001"
    for f in range(3):
        assert (ws["scan"] / f"scan-{f:04d}-spiral.pfm").exists()
        assert (ws["scan"] / f"gt-{f:04d}.pfm").exists()


def test_reconstruction_outputs_and_accounting(ws):
    entries = ls.read_manifest(ws["recon"] / "recon.txt")
    assert entries["format"] == "reconstruction"
    assert entries["step"] == "1e-05"
    for f in range(3):
        assert float(entries[f"frame.{f:04d}.valid_fraction"]) > 0.99
        assert float(entries[f"frame.{f:04d}.pixels_per_second"]) > 0.0
        # Low noise scans of a plane land well under a millimeter RMS.
        assert float(entries[f"frame.{f:04d}.rms_vs_gt"]) < 1e-3
    cloud = ls.read_ply(ws["recon"] / "cloud-0000.ply")
    assert len(cloud) > 250
    depth = ls.read_pfm(ws["recon"] / "depth-0000.pfm")
    assert depth.shape == (16, 16)
    assert np.abs(depth[depth > 0].mean() - 0.4755) < 0.01


def test_filtering_marks_the_sequence_edges(ws):
    entries = ls.read_manifest(ws["filtered"] / "filter.txt")
    assert entries["format"] == "filtered"
    assert entries["frames"] == "3"
    assert entries["frame.0000.flags"] == "unfiltered"
    assert entries["frame.0002.flags"] == "unfiltered"
    assert "frame.0001.flags" not in entries
    middle = ls.read_pfm(ws["filtered"] / "depth-0001.pfm")
    assert middle.shape == (16, 16)


def test_pipeline_outputs_are_reproducible(ws, tmp_path):
    argv = ["simulate-sweep", str(ws["rig"]), "--patterns", str(ws["patterns"]),
            "--range", "44cm:51cm:5mm", "--out", str(tmp_path / "sweep2")]
    assert main(argv) == 0
    assert _sha(tmp_path / "sweep2" / "frame-0000-spiral.pfm") == \
        ws["hashes"]["frame0"]
    argv = ["reconstruct", str(ws["lut"]), str(ws["scan"]),
            "--out", str(tmp_path / "recon2")]
    assert main(argv) == 0
    assert (tmp_path / "recon2" / "depth-0000.pfm").read_bytes() == \
        (ws["recon"] / "depth-0000.pfm").read_bytes()


def test_pipeline_never_modifies_its_inputs(ws):
    assert _sha(ws["rig"]) == ws["hashes"]["rig"]
    assert _sha(ws["patterns"]) == ws["hashes"]["patterns"]
    assert _sha(ws["sweep"] / "frame-0000-spiral.pfm") == ws["hashes"]["frame0"]


def test_evaluate_plane_reports_the_spread(ws, tmp_path, capsys):
    out = tmp_path / "plane.csv"
    hist = tmp_path / "hist.txt"
    argv = ["evaluate-plane", str(ws["recon"] / "cloud-0000.ply"),
            "--crop=-4cm,-4cm,4cm,4cm", "--out", str(out),
            "--hist", str(hist)]
    assert main(argv) == 0
    assert "plane sigma" in capsys.readouterr().out
    header, row = out.read_text().splitlines()
    assert header.startswith("n_points,sigma_m")
    fields = row.split(",")
    assert 0 < int(fields[0]) <= 256
    assert float(fields[1]) < 1e-3
    assert hist.read_text().startswith("# deviation_m count\n")


def test_gen_and_analyze_patterns(tmp_path, capsys):
    spec = tmp_path / "patterns.txt"
    ls.write_pattern_specs(spec, [
        ("spiral", ls.PatternSpec(kind="spiral", resolution=256)),
        ("stairs", ls.PatternSpec(kind="stairs", resolution=256)),
    ])
    gen_dir = tmp_path / "gen"
    assert main(["gen-patterns", str(spec), "--out", str(gen_dir)]) == 0
    for name in ("spiral", "stairs"):
        assert (gen_dir / f"{name}.csv").exists()
        assert (gen_dir / f"{name}.ppm").exists()
        assert (gen_dir / f"{name}-confusion.pgm").exists()
    scores = tmp_path / "scores.csv"
    assert main(["analyze-patterns", str(spec), "--out", str(scores)]) == 0
    lines = scores.read_text().splitlines()
    assert lines[0].startswith("name,kind,resolution")
    assert len(lines) == 3
    spiral_row = lines[1].split(",")
    assert spiral_row[0] == "spiral"
    assert float(spiral_row[5]) > 0.0
    assert "min_separation" in capsys.readouterr().out


def test_compare_patterns_subcommand(tmp_path):
    camera, projector = ls.demo_rig(8)
    rig = tmp_path / "rig8.txt"
    ls.write_rig(rig, camera, projector)
    spec = tmp_path / "patterns.txt"
    ls.write_pattern_specs(spec, [
        ("spiral", ls.PatternSpec(kind="spiral")),
        ("stairs", ls.PatternSpec(kind="stairs")),
    ])
    out = tmp_path / "cmp"
    argv = ["compare-patterns", str(spec), str(rig),
            "--range", "44cm:51cm:1cm", "--seeds", "1",
            "--noise-profile", "low", "--out", str(out)]
    assert main(argv) == 0
    lines = (out / "comparison.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].split(",")[0] == "spiral"


def test_channel_mismatch_fails_with_both_counts(ws, tmp_path, capsys):
    gray_spec = tmp_path / "gray.txt"
    ls.write_pattern_specs(gray_spec, [
        ("graycode", ls.PatternSpec(kind="graycode", channels=1)),
    ])
    gray_scan = tmp_path / "grayscan"
    argv = ["simulate-scan", str(ws["rig"]), "--scene", "plane:47.55cm",
            "--lut-patterns", str(gray_spec), "--out", str(gray_scan)]
    assert main(argv) == 0
    argv = ["reconstruct", str(ws["lut"]), str(gray_scan),
            "--out", str(tmp_path / "fail")]
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert "lutscan: error:" in err
    assert "1 channels" in err and "3" in err


def test_the_seed_environment_variable_is_honored(ws, tmp_path, monkeypatch,
                                                  capsys):
    monkeypatch.setenv("LOOKUP3D_SEED", "7")
    out = tmp_path / "seeded"
    argv = ["simulate-scan", str(ws["rig"]), "--scene", "plane:47.55cm",
            "--lut-patterns", str(ws["patterns"]), "--noise-profile", "low",
            "--out", str(out)]
    assert main(argv) == 0
    assert ls.read_manifest(out / "scan.txt")["seed"] == "7"
    explicit = tmp_path / "explicit"
    assert main(argv[:-1] + [str(explicit), "--seed", "3"]) == 0
    assert ls.read_manifest(explicit / "scan.txt")["seed"] == "3"
    monkeypatch.setenv("LOOKUP3D_SEED", "abc")
    assert main(argv[:-1] + [str(tmp_path / "bad")]) == 1
    assert "LOOKUP3D_SEED" in capsys.readouterr().err


def test_runtime_problems_exit_one_with_a_message(ws, tmp_path, capsys):
    argv = ["reconstruct", str(ws["lut"]), str(tmp_path / "nonexistent"),
            "--out", str(tmp_path / "x")]
    assert main(argv) == 1
    assert "lutscan: error:" in capsys.readouterr().err
    argv = ["filter-sequence", str(tmp_path), "--out", str(tmp_path / "y")]
    assert main(argv) == 1
    assert "no depth-NNNN.pfm" in capsys.readouterr().err


def test_usage_problems_exit_two(ws, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate-sweep", str(ws["rig"]), "--patterns",
              str(ws["patterns"]), "--range", "44:51:1",
              "--out", str(tmp_path / "x")])
    assert exc.value.code == 2
    assert "unit suffix" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_reconstruct_can_skip_point_clouds(ws, tmp_path):
    out = tmp_path / "noply"
    argv = ["reconstruct", str(ws["lut"]), str(ws["scan"]),
            "--ply", "none", "--out", str(out)]
    assert main(argv) == 0
    assert (out / "depth-0000.pfm").exists()
    assert not list(out.glob("*.ply"))
