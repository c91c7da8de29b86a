import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pyrcodec.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, parse_kernel, read_config
from pyrcodec.image import read_image, write_image


@pytest.fixture
def image_path(tmp_path, rng):
    path = tmp_path / "in.ppm"
    write_image(rng.random((12, 10, 3)), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def encode(capsys, tmp_path, image_path, name, *extra):
    out = tmp_path / f"{name}.pups"
    code, stdout, _ = run(capsys, "encode", "--input", image_path, "--output", out,
                          "--levels", 3, *extra)
    assert code == EXIT_OK
    return out, json.loads(stdout)


def test_encode_decode_round_trip(capsys, tmp_path, image_path):
    trace = tmp_path / "trace.csv"
    bits, report = encode(capsys, tmp_path, image_path, "a", "--iters", 20, "--trace", trace)
    for key in ("bpp", "psnr_db", "j_initial", "j_final", "macs_formula", "macs_empirical",
                "kernel_parameters"):
        assert key in report
    assert report["bpp"] == bits.stat().st_size * 8 / 120
    assert report["macs_formula"] == 23
    assert trace.read_text().startswith("iteration,J,D_mse,psnr_db,rate_bpp")

    out1, out2 = tmp_path / "d1.ppm", tmp_path / "d2.ppm"
    code, stdout, _ = run(capsys, "decode", "--input", bits, "--output", out1,
                          "--reference", image_path)
    assert code == EXIT_OK
    assert json.loads(stdout)["psnr_db"] == pytest.approx(report["psnr_db"], abs=1e-9)
    run(capsys, "decode", "--input", bits, "--output", out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_decoded_image_matches_encoder_reconstruction(capsys, tmp_path, image_path):
    from pyrcodec.bitstream import read_bitstream
    from pyrcodec.decoder import decode_forward
    from pyrcodec.image import to_bytes
    bits, _ = encode(capsys, tmp_path, image_path, "b", "--iters", 5)
    out = tmp_path / "d.ppm"
    run(capsys, "decode", "--input", bits, "--output", out)
    expected = to_bytes(decode_forward(read_bitstream(bits))) / 255.0
    np.testing.assert_array_equal(read_image(out), expected)


def test_initial_loss_legacy_vs_proposed(capsys, tmp_path, image_path):
    _, legacy = encode(capsys, tmp_path, image_path, "l", "--iters", 0, "--legacy", "--kl", 4)
    _, proposed = encode(capsys, tmp_path, image_path, "p", "--iters", 0, "--kl", 4)
    assert legacy["j_initial"] == proposed["j_initial"]
    assert legacy["kernel_parameters"] == 16
    _, bare = encode(capsys, tmp_path, image_path, "q", "--iters", 0, "--kl", 4, "--nh", 0)
    assert bare["kernel_parameters"] == 2
    assert legacy["macs_formula"] == 30


def test_lambda_zero_still_codes_latents(capsys, tmp_path, image_path):
    _, report = encode(capsys, tmp_path, image_path, "z", "--iters", 30, "--lambda", 0)
    assert report["latent_rate_bpp"] > 0 and report["latent_bytes"] > 0
    assert report["j_final"] == report["d_final"]


def test_config_file(capsys, tmp_path, image_path):
    cfg = tmp_path / "enc.cfg"
    cfg.write_text("# defaults\nlambda = 0.02\nlegacy = true\niters=3\nhidden = 4 4\n")
    _, report = encode(capsys, tmp_path, image_path, "c", "--config", cfg)
    assert report["lambda"] == 0.02 and report["legacy"] and report["hidden"] == [4, 4]
    assert report["iterations"] == 3
    _, report = encode(capsys, tmp_path, image_path, "c2", "--config", cfg, "--lambda", 0.5)
    assert report["lambda"] == 0.5
    assert read_config(cfg)["lambda"] == "0.02"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    code, _, err = run(capsys, "encode", "--config", bad, "--input", image_path,
                       "--output", tmp_path / "x")
    assert code == EXIT_USAGE and "colour" in err


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "encode", "--output", tmp_path / "x.pups")[0] == EXIT_USAGE
    assert run(capsys, "encode", "--bogus")[0] == EXIT_USAGE
    assert run(capsys)[0] == EXIT_USAGE
    assert run(capsys, "analyze", "freq", "--kernel", "lanczos")[0] == EXIT_USAGE
    assert run(capsys, "analyze", "freq")[0] == EXIT_USAGE


def test_io_errors(capsys, tmp_path):
    bad = tmp_path / "bad.pups"
    bad.write_bytes(b"NOPE" + bytes(40))
    code, _, err = run(capsys, "decode", "--input", bad, "--output", tmp_path / "o.ppm")
    assert code == EXIT_IO and "magic" in err
    code, _, _ = run(capsys, "encode", "--input", tmp_path / "missing.ppm",
                     "--output", tmp_path / "o.pups")
    assert code == EXIT_IO


def test_numeric_error(capsys, tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("rate_bpp,psnr_db\n0.1,30\n0.2,31\n0.3,32\n0.4,33\n")
    b = tmp_path / "b.csv"
    b.write_text("rate_bpp,psnr_db\n0.1,50\n0.2,51\n0.3,52\n0.4,53\n")
    assert run(capsys, "bdrate", "--anchor", a, "--test", b)[0] == EXIT_NUMERIC


def test_bdrate_command(capsys, tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("rate_bpp,psnr_db\n0.1,30\n0.2,32\n0.4,34\n0.8,36\n")
    b = tmp_path / "b.csv"
    b.write_text("rate_bpp,psnr_db\n0.11,30\n0.22,32\n0.44,34\n0.88,36\n")
    code, out, _ = run(capsys, "bdrate", "--anchor", a, "--test", b)
    assert code == EXIT_OK
    assert json.loads(out)["bd_rate_percent"] == pytest.approx(10.0, abs=1e-6)


def test_analyze_macs(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "macs")
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.splitlines()))
    assert [(r["K"], r["nonseparable"], r["separable"]) for r in rows] == \
        [("4", "30", "23"), ("8", "121", "45")]
    path = tmp_path / "macs.csv"
    run(capsys, "analyze", "macs", "--k", 8, "--size", 64, "--output", path)
    row = next(csv.DictReader(path.open()))
    assert float(row["empirical_separable"]) > 0


def test_analyze_freq(capsys, tmp_path):
    path = tmp_path / "dirac.csv"
    code, _, _ = run(capsys, "analyze", "freq", "--kernel", "dirac5", "--grid", 8, "--output", path)
    assert code == EXIT_OK
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 64 and {r["mag_db"] for r in rows} == {"0.000000"}
    code, out, _ = run(capsys, "analyze", "freq", "--kernel", "bilinear")
    report = json.loads(out)
    assert report["cutoff_3db"] <= report["cutoff_6db"]


def test_analyze_freq_from_bitstream(capsys, tmp_path, image_path):
    bits, _ = encode(capsys, tmp_path, image_path, "f", "--iters", 0, "--nl", 2, "--kl", 8)
    code, out, _ = run(capsys, "analyze", "freq", "--bitstream", bits, "--which", "l1")
    assert code == EXIT_OK
    assert len(json.loads(out)["taps"]) == 8
    assert run(capsys, "analyze", "freq", "--bitstream", bits, "--which", "l7")[0] == EXIT_USAGE


def test_parse_kernel():
    np.testing.assert_array_equal(parse_kernel("taps:1,2,2,1").taps, [1, 2, 2, 1])
    assert parse_kernel("bicubic").length == 8
    from pyrcodec.cli import UsageError
    with pytest.raises(UsageError):
        parse_kernel("taps:1,2,3")


def test_experiment_command(capsys, tmp_path, rng):
    paths = []
    for name in ("p", "q"):
        paths.append(tmp_path / f"{name}.ppm")
        write_image(rng.random((8, 8, 3)), paths[-1])
    out = tmp_path / "grid.csv"
    code, stdout, _ = run(capsys, "experiment", "--preset", "exp1a", "--images", *paths,
                          "--lambdas", "0.001", "--iters", 0, "--levels", 3, "--output", out)
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert {r["config"] for r in rows} == {"legacy4", "exp1a"} and len(rows) == 4
    summary = (tmp_path / "grid_bdrate.csv").read_text()
    assert "insufficient points" in summary
    first = out.read_bytes()
    run(capsys, "experiment", "--preset", "exp1a", "--images", *paths,
        "--lambdas", "0.001", "--iters", 0, "--levels", 3, "--output", out)
    assert out.read_bytes() == first


def test_module_entry_point(image_path):
    proc = subprocess.run([sys.executable, "-m", "pyrcodec", "analyze", "macs"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "121" in proc.stdout
