"""Command-line surface: formats, exit codes, and the service roles."""

import json
import time

import pytest

from phg.imaging import ImageBuffer, save_image
from phg.phash import HashAlgorithm
from phg.psi.core import TokenIndex, load_key, token_for
from phg.psi.group import get_group

from procharness import run_cli, start_provider, start_serve, stop
from synthimg import smooth_image


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A directory of images plus a constant-white and a broken file."""
    root = tmp_path_factory.mktemp("cli")
    imgs = root / "imgs"
    imgs.mkdir()
    for i in range(6):
        arr = smooth_image(3000 + i, 72, 54, rgb=(i % 3 == 2))
        suffix = ".ppm" if arr.ndim == 3 else ".pgm"
        (imgs / f"im_{i}{suffix}").write_bytes(save_image(ImageBuffer.from_array(arr)))
    (root / "white.pgm").write_bytes(b"P5 8 8 255 " + bytes([255] * 64))
    (root / "broken.pgm").write_bytes(b"P5 but nothing else")
    return root


# ---------------------------------------------------------------------------
# hash


def test_hash_constant_white_ahash(workspace):
    r = run_cli("hash", "--algo", "ahash", workspace / "white.pgm")
    assert r.returncode == 0
    path, text = r.stdout.strip().split("\t")
    assert path.endswith("white.pgm")
    assert text == "ahash64:ffffffffffffffff"


def test_hash_constant_pdq_quality_zero(workspace):
    r = run_cli("hash", "--algo", "pdq", workspace / "white.pgm")
    assert r.returncode == 0
    _, text, quality = r.stdout.strip().split("\t")
    assert text == "pdq256:" + "0" * 64
    assert quality == "0"


def test_hash_deterministic(workspace):
    f = workspace / "imgs" / "im_0.pgm"
    a = run_cli("hash", "--algo", "pdq", f).stdout
    b = run_cli("hash", "--algo", "pdq", f, f).stdout
    assert b == a + a


def test_hash_error_line_and_exit_code(workspace):
    r = run_cli("hash", "--algo", "ahash", workspace / "broken.pgm",
                workspace / "white.pgm")
    assert r.returncode == 1
    lines = r.stdout.strip().splitlines()
    assert len(lines) == 2
    assert "\tERROR:" in lines[0]
    assert lines[1].endswith("ahash64:ffffffffffffffff")  # later files still hash


def test_hash_usage_errors():
    assert run_cli("hash", "--algo", "sha1", "x.pgm").returncode == 2
    assert run_cli("hash", "--algo", "ahash").returncode == 2  # no files


# ---------------------------------------------------------------------------
# eval


def test_eval_identical_pair_and_outputs(workspace, tmp_path):
    manifest = tmp_path / "pairs.csv"
    manifest.write_text("same,imgs/im_0.pgm,imgs/im_0.pgm\n")
    # manifest paths resolve relative to the manifest file
    manifest.write_text(
        f"same,{workspace}/imgs/im_0.pgm,{workspace}/imgs/im_0.pgm\n"
    )
    out = tmp_path / "out"
    r = run_cli("eval", "--manifest", manifest, "--metrics", "ahash,pdq", "--out", out)
    assert r.returncode == 0, r.stderr
    table = (out / "table.csv").read_bytes().decode()
    assert "\r\n" in table
    assert table.splitlines()[1] == "same,100.00,100.00,100.00,100.00,100.00,100.00"
    assert (out / "histogram_ahash64.csv").exists()
    assert (out / "histogram_pdq256.csv").exists()


def test_eval_empty_manifest_exit_1(tmp_path):
    manifest = tmp_path / "none.csv"
    manifest.write_text("")
    r = run_cli("eval", "--manifest", manifest, "--out", tmp_path / "o")
    assert r.returncode == 1
    assert "no pairs" in r.stderr


def test_eval_unknown_metric_exit_2(tmp_path):
    manifest = tmp_path / "m.csv"
    manifest.write_text("x,a.pgm,b.pgm\n")
    r = run_cli("eval", "--manifest", manifest, "--metrics", "sha256", "--out", tmp_path)
    assert r.returncode == 2


# ---------------------------------------------------------------------------
# ingest


def test_ingest_gen_key_and_build(workspace, tmp_path):
    key_file = tmp_path / "k.json"
    r = run_cli("ingest", "--gen-key", "--key-file", key_file, "--group", "testgroup31")
    assert r.returncode == 0
    doc = json.loads(key_file.read_text())
    assert doc["group"] == "testgroup31"

    # refuses to clobber an existing key
    assert run_cli("ingest", "--gen-key", "--key-file", key_file).returncode == 1

    out = tmp_path / "index.phix"
    map_out = tmp_path / "map.tsv"
    r = run_cli("ingest", "--dir", workspace / "imgs", "--algo", "pdq",
                "--key-file", key_file, "--out", out, "--map-out", map_out)
    assert r.returncode == 0, r.stderr
    index = TokenIndex.from_bytes(out.read_bytes())
    assert index.algorithm is HashAlgorithm.PDQ256
    assert len(index) == 6

    # map lines recompute: token_b64 <tab> hash_text, token matches key
    key, group_name = load_key(key_file)
    group = get_group(group_name)
    import base64
    from phg.phash import PerceptualHash

    lines = map_out.read_text().splitlines()
    assert len(lines) == 6
    for line in lines:
        token_b64, text = line.split("\t")
        h = PerceptualHash.from_text(text)
        assert base64.b64decode(token_b64) == token_for(group, h, key).value
        assert index.contains(token_for(group, h, key))


def test_ingest_deterministic(workspace, tmp_path):
    key_file = tmp_path / "k.json"
    run_cli("ingest", "--gen-key", "--key-file", key_file, "--group", "testgroup31")
    outs = []
    for name in ("a.phix", "b.phix"):
        out = tmp_path / name
        run_cli("ingest", "--dir", workspace / "imgs", "--algo", "ahash",
                "--key-file", key_file, "--out", out)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_ingest_empty_dir(tmp_path):
    key_file = tmp_path / "k.json"
    run_cli("ingest", "--gen-key", "--key-file", key_file, "--group", "testgroup31")
    empty = tmp_path / "none"
    empty.mkdir()
    out = tmp_path / "empty.phix"
    r = run_cli("ingest", "--dir", empty, "--key-file", key_file, "--out", out)
    assert r.returncode == 0
    assert len(TokenIndex.from_bytes(out.read_bytes())) == 0


def test_ingest_bad_image_nonstrict_vs_strict(workspace, tmp_path):
    key_file = tmp_path / "k.json"
    run_cli("ingest", "--gen-key", "--key-file", key_file, "--group", "testgroup31")
    mixdir = tmp_path / "mix"
    mixdir.mkdir()
    (mixdir / "ok.pgm").write_bytes((workspace / "white.pgm").read_bytes())
    (mixdir / "bad.pgm").write_bytes(b"P5 nope")
    out = tmp_path / "mix.phix"
    r = run_cli("ingest", "--dir", mixdir, "--key-file", key_file, "--out", out)
    assert r.returncode == 1  # failure reported
    assert "bad.pgm" in r.stderr
    assert len(TokenIndex.from_bytes(out.read_bytes())) == 1  # still written

    strict_out = tmp_path / "strict.phix"
    r = run_cli("ingest", "--dir", mixdir, "--key-file", key_file, "--out", strict_out,
                "--strict")
    assert r.returncode == 1
    assert not strict_out.exists()


# ---------------------------------------------------------------------------
# serve / provider / report


def test_three_role_loopback(workspace, tmp_path):
    key_file = tmp_path / "k.json"
    run_cli("ingest", "--gen-key", "--key-file", key_file, "--group", "testgroup31")
    index = tmp_path / "index.phix"
    map_file = tmp_path / "map.tsv"
    run_cli("ingest", "--dir", workspace / "imgs", "--algo", "pdq",
            "--key-file", key_file, "--out", index, "--map-out", map_file)

    serve, address = start_serve(tmp_path / "data")
    provider = None
    try:
        log = tmp_path / "matches.log"
        provider = start_provider(address, key_file, index, map_file, log)
        r = run_cli("report", "--connect", address, "--algo", "pdq",
                    "--group", "testgroup31",
                    workspace / "imgs" / "im_1.pgm", workspace / "white.pgm")
        assert r.returncode == 0, r.stderr
        assert r.stdout.strip() == "providers_contacted=1\ttokens_sent=2"
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline and not log.exists():
            time.sleep(0.05)
        time.sleep(0.2)
        lines = log.read_text().splitlines()
        assert len(lines) == 1  # white.pgm was never ingested
        assert lines[0].split("\t")[0].startswith("pdq256:")
    finally:
        if provider is not None:
            stop(provider)
        stop(serve)
    assert serve.returncode == 0  # SIGTERM exits cleanly


def test_report_zero_files_usage_error():
    r = run_cli("report", "--connect", "127.0.0.1:1", "--algo", "pdq")
    assert r.returncode == 2


def test_report_connection_refused(workspace):
    r = run_cli("report", "--connect", "127.0.0.1:1", "--algo", "ahash",
                "--group", "testgroup31", workspace / "white.pgm")
    assert r.returncode == 1
    assert "cannot reach" in r.stderr


def test_serve_requires_data_dir():
    r = run_cli("serve", "--listen", "127.0.0.1:0")
    assert r.returncode == 2


def test_serve_honors_data_dir_env(tmp_path):
    import os
    import re
    import signal
    import subprocess
    import sys

    env = dict(os.environ, PHG_DATA_DIR=str(tmp_path / "envdata"))
    proc = subprocess.Popen(
        [sys.executable, "-m", "phg.cli", "serve", "--listen", "127.0.0.1:0"],
        stderr=subprocess.PIPE, text=True, env=env,
    )
    try:
        for line in proc.stderr:
            if re.search(r"listening on ", line):
                break
        else:
            raise AssertionError(f"serve exited {proc.wait()}")
        assert (tmp_path / "envdata").is_dir()
    finally:
        proc.send_signal(signal.SIGTERM)
        proc.wait(timeout=10)
