"""Subprocess helpers for exercising the command-line surface."""

import re
import subprocess
import sys


def run_cli(*args, timeout=60):
    """Run one CLI invocation; returns CompletedProcess with text output."""
    return subprocess.run(
        [sys.executable, "-m", "phg.cli", *map(str, args)],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


def spawn_cli(*args):
    return subprocess.Popen(
        [sys.executable, "-m", "phg.cli", *map(str, args)],
        stderr=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )


def start_serve(data_dir, host="127.0.0.1"):
    """Launch the coordinator; returns (process, "host:port").

    Stderr lines printed before the listening banner (startup logs such
    as index preloads) are kept on the process as `proc.preamble`.
    """
    proc = spawn_cli("serve", "--listen", f"{host}:0", "--data-dir", data_dir)
    proc.preamble = []
    for line in proc.stderr:
        m = re.search(r"listening on ([\d.]+):(\d+)", line)
        if m:
            return proc, f"{m.group(1)}:{m.group(2)}"
        proc.preamble.append(line)
    raise RuntimeError(f"coordinator exited: {proc.wait()}")


def start_provider(address, key_file, index, map_file=None, log=None, provider_id=None):
    """Launch a provider agent; returns the process once registered."""
    args = ["provider", "--connect", address, "--key-file", key_file, "--index", index]
    if map_file is not None:
        args += ["--map", map_file]
    if log is not None:
        args += ["--log", log]
    if provider_id is not None:
        args += ["--id", provider_id]
    proc = spawn_cli(*args)
    for line in proc.stderr:
        if "registered" in line:
            return proc
    raise RuntimeError(f"provider exited: {proc.wait()}")


def stop(proc, timeout=10):
    if proc.poll() is None:
        proc.terminate()
    try:
        return proc.wait(timeout=timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        return proc.wait()
