"""Operator command line: hashing, evaluation, index building, and the
three service roles (coordinator, provider, reporting client).

Conventions: stdout carries data only, diagnostics go to stderr; exit
status 0 on success, 1 on runtime failure, 2 on usage errors.  The
`PHG_DATA_DIR` environment variable supplies the default coordinator
data directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
from pathlib import Path

from .evalharness import (
    EmptyInputError,
    evaluate_pairs,
    export_csv,
    hash_image,
    histogram,
    load_pairs_manifest,
    perceptual_similarity,
)
from .imaging import MalformedFileError, UnsupportedVariantError, load_image_path
from .phash import HashAlgorithm, ahash, pdq
from .psi.core import (
    IndexFormatError,
    OprfKey,
    TokenIndex,
    build_index,
    load_key,
    save_key,
    token_for,
)
from .psi.group import get_group
from .service import (
    ConnectionFailedError,
    Coordinator,
    ProtocolError,
    ProviderAgent,
    ProviderError,
    client_report,
)
from .service.wire import b64d, b64e

_METRICS = {
    "ahash": HashAlgorithm.AHASH64,
    "ahash64": HashAlgorithm.AHASH64,
    "pdq": HashAlgorithm.PDQ256,
    "pdq256": HashAlgorithm.PDQ256,
}

_IMAGE_SUFFIXES = {".pgm", ".ppm", ".png"}


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _algo(name: str) -> HashAlgorithm:
    try:
        return _METRICS[name]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown algorithm {name!r}") from None


def _hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


def _clean(reason: str) -> str:
    return " ".join(str(reason).split()) or "unreadable"


def _hash_file(path, algorithm: HashAlgorithm):
    """Returns (hash, quality-or-None); raises imaging errors."""
    img = load_image_path(path)
    if algorithm is HashAlgorithm.PDQ256:
        r = pdq(img)
        return r.hash, r.quality
    return ahash(img), None


# ---------------------------------------------------------------------------
# Subcommands


def cmd_hash(args) -> int:
    failed = False
    for name in args.files:
        try:
            h, quality = _hash_file(name, args.algo)
        except (MalformedFileError, UnsupportedVariantError, OSError) as e:
            print(f"{name}\tERROR:{_clean(e)}")
            failed = True
            continue
        if quality is None:
            print(f"{name}\t{h.to_text()}")
        else:
            print(f"{name}\t{h.to_text()}\t{quality}")
    return 1 if failed else 0


def cmd_eval(args) -> int:
    metrics = []
    for name in args.metrics.split(","):
        name = name.strip()
        if name not in _METRICS:
            print(f"error: unknown metric {name!r}", file=sys.stderr)
            return 2
        if _METRICS[name] not in metrics:
            metrics.append(_METRICS[name])
    try:
        pairs = load_pairs_manifest(args.manifest)
    except (OSError, MalformedFileError, UnsupportedVariantError, ValueError) as e:
        return _fail(str(e))
    if not pairs:
        return _fail("no pairs")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        table = evaluate_pairs(pairs, metrics)
    except EmptyInputError as e:
        return _fail(str(e))
    (out / "table.csv").write_bytes(export_csv(table))
    for metric in metrics:
        scores = [
            perceptual_similarity(a, b, metric).similarity_percent
            for _, a, b in pairs
        ]
        hist = histogram(scores, args.bins)
        (out / f"histogram_{metric.prefix}.csv").write_bytes(export_csv(hist))
    return 0


def cmd_ingest(args) -> int:
    key_path = Path(args.key_file)
    if args.gen_key:
        if key_path.exists():
            return _fail(f"refusing to overwrite existing key file {key_path}")
        try:
            group = get_group(args.group)
        except ValueError as e:
            return _fail(str(e))
        save_key(key_path, OprfKey.generate(group), group)
        print(f"generated key in {key_path}", file=sys.stderr)
        if args.dir is None:
            return 0
    if args.dir is None or args.out is None:
        print("error: --dir and --out are required to build an index", file=sys.stderr)
        return 2

    try:
        key, group_name = load_key(key_path)
        group = get_group(group_name)
    except (OSError, ValueError, KeyError) as e:
        return _fail(f"cannot load key file: {e}")

    root = Path(args.dir)
    if not root.is_dir():
        return _fail(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    hashes = []
    texts = []
    failures = 0
    for p in files:
        try:
            h, _ = _hash_file(p, args.algo)
        except (MalformedFileError, UnsupportedVariantError, OSError) as e:
            print(f"skipping {p}: {_clean(e)}", file=sys.stderr)
            failures += 1
            continue
        hashes.append(h)
        texts.append(h.to_text())
    if failures and args.strict:
        return _fail(f"{failures} file(s) failed to decode (strict mode)")

    index = build_index(group, hashes, key, algorithm=args.algo)
    Path(args.out).write_bytes(index.to_bytes())
    if args.map_out is not None:
        lines = [
            f"{b64e(token_for(group, h, key).value)}\t{t}\n"
            for h, t in zip(hashes, texts)
        ]
        Path(args.map_out).write_text("".join(lines))
    print(f"indexed {len(index)} token(s) from {len(hashes)} image(s)", file=sys.stderr)
    return 1 if failures else 0


def cmd_serve(args) -> int:
    data_dir = args.data_dir or os.environ.get("PHG_DATA_DIR")
    if data_dir is None:
        print("error: --data-dir or PHG_DATA_DIR required", file=sys.stderr)
        return 2
    host, port = args.listen
    coordinator = Coordinator(host=host, port=port, data_dir=data_dir)
    try:
        coordinator.start()
    except OSError as e:
        return _fail(f"cannot listen on {host}:{port}: {e}")
    print(f"listening on {coordinator.host}:{coordinator.port}", file=sys.stderr, flush=True)

    def _stop(signum, frame):
        coordinator.shutdown()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    coordinator.wait()
    return 0


def cmd_provider(args) -> int:
    try:
        key, group_name = load_key(args.key_file)
        group = get_group(group_name)
    except (OSError, ValueError, KeyError) as e:
        return _fail(f"cannot load key file: {e}")
    try:
        index = TokenIndex.from_bytes(Path(args.index).read_bytes())
    except (OSError, IndexFormatError) as e:
        return _fail(f"cannot load index: {e}")
    lookup: dict[bytes, str] = {}
    if args.map is not None:
        try:
            for line in Path(args.map).read_text().splitlines():
                if not line:
                    continue
                token_b64, _, text = line.partition("\t")
                lookup[b64d(token_b64)] = text
        except (OSError, ValueError) as e:
            return _fail(f"cannot load map: {e}")

    agent = ProviderAgent(
        args.connect,
        args.id or key.key_id.hex(),
        group,
        key,
        index,
        lookup,
        log_path=args.log,
    )

    def _stop(signum, frame):
        agent.stop()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    try:
        agent.connect()
        print(f"provider {agent.provider_id} registered", file=sys.stderr, flush=True)
        agent.serve()
    except OSError as e:
        return _fail(f"connection failed: {e}")
    except ProviderError as e:
        return _fail(str(e))
    return 0


def cmd_report(args) -> int:
    hashes = []
    for name in args.files:
        try:
            h, _ = _hash_file(name, args.algo)
        except (MalformedFileError, UnsupportedVariantError, OSError) as e:
            return _fail(f"{name}: {_clean(e)}")
        hashes.append(h)
    try:
        group = get_group(args.group)
    except ValueError as e:
        return _fail(str(e))
    try:
        receipt = client_report(args.connect, hashes, group)
    except ConnectionFailedError as e:
        return _fail(str(e))
    except ProtocolError as e:
        return _fail(f"protocol error {e.code}: {e.message}")
    print(
        f"providers_contacted={receipt.providers_contacted}\t"
        f"tokens_sent={receipt.tokens_sent}"
    )
    return 0


# ---------------------------------------------------------------------------
# Dispatch


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="phg", description="perceptual hash matching and private reporting"
    )
    sub = p.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("hash", help="hash image files")
    sp.add_argument("--algo", type=_algo, required=True, help="ahash or pdq")
    sp.add_argument("files", nargs="+")
    sp.set_defaults(func=cmd_hash)

    sp = sub.add_parser("eval", help="similarity tables from a pairs manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--metrics", default="ahash,pdq")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--bins", type=int, default=10)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ingest", help="tokenize an image directory into an index")
    sp.add_argument("--dir")
    sp.add_argument("--algo", type=_algo, default=HashAlgorithm.PDQ256)
    sp.add_argument("--key-file", required=True)
    sp.add_argument("--gen-key", action="store_true")
    sp.add_argument("--group", default="ristretto255")
    sp.add_argument("--out")
    sp.add_argument("--map-out")
    sp.add_argument("--strict", action="store_true")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("serve", help="run the coordinator")
    sp.add_argument("--listen", type=_hostport, required=True)
    sp.add_argument("--data-dir")
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("provider", help="serve one provider's index")
    sp.add_argument("--connect", type=_hostport, required=True)
    sp.add_argument("--key-file", required=True)
    sp.add_argument("--index", required=True)
    sp.add_argument("--map")
    sp.add_argument("--log")
    sp.add_argument("--id", help="provider id (default: key id)")
    sp.set_defaults(func=cmd_provider)

    sp = sub.add_parser("report", help="report hashes of files to the service")
    sp.add_argument("--connect", type=_hostport, required=True)
    sp.add_argument("--algo", type=_algo, required=True)
    sp.add_argument("--group", default="ristretto255")
    sp.add_argument("files", nargs="+")
    sp.set_defaults(func=cmd_report)

    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
