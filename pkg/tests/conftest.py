import gzip
import hashlib
import os
import threading
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest

from neaf.data import FILES, serialize_idx

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "long: real-MNIST runs, enabled with NEAF_LONG=1")
    config.addinivalue_line("markers", "full: 150-epoch replication, enabled with NEAF_FULL=1")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def mnist_dir() -> Path | None:
    d = os.environ.get("NEAF_DATA_DIR")
    if d and all((Path(d) / name).exists() or (Path(d) / (name + ".gz")).exists() for name in FILES.values()):
        return Path(d)
    return None


def write_fake_mnist(directory: Path, n_train=30, n_test=10, seed=0, gz=False) -> dict[str, bytes]:
    """Tiny IDX files with the real names; returns the raw (uncompressed) bytes."""
    rng = np.random.default_rng(seed)
    raw = {
        FILES["train_images"]: serialize_idx(rng.integers(0, 256, (n_train, 28, 28))),
        FILES["train_labels"]: serialize_idx(rng.integers(0, 10, n_train)),
        FILES["test_images"]: serialize_idx(rng.integers(0, 256, (n_test, 28, 28))),
        FILES["test_labels"]: serialize_idx(rng.integers(0, 10, n_test)),
    }
    directory.mkdir(parents=True, exist_ok=True)
    for name, data in raw.items():
        if gz:
            (directory / (name + ".gz")).write_bytes(gzip.compress(data))
        else:
            (directory / name).write_bytes(data)
    return raw


@pytest.fixture
def fake_mirror(tmp_path):
    """HTTP server holding gzip IDX files plus a matching checksum manifest."""
    root = tmp_path / "mirror"
    raw = write_fake_mnist(root, gz=True)
    manifest = tmp_path / "checksums.txt"
    manifest.write_text("".join(f"{hashlib.sha256(d).hexdigest()}  {n}\n" for n, d in raw.items()))

    hits = []

    class Handler(SimpleHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_GET(self):
            hits.append(self.path)
            super().do_GET()

    server = ThreadingHTTPServer(("127.0.0.1", 0), partial(Handler, directory=str(root)))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield {
            "url": f"http://127.0.0.1:{server.server_address[1]}/",
            "root": root,
            "manifest": manifest,
            "raw": raw,
            "hits": hits,
        }
    finally:
        server.shutdown()
