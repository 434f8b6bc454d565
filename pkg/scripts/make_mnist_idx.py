"""Write the 5000-digit MNIST subset bundled with mlxtend as gzipped IDX files.

The subset (500 digits per class, pixel values 0-255) ships inside the mlxtend
wheel as ``mlxtend/data/data/mnist_5k.csv.gz``; each CSV row is 784 pixels
followed by the digit. Pass either that CSV or a wheel/installed copy::

    python scripts/make_mnist_idx.py path/to/mnist_5k.csv.gz data/mnist5k
    python scripts/make_mnist_idx.py path/to/mlxtend-*.whl data/mnist5k
"""

import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from kernel_bpm.data import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv_bytes(src: Path) -> bytes:
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as zf:
            return gzip.decompress(zf.read(MEMBER))
    raw = src.read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", type=Path)
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()

    table = np.loadtxt(io.StringIO(read_csv_bytes(args.source).decode()), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    digits = table[:, -1].astype(np.uint8)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "images-idx3-ubyte.gz", pixels)
    write_idx(args.out_dir / "labels-idx1-ubyte.gz", digits)
    print(f"wrote {len(digits)} digits to {args.out_dir}")


if __name__ == "__main__":
    main()
