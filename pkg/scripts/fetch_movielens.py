"""Fetch MovieLens 100K ratings into data/ml-100k/u.data.

Tries the GroupLens archive first; if that host is unreachable, extracts the
identical interaction table shipped inside the RecBole wheel on PyPI.
"""

import argparse
import hashlib
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
# md5 of the u.data this project was validated against
MD5 = "6e47046882bad158b0efbb84cd5cb987"


def from_grouplens() -> bytes:
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_recbole() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        inter = zipfile.ZipFile(wheel).read("recbole/dataset_example/ml-100k/ml-100k.inter").decode()
    rows = inter.splitlines()[1:]  # drop the typed header
    return "".join(row + "\n" for row in rows if row.strip()).encode()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dest", default="data/ml-100k/u.data")
    args = parser.parse_args()
    try:
        blob = from_grouplens()
    except OSError as exc:
        print(f"GroupLens unreachable ({exc}); using the RecBole copy", file=sys.stderr)
        blob = from_recbole()
    digest = hashlib.md5(blob).hexdigest()
    if digest != MD5:
        print(f"warning: md5 {digest} differs from the validated u.data", file=sys.stderr)
    dest = Path(args.dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_bytes(blob)
    print(f"wrote {dest} ({len(blob)} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
