#!/usr/bin/env python3
"""Materialize MovieLens 100K as a u.data-style TSV (user, item, rating, timestamp).

Downloads the canonical zip from GroupLens when reachable; otherwise falls back
to the copy bundled in the pytorch-widedeep wheel (same 100,000 rows, same order).
"""
import argparse
import io
import os
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS_URL, timeout=30) as resp:
        blob = resp.read()
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        return zf.read("ml-100k/u.data").decode("ascii")


def from_wheel():
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "pytorch-widedeep==1.7.0", "-d", tmp],
            check=True)
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        with zipfile.ZipFile(os.path.join(tmp, wheel)) as zf:
            df = pd.read_parquet(io.BytesIO(zf.read(WHEEL_MEMBER)))
    df = df[["user_id", "movie_id", "rating", "timestamp"]]
    return "".join(f"{u}\t{i}\t{r}\t{t}\n" for u, i, r, t in df.itertuples(index=False))


def main():
    ap = argparse.ArgumentParser()
    default_dir = os.path.join(os.environ.get("CMTRF_DATA_DIR", "data"), "ml-100k")
    ap.add_argument("--out-dir", default=default_dir)
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "u.data")
    try:
        text = from_grouplens()
    except Exception as exc:  # network blocked, mirror only
        print(f"grouplens download failed ({exc}); using wheel copy", file=sys.stderr)
        text = from_wheel()
    with open(out, "w") as fh:
        fh.write(text)
    print(f"wrote {out} ({text.count(chr(10))} rows)")


if __name__ == "__main__":
    main()
