#!/usr/bin/env python3
"""Rebuild data/pima.csv from the 768-row Pima Indians Diabetes table.

The UCI download location has moved several times, so the script tries a
list of mirrors in order and finally falls back to the copy bundled in the
`keel-ds` wheel on PyPI. Physiologically impossible zeros (plasma glucose,
diastolic blood pressure, BMI, skin fold, insulin) are written as empty
cells so that complete-case filtering on the six modelling covariates
leaves 724 rows.
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

MIRRORS = [
    "https://raw.githubusercontent.com/jbrownlee/Datasets/master/pima-indians-diabetes.data.csv",
    "https://archive.ics.uci.edu/ml/machine-learning-databases/pima-indians-diabetes/pima-indians-diabetes.data",
]
HEADER = ["NumPreg", "PGC", "DBP", "Skin", "Insulin", "BMI", "DPF", "AGE", "Diabetes"]
ZERO_IS_MISSING = {"PGC", "DBP", "Skin", "Insulin", "BMI"}


def from_mirrors():
    for url in MIRRORS:
        try:
            with urllib.request.urlopen(url, timeout=20) as resp:
                text = resp.read().decode()
            rows = [line.split(",") for line in text.splitlines() if line.strip()]
            if len(rows) == 768:
                return rows
        except Exception as exc:  # noqa: BLE001
            print(f"mirror {url} failed: {exc}", file=sys.stderr)
    return None


def from_keel_wheel():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "keel-ds==0.2.5", "-d", tmp],
            check=True,
        )
        wheel = next(Path(tmp).glob("keel_ds-*.whl"))
        raw = zipfile.ZipFile(wheel).read("keel_ds/data/balanced/raw/pima.dat").decode()
    rows = []
    for line in raw.splitlines():
        if not line.strip() or line.startswith("@"):
            continue
        fields = [f.strip() for f in line.split(",")]
        fields[-1] = "1" if fields[-1] == "tested_positive" else "0"
        rows.append(fields)
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "pima.csv"))
    args = parser.parse_args()

    rows = from_mirrors() or from_keel_wheel()
    buf = io.StringIO()
    buf.write(",".join(HEADER) + "\n")
    for row in rows:
        cells = []
        for name, value in zip(HEADER, row):
            v = value.strip()
            if name in ZERO_IS_MISSING and float(v) == 0.0:
                v = ""
            cells.append(v)
        buf.write(",".join(cells) + "\n")
    data = buf.getvalue().encode()
    Path(args.out).write_bytes(data)
    print(f"wrote {len(rows)} rows to {args.out}")
    print(f"sha256 {hashlib.sha256(data).hexdigest()}")


if __name__ == "__main__":
    main()
