#!/usr/bin/env python3
"""Convert the METR-LA / PEMS-BAY exports into the canonical dataset format.

Inputs are the widely mirrored files of the DCRNN release:

    metr-la.h5   + adj_mx.pkl          (207 sensors, 5-minute speeds)
    pems-bay.h5  + adj_mx_bay.pkl      (325 sensors, 5-minute speeds)

The script writes an intermediate wide CSV (timestamp, one column per sensor)
and a weighted adjacency CSV, records SHA-256 sums of every input and output
in `checksums.sha256`, and then calls `lptraffic convert`, which imputes
missing readings (zeros are treated as missing) and writes the canonical
directory.

    python3 scripts/convert_public.py --h5 metr-la.h5 --adj adj_mx.pkl \
        --out data/metr-la [--expect-sha256 <h5 digest>]
"""

import argparse
import hashlib
import pickle
import shutil
import subprocess
import sys
from pathlib import Path

import pandas as pd


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_adjacency(path: Path):
    with open(path, "rb") as f:
        try:
            sensor_ids, _id_to_index, adj = pickle.load(f)
        except UnicodeDecodeError:
            f.seek(0)
            sensor_ids, _id_to_index, adj = pickle.load(f, encoding="latin1")
    return [str(s) for s in sensor_ids], adj


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--h5", type=Path, required=True, help="speed table (pandas HDF, key `df`)")
    ap.add_argument("--adj", type=Path, required=True, help="adjacency pickle (ids, id->index, weights)")
    ap.add_argument("--out", type=Path, required=True, help="canonical output directory")
    ap.add_argument("--threshold", type=float, default=0.0, help="edge if weight > threshold")
    ap.add_argument("--expect-sha256", help="abort unless the h5 file has this digest")
    ap.add_argument("--lptraffic", default="lptraffic", help="path to the lptraffic binary")
    args = ap.parse_args()

    digest = sha256(args.h5)
    if args.expect_sha256 and digest != args.expect_sha256.lower():
        print(f"checksum mismatch for {args.h5}: {digest}", file=sys.stderr)
        return 1

    work = args.out.with_name(args.out.name + ".raw")
    work.mkdir(parents=True, exist_ok=True)

    df = pd.read_hdf(args.h5)
    df.columns = [str(c) for c in df.columns]
    ids, adj = load_adjacency(args.adj)
    missing = [s for s in ids if s not in df.columns]
    if missing:
        print(f"sensors in adjacency but not in table: {missing[:5]}", file=sys.stderr)
        return 1
    df = df[ids]
    speed_csv = work / "speed.csv"
    df.to_csv(speed_csv, index_label="time")

    adj_csv = work / "adjacency.csv"
    pd.DataFrame(adj, index=ids, columns=ids).to_csv(adj_csv)

    cmd = [
        args.lptraffic, "convert", "--format", "wide",
        "--input", f"speed={speed_csv}",
        "--adjacency", str(adj_csv),
        "--threshold", str(args.threshold),
        "--zero-is-missing",
        "--interval-minutes", "5",
        "--out", str(args.out),
    ]
    if shutil.which(args.lptraffic) is None and not Path(args.lptraffic).exists():
        print("lptraffic binary not found; run:\n  " + " ".join(cmd), file=sys.stderr)
        return 1
    subprocess.run(cmd, check=True)

    sums = [(digest, args.h5.name), (sha256(args.adj), args.adj.name)]
    sums += [(sha256(p), p.name) for p in sorted(args.out.iterdir()) if p.is_file() and p.name != "checksums.sha256"]
    with open(args.out / "checksums.sha256", "w") as f:
        for d, name in sums:
            f.write(f"{d}  {name}\n")
    print(f"wrote {args.out} ({len(ids)} sensors, {len(df)} steps)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
