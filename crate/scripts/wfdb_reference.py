"""Dump reference values for one WFDB record with the PhysioNet `wfdb` package.

    python3 scripts/wfdb_reference.py <record dir> <record name> <output dir>

Writes <name>_signals.csv (raw ADC values, one row per sample, one column
per channel) and <name>_annotations.csv (sample,symbol). The acceptance
suite compares the Rust reader against these files.
"""

import csv
import os
import sys

import wfdb


def main():
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    src, name, out = sys.argv[1:]
    os.makedirs(out, exist_ok=True)
    record = wfdb.rdrecord(os.path.join(src, name), physical=False)
    with open(os.path.join(out, f"{name}_signals.csv"), "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(record.d_signal.tolist())
    ann = wfdb.rdann(os.path.join(src, name), "atr")
    with open(os.path.join(out, f"{name}_annotations.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for sample, symbol in zip(ann.sample, ann.symbol):
            w.writerow([int(sample), symbol])


if __name__ == "__main__":
    main()
