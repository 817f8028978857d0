"""Materialise the benchmark files that can be obtained from PyPI wheels.

    python scripts/prepare_data.py --sktime-wheel sktime-*.whl --responsibly-wheel responsibly-*.whl

Writes into $HAPSTREAM_DATA_DIR (default: ./data):

* italy_power.csv  -- UCR ItalyPowerDemand, TRAIN rows followed by TEST rows
                      (1096 x 24), from the copy bundled with sktime.
* german.csv       -- UCI Statlog German credit (1000 rows) from the copy
                      bundled with ``responsibly``, re-encoded to 24 numeric
                      features: 19 ordinal/integer columns plus 5 purpose
                      indicators.  This is our own encoding, not the
                      Strathclyde ``german.data-numeric`` file.

svmguide3, magic04 and a8a are not redistributed on PyPI; download them from
the URLs listed in ``hapstream.data.DATASETS``.  Either wheel may also be
omitted when the package is installed.
"""
import argparse
import csv
import importlib.resources
import zipfile
from pathlib import Path

from hapstream.data import data_dir

ITALY_MEMBERS = ("sktime/datasets/data/ItalyPowerDemand/ItalyPowerDemand_TRAIN.ts",
                 "sktime/datasets/data/ItalyPowerDemand/ItalyPowerDemand_TEST.ts")
GERMAN_MEMBER = "responsibly/dataset/german/german.data"

# german.data columns (0-based) -> feature, in output order
ORDINAL = {0: "status", 2: "credit_history", 5: "savings", 6: "employment",
           8: "status_sex", 9: "other_debtors", 11: "property", 13: "other_installment",
           14: "housing", 16: "job", 18: "telephone", 19: "foreign_worker"}
NUMERIC = {1: "duration", 4: "amount_100", 7: "installment_rate", 10: "residence",
           12: "age", 15: "existing_credits", 17: "liable_people"}
PURPOSES = ("A40", "A41", "A42", "A43", "A49")


def _read_member(wheel, member, package_path):
    if wheel:
        with zipfile.ZipFile(wheel) as zf:
            return zf.read(member).decode()
    pkg, _, rest = package_path.partition("/")
    return importlib.resources.files(pkg).joinpath(rest).read_text()


def italy_rows(wheel):
    rows = []
    for member in ITALY_MEMBERS:
        text = _read_member(wheel, member, member)
        body = text.split("@data", 1)[1]
        for line in body.split():
            values, label = line.rsplit(":", 1)
            rows.append([float(v) for v in values.split(",")] + [int(label) - 1])
    return rows


def _ordinal(code):
    # "A34" -> 4, "A121" -> 1, "A201" -> 1: level digit within the attribute
    return int(code[-1])


def german_rows(wheel):
    text = _read_member(wheel, GERMAN_MEMBER, GERMAN_MEMBER)
    rows = []
    for line in text.splitlines():
        fields = line.split()
        if not fields:
            continue
        feats = []
        for col in sorted(set(ORDINAL) | set(NUMERIC)):
            v = fields[col]
            if col == 4:
                feats.append(round(int(v) / 100))
            elif col in NUMERIC:
                feats.append(int(v))
            else:
                feats.append(_ordinal(v))
        feats.extend(int(fields[3] == p) for p in PURPOSES)
        rows.append(feats + [int(fields[20]) - 1])
    return rows


def write_csv(path, rows, width):
    header = [f"f{i}" for i in range(width)] + ["label"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows, {width} features)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--sktime-wheel")
    ap.add_argument("--responsibly-wheel")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    out = args.out or data_dir()
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "italy_power.csv", italy_rows(args.sktime_wheel), 24)
    write_csv(out / "german.csv", german_rows(args.responsibly_wheel), 24)


if __name__ == "__main__":
    main()
