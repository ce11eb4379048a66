"""Regenerate kdd_fixture.csv: 1000 synthetic rows in the raw 42-field KDD Cup 99 layout."""
import csv
import os

import numpy as np

SERVICES = ["http"] * 50 + ["smtp"] * 14 + ["ftp_data"] * 9 + ["ftp"] * 8 + \
           ["auth", "pop_3", "telnet", "domain", "finger", "IRC", "X11", "urp_i"] * 2 + ["private"] * 4
ATTACKS = ["back.", "smurf.", "neptune.", "guess_passwd.", "warezclient.", "ipsweep."]


def main(path=os.path.join(os.path.dirname(__file__), "kdd_fixture.csv"), n=1000, seed=7):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for _ in range(n):
            row = [0] * 42
            row[0] = int(rng.choice([0, rng.integers(1, 5000), rng.integers(1, 5000), rng.integers(1, 5000)]))
            row[1] = str(rng.choice(["tcp", "udp", "icmp"]))
            row[2] = str(rng.choice(SERVICES))
            row[3] = str(rng.choice(["SF", "S0", "REJ"]))
            row[4] = int(rng.integers(0, 100000))
            row[5] = int(rng.choice([0, rng.integers(0, 1000000), rng.integers(0, 1000000), rng.integers(0, 1000000)]))
            row[11] = int(rng.random() < 0.7)
            for k in range(12, 41):
                row[k] = round(float(rng.random()), 2) if k >= 24 else int(rng.integers(0, 3))
            row[41] = str(rng.choice(ATTACKS)) if rng.random() < 0.08 else "normal."
            w.writerow(row)


if __name__ == "__main__":
    main()
