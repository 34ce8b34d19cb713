"""Write the livestock series fixtures used by the validate command.

Flag series: yearly histories 2000-2019 built so that the 2020 value lands in
the reference color. Outlier series: monthly 1994-2016 series at a flat level
(+-5% seeded noise) with the reference outliers inserted at their dates.

    python3 tools/make_sentinel_fixtures.py src/trademl/data
"""

import csv
import sys
from pathlib import Path

import numpy as np

PORK = "Pork, No Util Practice, No Prod Practice, No Physical Attribute, "
CWE = "Million LBS, carcass-weight equivalent"

# (series, statistical_type, unit, history 2000..2019, value for 2020)
FLAG_SERIES = [
    (PORK + "Exports", "Exports", CWE,
     [1287, 1559, 1612, 1717, 2181, 2666, 2995, 3141, 4667, 4094,
      4224, 5196, 5383, 4986, 4857, 5010, 5239, 5632, 5877, 6675], 7148),
    (PORK + "Farm production", "Farm production", CWE,
     [15.1, 14.8, 15.6, 16.0, 15.2, 14.4, 13.7, 13.1, 12.8, 13.3,
      13.0, 12.6, 13.5, 13.8, 14.5, 15.0, 14.8, 13.9, 14.6, 14.1], 14.2),
    (PORK + "Imports", "Imports", CWE,
     [965.5, 950, 1070, 1185, 1099, 1024, 990, 968, 832, 834,
      859, 803, 802, 880, 1011, 1116, 1091, 940, 1010, 980], 965),
    (PORK + "Per capita disappearance, Carcass weight", "Per capita disappearance, carcass weight", "(LBS) Pounds",
     [66.4, 66.8, 67.7, 67.5, 66.5, 66.0, 64.8, 65.9, 65.1, 64.8,
      63.2, 62.7, 63.0, 62.9, 61.8, 65.5, 66.2, 66.9, 67.6, 67.3], 64.1038),
    (PORK + "Per capita disappearance, Retail weight", "Per capita disappearance, retail weight", "(LBS) Pounds",
     [51.2, 50.2, 51.5, 51.8, 51.4, 50.0, 49.1, 50.7, 50.0, 49.9,
      48.9, 48.3, 48.6, 48.5, 47.7, 50.6, 51.0, 51.6, 52.1, 51.9], 49.7445),
]

IMP = "U.S. Cattle imports, "
# (series id, description, [(value, month, year), ...])
OUTLIER_SERIES = [
    ("cattle_imports_total_commerce", IMP + "total",
     [(250488, 12, 2014), (238125, 12, 2013), (279413, 11, 2007), (330750, 11, 2002), (376650, 3, 1995)]),
    ("cattle_imports_total_nass", IMP + "total", [(287087, 3, 1995)]),
    ("cattle_imports_200_320kg", IMP + "200 kilograms to less than 320 kilograms (705 pounds)",
     [(134978, 12, 2014), (142888, 11, 2014)]),
    ("hog_imports", "U.S. Hog imports", [(1105938, 1, 2008)]),
    ("cattle_imports_320kg_plus", IMP + "320 kilograms or more, total", [(178283, 10, 2007)]),
    ("cattle_exports_total", "U.S. Cattle exports, total", [(122307, 10, 2001), (129588, 10, 2000)]),
    ("cattle_exports_other", "U.S. Cattle exports, other", [(118790, 10, 2001)]),
    ("cattle_imports_320kg_slaughter", IMP + "320 kilograms or more, for immediate slaughter", [(138082, 5, 1996)]),
    ("cattle_imports_90_200kg", IMP + "90 kilograms to less than 200 kilograms (440 pounds)", [(196751, 3, 1995)]),
    ("cattle_imports_under_320kg", IMP + "less than 320 kilograms, total", [(252431, 3, 1995)]),
]

HEADER = ["series", "description", "statistical_type", "unit", "timestamp", "value"]


def write_flag_series(path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for series, stype, unit, history, latest in FLAG_SERIES:
            for year, v in zip(range(2000, 2021), [*history, latest]):
                w.writerow([series, series, stype, unit, f"1/1/{year}", v])


def write_outlier_series(path, seed=2020):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for sid, desc, spikes in OUTLIER_SERIES:
            base = 0.4 * min(v for v, _, _ in spikes)
            at = {(y, m): v for v, m, y in spikes}
            for year in range(1994, 2017):
                for month in range(1, 13):
                    v = at.get((year, month))
                    if v is None:
                        v = int(round(base * rng.uniform(0.95, 1.05)))
                    w.writerow([sid, desc, "Imports" if "import" in desc else "Exports", "Head",
                                f"{month}/1/{year}", v])


if __name__ == "__main__":
    out = Path(sys.argv[1])
    write_flag_series(out / "livestock_flag_series.csv")
    write_outlier_series(out / "livestock_outlier_series.csv")
