"""Prepare daily weather-station curves for `fplsr fit` and the acceptance suite.

convert: reads a long-format daily export (one row per station and day) and
writes solar.csv, wind.csv and temperature.csv in column layout. Every
station's years are averaged into one 365-day curve; 29 February is dropped.

synthetic: writes look-alike files of the same shape from a seeded generator.

    python python/station_data.py convert export.csv out/ \
        --station "Station Name" --date Date \
        --solar "Total Solar Rad" --wind "Avg Wind Speed" --temperature "Avg Air Temp"
    python python/station_data.py synthetic out/
"""

import argparse
import csv
import datetime as dt
import math
import os
import random
from collections import defaultdict

VARIABLES = ("solar", "wind", "temperature")


def day_of_year(d):
    """1..365, with 29 February mapped to None."""
    if d.month == 2 and d.day == 29:
        return None
    n = d.timetuple().tm_yday
    if d.month > 2 and d.year % 4 == 0 and (d.year % 100 != 0 or d.year % 400 == 0):
        n -= 1
    return n


def write_table(path, stations, curves):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["day"] + stations)
        for day in range(365):
            w.writerow([day + 1] + [repr(curves[s][day]) for s in stations])


def convert(args):
    cols = {"solar": args.solar, "wind": args.wind, "temperature": args.temperature}
    sums = {v: defaultdict(lambda: [0.0] * 365) for v in VARIABLES}
    counts = {v: defaultdict(lambda: [0] * 365) for v in VARIABLES}
    order = []
    with open(args.input, newline="") as f:
        for row in csv.DictReader(f):
            station = row[args.station].strip()
            if station not in order:
                order.append(station)
            day = day_of_year(dt.datetime.strptime(row[args.date].strip(), args.date_format).date())
            if day is None:
                continue
            for v, col in cols.items():
                cell = row[col].strip()
                if cell == "" or cell.upper() in ("NA", "NAN", "M"):
                    continue
                sums[v][station][day - 1] += float(cell)
                counts[v][station][day - 1] += 1

    kept = []
    for s in order:
        if all(all(counts[v][s]) for v in VARIABLES):
            kept.append(s)
        else:
            print(f"skipping {s}: some day has no observations")
    os.makedirs(args.out, exist_ok=True)
    for v in VARIABLES:
        curves = {s: [sums[v][s][d] / counts[v][s][d] for d in range(365)] for s in kept}
        write_table(os.path.join(args.out, f"{v}.csv"), kept, curves)
    print(f"wrote {len(kept)} stations to {args.out}")


def synthetic(args):
    rng = random.Random(args.seed)
    stations = [f"station_{i + 1:02d}" for i in range(args.stations)]
    curves = {v: {} for v in VARIABLES}
    for s in stations:
        lat = rng.gauss(0.0, 1.0)
        windy = rng.gauss(0.0, 1.0)
        for v in VARIABLES:
            curves[v][s] = []
        for day in range(365):
            season = math.cos(2 * math.pi * (day - 172) / 365)
            temp = 6 + 17 * season - 1.5 * lat + rng.gauss(0, 2.5)
            wind = 4.5 - 0.8 * season + 0.6 * windy + rng.gauss(0, 0.7)
            solar = 13 + 10 * season + 0.25 * (temp - 6) - 0.4 * (wind - 4.5) + rng.gauss(0, 2.0)
            curves["temperature"][s].append(temp)
            curves["wind"][s].append(wind)
            curves["solar"][s].append(solar)
    os.makedirs(args.out, exist_ok=True)
    for v in VARIABLES:
        write_table(os.path.join(args.out, f"{v}.csv"), stations, curves[v])
    print(f"wrote {len(stations)} synthetic stations to {args.out}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("convert")
    c.add_argument("input")
    c.add_argument("out")
    c.add_argument("--station", default="Station Name")
    c.add_argument("--date", default="Date")
    c.add_argument("--date-format", default="%Y-%m-%d")
    c.add_argument("--solar", default="Total Solar Rad")
    c.add_argument("--wind", default="Avg Wind Speed")
    c.add_argument("--temperature", default="Avg Air Temp")
    c.set_defaults(func=convert)

    s = sub.add_parser("synthetic")
    s.add_argument("out")
    s.add_argument("--stations", type=int, default=70)
    s.add_argument("--seed", type=int, default=1)
    s.set_defaults(func=synthetic)

    args = p.parse_args()
    args.func(args)


if __name__ == "__main__":
    main()
