"""Rerun the full pipeline on NYC TLC 2013 trip_data files.

    python scripts/nyc_tlc_rerun.py trip_data_1.csv [--train-days 5] [--test-days 5]
        [--packages 1000] [--extraT 3600] [--od-sampling uniform] [--out tlc_runs]

Stations are clustered from the first ``--train-days`` weekdays of the file,
edges estimated on the same days, and every policy is replayed on each of the
following ``--test-days`` weekdays (births 08:00-18:00 local time).  TLC
timestamps are local New York time and are kept as-is, so slots line up
with the local clock.  Prints one summary line per run and a table of means.
"""
import argparse
import datetime as dt
import logging
import pathlib

import numpy as np

from crowdexpress.io import read_tlc
from crowdexpress.model import is_workday
from crowdexpress.network import build_network, reference_paths
from crowdexpress.simulator import WorkloadSpec, replay, write_run

POLICIES = ("maxProb", "DesCloser", "FCFS", "Direct")
DAY = 86_400.0


def weekdays(records):
    first = dt.datetime.fromtimestamp(min(r.start_time for r in records), dt.timezone.utc).date()
    last = dt.datetime.fromtimestamp(max(r.start_time for r in records), dt.timezone.utc).date()
    out, d = [], first
    while d <= last:
        if is_workday(d):
            out.append(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp())
        d += dt.timedelta(days=1)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("files", nargs="+", help="TLC trip_data CSV files")
    ap.add_argument("--limit", type=int, help="rows to read per file")
    ap.add_argument("--train-days", type=int, default=5)
    ap.add_argument("--test-days", type=int, default=5)
    ap.add_argument("--packages", type=int, default=1000)
    ap.add_argument("--extraT", type=float, default=3600.0)
    ap.add_argument("--od-sampling", default="uniform")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="tlc_runs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    records = []
    for f in args.files:
        recs, skipped = read_tlc(f, args.limit)
        logging.info("%s: %d trips, %d rows skipped", f, len(recs), skipped)
        records.extend(recs)
    days = weekdays(records)
    if len(days) < args.train_days + 1:
        raise SystemExit(f"need at least {args.train_days + 1} weekdays, found {len(days)}")
    train_end = days[args.train_days - 1] + DAY
    train = [r for r in records if r.start_time < train_end]
    net = build_network(train)
    refs = reference_paths(net)
    logging.info("network: %d stations, %d edges", len(net), len(net.edges))

    out = pathlib.Path(args.out)
    rates = {p: [] for p in POLICIES}
    for k, day in enumerate(days[args.train_days:args.train_days + args.test_days]):
        stream = [r for r in records if day + 7 * 3600 <= r.start_time < day + DAY]
        wl = WorkloadSpec(args.packages, (day + 8 * 3600, day + 18 * 3600), args.od_sampling,
                          args.extraT, seed=args.seed + k)
        for p in POLICIES:
            rep = replay(stream, wl, p, net, refs)
            write_run(rep, out / f"day{k}" / p)
            rates[p].append(rep.success_rate)
            print(f"day {k} {p:<10} success {rep.success_rate:.3f} relays {rep.mean_relays:.2f} "
                  f"throughput/day {rep.throughput_per_day:.0f}")
    for p, v in rates.items():
        print(f"{p:<10} mean success {np.mean(v):.3f} over {len(v)} days")


if __name__ == "__main__":
    main()
