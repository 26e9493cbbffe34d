#!/usr/bin/env python3
"""Regenerates the bundled sample inputs in data/: a synthetic clear-sky day
(irradiance and ambient temperature at 1-minute cadence) and a 1440-row
relay schedule for the three load banks."""

import math
import pathlib
import sys

DAY = "2019-10-01"


def clear_sky(minute):
    # Sunrise 06:00, sunset 18:00, 980 W/m2 peak.
    h = minute / 60.0
    if h <= 6.0 or h >= 18.0:
        return 0.0
    return 980.0 * math.sin(math.pi * (h - 6.0) / 12.0) ** 1.3


def ambient(minute):
    # 20 degC at 03:00, 31 degC at 15:00.
    h = minute / 60.0
    return 25.5 - 5.5 * math.cos(2.0 * math.pi * (h - 3.0) / 24.0)


def stamp(minute):
    return f"{DAY}T{minute // 60:02d}:{minute % 60:02d}:00Z"


def on(minute, start, end):
    return int(start * 60 <= minute < end * 60)


# Relay columns: LB1 lamps 0-4 and fan 5, LB2 lamps 6-10 and fan 11, LB3 lamps 12-16.
def schedule_row(m):
    row = [0] * 17
    for k in range(3):
        row[k] = on(m, 6.0, 7.0)
    for k in range(4):
        row[k] = row[k] or on(m, 18.0, 22.0)
    row[5] = on(m, 12.0, 16.0)
    for k in range(6, 9):
        row[k] = on(m, 18.5, 23.0)
    row[11] = on(m, 11.0, 17.0)
    for k in range(12, 14):
        row[k] = on(m, 19.0, 23.5)
    for k in range(14, 17):
        row[k] = on(m, 20.0, 21.0)
    return row


def main(out):
    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "clear-sky-irradiance.csv", "w") as f:
        f.write("timestamp,value\n")
        for m in range(1440):
            f.write(f"{stamp(m)},{clear_sky(m):.2f}\n")
    with open(out / "clear-sky-ambient.csv", "w") as f:
        f.write("timestamp,value\n")
        for m in range(1440):
            f.write(f"{stamp(m)},{ambient(m):.2f}\n")
    with open(out / "sample-schedule.txt", "w") as f:
        for m in range(1440):
            f.write(" ".join(str(v) for v in schedule_row(m)) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "data")
