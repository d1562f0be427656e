#!/usr/bin/env python3
"""Generate a synthetic trajectory corpus in the seqrec CSV schema.

Usage: make_synthetic_corpus.py OUTDIR [--pois 25] [--users 220] [--seed 7]

Writes OUTDIR/poi.csv and OUTDIR/traj.csv. POIs live in a few
geographic blobs; users walk mostly-nearby unvisited POIs, so shared
(start, length) queries accumulate several distinct ground truths the
way photo-tour corpora do.
"""

import argparse
import math
import random


def haversine_km(lon1, lat1, lon2, lat2):
    r = 6371.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(a))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir")
    ap.add_argument("--pois", type=int, default=25)
    ap.add_argument("--users", type=int, default=220)
    ap.add_argument("--trips-per-user", type=float, default=1.6)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    categories = ["museum", "park", "church", "cafe", "market", "gallery"]
    blobs = [(-4.25, 55.86), (-4.29, 55.85), (-4.27, 55.87)]

    pois = []
    for i in range(args.pois):
        blon, blat = blobs[i % len(blobs)]
        pois.append({
            "poi_id": 100 + i,
            "category": categories[i % len(categories)],
            "lon": blon + rng.gauss(0, 0.01),
            "lat": blat + rng.gauss(0, 0.006),
            "appeal": rng.lognormvariate(0, 0.8),
        })

    length_weights = [(2, 45), (3, 25), (4, 15), (5, 7), (6, 4), (8, 2), (10, 1), (13, 1)]
    lengths = [l for l, w in length_weights for _ in range(w)]

    import os
    os.makedirs(args.outdir, exist_ok=True)
    with open(os.path.join(args.outdir, "poi.csv"), "w") as f:
        f.write("poi_id,category,lon,lat\n")
        for p in pois:
            f.write(f"{p['poi_id']},{p['category']},{p['lon']:.6f},{p['lat']:.6f}\n")

    traj_id = 0
    with open(os.path.join(args.outdir, "traj.csv"), "w") as f:
        f.write("user_id,traj_id,seq_index,poi_id,arrival_ts,departure_ts\n")
        for u in range(args.users):
            trips = 1 + (1 if rng.random() < (args.trips_per_user - 1) else 0)
            for _ in range(trips):
                length = min(rng.choice(lengths), args.pois)
                # Popular starts dominate, like photo corpora.
                start = rng.choices(pois, weights=[p["appeal"] ** 2 for p in pois])[0]
                seq = [start]
                seen = {start["poi_id"]}
                while len(seq) < length:
                    cur = seq[-1]
                    cands = [p for p in pois if p["poi_id"] not in seen]
                    ws = []
                    for p in cands:
                        d = haversine_km(cur["lon"], cur["lat"], p["lon"], p["lat"])
                        ws.append(p["appeal"] * math.exp(-d / 0.8) + 0.02 * rng.random())
                    nxt = rng.choices(cands, weights=ws)[0]
                    seq.append(nxt)
                    seen.add(nxt["poi_id"])
                ts = rng.randrange(1_400_000_000, 1_500_000_000)
                for idx, p in enumerate(seq):
                    stay = rng.randrange(600, 5400)
                    f.write(f"u{u},s{traj_id},{idx},{p['poi_id']},{ts},{ts + stay}\n")
                    ts += stay + rng.randrange(300, 1800)
                traj_id += 1

    print(f"wrote {args.outdir}/poi.csv ({len(pois)} POIs) and "
          f"{args.outdir}/traj.csv ({traj_id} trajectories)")


if __name__ == "__main__":
    main()
